"""Caption-based moment retrieval over first-person lifelog image streams.

The pipeline turns a day-ordered stream of wearable-camera frames into
text captions at several granularities, indexes captions and queries in a
shared text-embedding space, and retrieves top-K moment frames with
optional channel fusion and LLM reranking.
"""

__version__ = "0.1.0"
