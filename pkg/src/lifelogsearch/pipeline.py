"""Loading built artifacts and answering queries across retrieval methods.

This is the seam shared by the CLI and the HTTP service: artifacts are
loaded once (corpus, caption store, per-channel indices, clients) and every
query runs over the immutable loaded state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import textindex
from .captioning import Caption, CaptionGranularity, load_captions
from .clients import RerankerClient, TextEmbedderClient
from .config import PipelineConfig, make_reranker, make_text_embedder
from .corpus import Corpus, FrameId, ingest_manifest
from .retrieval import (
    FrameScoreMap,
    RetrievalRun,
    combine_channels,
    frame_scores,
    rerank_llm,
    retrieve_topk,
)
from .textindex import CaptionIndex

logger = logging.getLogger(__name__)

#: CLI/API channel names to caption granularities.
CHANNELS = {
    "single": CaptionGranularity.SINGLE,
    "collective": CaptionGranularity.COLLECTIVE,
    "fine": CaptionGranularity.FINE_GRAINED,
    "coarse": CaptionGranularity.COARSE_GRAINED,
}

METHODS = ("single", "collective", "fine", "coarse", "combination", "rerank")


class ArtifactError(RuntimeError):
    """A required artifact is missing or unreadable; build stages first."""


@dataclass
class Artifacts:
    """Immutable pipeline state backing queries."""

    config: PipelineConfig
    corpus: Corpus
    indices: dict[str, CaptionIndex]
    captions_by_id: dict[str, Caption]
    captions_by_frame: dict[FrameId, list[Caption]]
    text_embedder: TextEmbedderClient
    reranker: RerankerClient | None = None

    @classmethod
    def load(cls, config: PipelineConfig) -> "Artifacts":
        if not Path(config.paths.manifest).is_file():
            raise ArtifactError(f"manifest not found: {config.paths.manifest}")
        corpus = ingest_manifest(config.paths.manifest)

        indices: dict[str, CaptionIndex] = {}
        for channel in CHANNELS:
            if (Path(config.paths.index_dir) / f"{channel}.vemb").is_file():
                indices[channel] = textindex.load_index(config.paths.index_dir, channel)
        if not indices:
            raise ArtifactError(
                f"no caption indices under {config.paths.index_dir}; "
                f"run 'embed --target captions' first"
            )

        captions_by_id: dict[str, Caption] = {}
        captions_by_frame: dict[FrameId, list[Caption]] = {}
        store = Path(config.paths.caption_store)
        if store.exists():
            for caption in load_captions(store):
                captions_by_id[caption.caption_id] = caption
                for fid in caption.frame_ids:
                    captions_by_frame.setdefault(fid, []).append(caption)

        return cls(
            config=config,
            corpus=corpus,
            indices=indices,
            captions_by_id=captions_by_id,
            captions_by_frame=captions_by_frame,
            text_embedder=make_text_embedder(config),
            reranker=make_reranker(config),
        )

    def available_methods(self) -> list[str]:
        methods = [channel for channel in CHANNELS if channel in self.indices]
        a, b = self.config.params.combination
        if a in self.indices and b in self.indices:
            methods.append("combination")
        if self.config.params.rerank_channel in self.indices and self.reranker is not None:
            methods.append("rerank")
        return methods

    def _index(self, channel: str) -> CaptionIndex:
        index = self.indices.get(channel)
        if index is None:
            raise ArtifactError(f"index for channel {channel!r} is not built")
        return index

    def channel_scores(self, channel: str, query_text: str) -> FrameScoreMap:
        index = self._index(channel)
        query_vec = textindex.embed_query(
            self.text_embedder, query_text, use_prefix=self.config.params.query_prefix
        )
        return frame_scores(index, query_vec, channel=channel)

    def run_query(
        self,
        query_text: str,
        method: str,
        k: int | None = None,
        topic_id: str = "adhoc",
        description: str = "",
    ) -> RetrievalRun:
        """Answer one query with the named retrieval method."""
        params = self.config.params
        k = k or params.k
        if method in CHANNELS:
            run = retrieve_topk(
                self.channel_scores(method, query_text), k, topic_id=topic_id, method=method
            )
        elif method == "combination":
            a, b = params.combination
            fused = combine_channels(
                self.channel_scores(a, query_text),
                self.channel_scores(b, query_text),
                weight=params.fusion_weight,
            )
            run = retrieve_topk(fused, k, topic_id=topic_id, method="combination")
        elif method == "rerank":
            if self.reranker is None:
                raise ArtifactError("no reranker client configured")
            index = self._index(params.rerank_channel)
            query_vec = textindex.embed_query(
                self.text_embedder, query_text, use_prefix=params.query_prefix
            )
            run = rerank_llm(
                self.reranker,
                index,
                query_vec,
                topic_description=description or query_text,
                pool_size=min(params.rerank_pool, max(len(index), k)),
                out_k=k,
                topic_id=topic_id,
            )
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        return run
