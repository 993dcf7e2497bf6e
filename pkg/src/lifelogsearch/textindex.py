"""Shared text-embedding space over captions, with exact top-N search.

Captions and user queries are embedded by the same client; caption text is
prefixed with an experience marker before embedding to sharpen matching
against experience-style queries. Search is an exhaustive exact scan (dot
product over unit vectors): at lifelog scale that is a few hundred thousand
multiply-adds per query and keeps evaluation fully reproducible.

Persistence: vectors go through the shared binary vector format, caption
metadata and frame timestamps into a JSON sidecar next to it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import vecstore
from .captioning import Caption, CaptionGranularity, caption_to_json, _caption_from_json
from .clients import TextEmbedderClient, TransportError
from .corpus import Corpus, FrameId
from .filtering import normalize

logger = logging.getLogger(__name__)

EXPERIENCE_PREFIX = "The individual’s experience: "

#: Granularities embedded by default; batch summaries stay out of the index.
DEFAULT_INDEXED_GRANULARITIES = frozenset(
    {
        CaptionGranularity.SINGLE,
        CaptionGranularity.COLLECTIVE,
        CaptionGranularity.FINE_GRAINED,
        CaptionGranularity.COARSE_GRAINED,
    }
)

_FAR_FUTURE = datetime.max.replace(tzinfo=timezone.utc)


class CaptionIndexError(ValueError):
    """Index construction or search violated a contract."""


@dataclass(frozen=True)
class RankedCaption:
    caption_id: str
    score: float
    rank: int


@dataclass
class CaptionIndex:
    """Immutable searchable matrix of unit caption vectors plus metadata."""

    caption_ids: list[str]
    matrix: np.ndarray  # shape (n, dimension), unit rows
    dimension: int
    caption_meta: dict[str, Caption]
    embedder_name: str
    frame_times: dict[FrameId, datetime] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.caption_ids)

    def vector(self, caption_id: str) -> np.ndarray:
        return self.matrix[self.caption_ids.index(caption_id)]

    def earliest_time(self, caption_id: str) -> datetime:
        caption = self.caption_meta[caption_id]
        times = [self.frame_times[fid] for fid in caption.frame_ids if fid in self.frame_times]
        return min(times) if times else _FAR_FUTURE


def embed_caption(
    client: TextEmbedderClient, caption: Caption, use_prefix: bool = True
) -> np.ndarray:
    """Embed one caption's text (experience prefix applied exactly once)."""
    text = EXPERIENCE_PREFIX + caption.text if use_prefix else caption.text
    return normalize(client.embed_text(text))


def embed_query(client: TextEmbedderClient, query_text: str, use_prefix: bool = True) -> np.ndarray:
    """Embed a user query into the caption space.

    Queries get the same experience prefix by default for symmetry with the
    captions; pass use_prefix=False to embed them bare.
    """
    if not query_text.strip():
        raise ValueError("query text is empty")
    text = EXPERIENCE_PREFIX + query_text if use_prefix else query_text
    return normalize(client.embed_text(text))


def build_index(
    captions: list[Caption],
    client: TextEmbedderClient,
    granularities: frozenset[CaptionGranularity] | set[CaptionGranularity] = DEFAULT_INDEXED_GRANULARITIES,
    corpus: Corpus | None = None,
    use_prefix: bool = True,
    max_attempts: int = 3,
) -> CaptionIndex:
    """Embed and index the captions matching the granularity filter.

    Captions whose embedding call keeps failing are excluded with a warning.
    Frame timestamps (when a corpus is supplied) feed deterministic
    tie-breaking in search.
    """
    if not granularities:
        raise CaptionIndexError("granularity filter must be non-empty")
    selected = [c for c in captions if c.granularity in granularities]
    ids: list[str] = []
    vectors: list[np.ndarray] = []
    meta: dict[str, Caption] = {}
    dimension: int | None = None
    for caption in selected:
        if caption.caption_id in meta:
            raise CaptionIndexError(f"duplicate caption id {caption.caption_id!r}")
        vector = None
        for attempt in range(max_attempts):
            try:
                vector = embed_caption(client, caption, use_prefix=use_prefix)
                break
            except TransportError as exc:
                logger.warning(
                    "embedding %s failed (attempt %d/%d): %s",
                    caption.caption_id, attempt + 1, max_attempts, exc,
                )
        if vector is None:
            logger.warning("caption %s excluded from index", caption.caption_id)
            continue
        if dimension is None:
            dimension = int(vector.shape[0])
        elif vector.shape[0] != dimension:
            raise CaptionIndexError(
                f"caption {caption.caption_id!r}: dimension {vector.shape[0]} != {dimension}"
            )
        ids.append(caption.caption_id)
        vectors.append(vector)
        meta[caption.caption_id] = caption

    dimension = dimension if dimension is not None else client.dimension
    matrix = (
        np.vstack(vectors).astype(np.float32)
        if vectors
        else np.zeros((0, dimension), dtype=np.float32)
    )
    frame_times: dict[FrameId, datetime] = {}
    if corpus is not None:
        needed = {fid for caption in meta.values() for fid in caption.frame_ids}
        frame_times = {
            fid: corpus.frames[fid].timestamp for fid in needed if fid in corpus.frames
        }
    return CaptionIndex(
        caption_ids=ids,
        matrix=matrix,
        dimension=dimension,
        caption_meta=meta,
        embedder_name=client.model_name,
        frame_times=frame_times,
    )


def search(index: CaptionIndex, query_vec: np.ndarray, n: int) -> list[RankedCaption]:
    """Exact top-n captions by dot product with deterministic tie-breaking.

    Ties break by earliest frame timestamp of the caption, then caption id.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    query_vec = np.asarray(query_vec, dtype=np.float32)
    if query_vec.shape != (index.dimension,):
        raise CaptionIndexError(
            f"query dimension {query_vec.shape} does not match index ({index.dimension},)"
        )
    if len(index) == 0:
        return []
    # einsum keeps per-row accumulation order identical across rows, so
    # equal vectors score bit-identically and ties actually tie
    scores = np.einsum("ij,j->i", index.matrix, query_vec)
    if n < len(index):
        # every entry scoring >= the n-th largest value can reach the top-n;
        # anything below cannot, so the fine sort only touches candidates
        nth_largest = np.partition(scores, len(scores) - n)[len(scores) - n]
        candidates = np.flatnonzero(scores >= nth_largest).tolist()
    else:
        candidates = range(len(index))
    order = sorted(
        candidates,
        key=lambda i: (
            -scores[i],
            index.earliest_time(index.caption_ids[i]),
            index.caption_ids[i],
        ),
    )
    return [
        RankedCaption(caption_id=index.caption_ids[i], score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order[:n], start=1)
    ]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_index(index: CaptionIndex, directory: str | Path, name: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vecstore.save_vectors(
        directory / f"{name}.vemb",
        [(cid, index.matrix[i]) for i, cid in enumerate(index.caption_ids)],
    )
    sidecar = {
        "embedder": index.embedder_name,
        "dimension": index.dimension,
        "captions": [caption_to_json(index.caption_meta[cid]) for cid in index.caption_ids],
        "frame_times": {fid: ts.isoformat() for fid, ts in index.frame_times.items()},
    }
    (directory / f"{name}.meta.json").write_text(
        json.dumps(sidecar, ensure_ascii=False, indent=2), encoding="utf-8"
    )


def load_index(directory: str | Path, name: str) -> CaptionIndex:
    directory = Path(directory)
    dim, entries = vecstore.load_vectors(directory / f"{name}.vemb")
    sidecar = json.loads((directory / f"{name}.meta.json").read_text(encoding="utf-8"))
    meta = {
        record["caption_id"]: _caption_from_json(record, f"{name}.meta.json")
        for record in sidecar["captions"]
    }
    ids = [cid for cid, _ in entries]
    missing = [cid for cid in ids if cid not in meta]
    if missing:
        raise CaptionIndexError(f"{name}: vectors without metadata: {missing[:3]}")
    matrix = (
        np.vstack([vec for _, vec in entries]).astype(np.float32)
        if entries
        else np.zeros((0, dim), dtype=np.float32)
    )
    frame_times = {
        fid: datetime.fromisoformat(raw) for fid, raw in sidecar.get("frame_times", {}).items()
    }
    return CaptionIndex(
        caption_ids=ids,
        matrix=matrix,
        dimension=dim if entries else int(sidecar["dimension"]),
        caption_meta=meta,
        embedder_name=sidecar["embedder"],
        frame_times=frame_times,
    )
