"""Near-duplicate frame filtering with vision-embedding similarity.

Consecutive frames of one segment are scanned against the last kept frame
(the anchor): a frame whose cosine similarity to the anchor reaches the
threshold is dropped as redundant, otherwise it is kept and becomes the new
anchor. The first frame is always kept. Anchor-based comparison (rather
than pairwise-adjacent) keeps slow scene drift from leaking long redundant
runs past the filter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clients import VisionEmbedderClient
from .corpus import Frame, FrameId

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameEmbedding:
    """Unit-normalized vision embedding of one frame."""

    frame_id: FrameId
    vector: np.ndarray


def normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float32)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return vector / norm


def embed_frames(
    client: VisionEmbedderClient, frames: Sequence[Frame], base_dir: Path | None = None
) -> list[FrameEmbedding]:
    """Embed frames, normalizing here; unreadable images are skipped."""
    embeddings: list[FrameEmbedding] = []
    for frame in frames:
        image = (base_dir / frame.image_path) if base_dir else Path(frame.image_path)
        try:
            raw = client.embed_image(image)
        except OSError as exc:
            logger.warning("frame %s: image unreadable, skipping: %s", frame.id, exc)
            continue
        embeddings.append(FrameEmbedding(frame_id=frame.id, vector=normalize(raw)))
    return embeddings


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (norm_a * norm_b))


def filter_frames(
    frames: Sequence[Frame],
    embeddings: Mapping[FrameId, FrameEmbedding],
    threshold: float,
) -> list[Frame]:
    """Drop near-duplicate frames from one segment's chronological run.

    A frame with cosine >= threshold against the anchor is dropped; a kept
    frame with an embedding becomes the new anchor. Frames without an
    embedding are kept unconditionally (conservative) and leave the anchor
    unchanged.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    kept: list[Frame] = []
    anchor: np.ndarray | None = None
    for frame in frames:
        embedding = embeddings.get(frame.id)
        if embedding is None:
            logger.warning("frame %s has no embedding; kept unconditionally", frame.id)
            kept.append(frame)
            continue
        if anchor is not None and cosine_similarity(anchor, embedding.vector) >= threshold:
            continue
        kept.append(frame)
        anchor = embedding.vector
    return kept
