"""Frame retrieval: caption-to-frame score expansion, fusion, reranking.

Caption similarity scores expand to the frames each caption covers (a frame
covered by several captions of one channel takes the maximum). Two channels
fuse at the frame level by averaging their scores over the frames both
channels cover. Optionally an LLM reranker reorders the top caption pool
before expansion.

Run files are TREC-style text, one line per retrieved frame:
    topicId Q0 frameId rank score methodTag
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .clients import RerankerClient
from .corpus import FrameId
from .evaluation import Qrels
from .textindex import CaptionIndex, search

logger = logging.getLogger(__name__)

_FAR_FUTURE = datetime.max.replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class FrameScore:
    score: float
    provenance: tuple[str, ...]  # caption ids that produced the score
    timestamp: datetime | None = None


@dataclass
class FrameScoreMap:
    """Per-channel frame scores for one query."""

    channel: str
    scores: dict[FrameId, FrameScore]

    def ranking(self) -> list[FrameId]:
        """All frames best-first, with the shared deterministic tie-break."""
        return sorted(self.scores, key=lambda fid: _sort_key(fid, self.scores[fid]))

    def rank_of(self, frame_id: FrameId) -> int:
        """1-based rank of a frame in this channel's full ranking."""
        return self.ranking().index(frame_id) + 1


@dataclass(frozen=True)
class ScoredFrame:
    frame_id: FrameId
    score: float
    provenance: tuple[str, ...]


@dataclass
class RetrievalRun:
    topic_id: str
    method: str
    ranked_frames: list[ScoredFrame]
    k: int

    def frame_ids(self) -> list[FrameId]:
        return [sf.frame_id for sf in self.ranked_frames]


def _sort_key(frame_id: FrameId, fs: FrameScore):
    return (-fs.score, fs.timestamp or _FAR_FUTURE, frame_id)


def frame_scores(index: CaptionIndex, query_vec: np.ndarray, channel: str | None = None) -> FrameScoreMap:
    """Score every frame covered by the index's captions against a query.

    Each caption's similarity propagates to all its frames; where captions
    overlap, a frame keeps the maximum score and that caption as provenance.
    """
    query_vec = np.asarray(query_vec, dtype=np.float32)
    if channel is None:
        granularities = sorted({c.granularity.value for c in index.caption_meta.values()})
        channel = "+".join(granularities) if granularities else "empty"
    scores: dict[FrameId, FrameScore] = {}
    if len(index) == 0:
        return FrameScoreMap(channel=channel, scores=scores)
    # row-consistent accumulation: equal caption vectors get equal scores
    similarities = np.einsum("ij,j->i", index.matrix, query_vec)
    for i, caption_id in enumerate(index.caption_ids):
        caption = index.caption_meta[caption_id]
        score = float(similarities[i])
        for fid in caption.frame_ids:
            current = scores.get(fid)
            if current is None or score > current.score:
                scores[fid] = FrameScore(
                    score=score,
                    provenance=(caption_id,),
                    timestamp=index.frame_times.get(fid),
                )
    return FrameScoreMap(channel=channel, scores=scores)


def retrieve_topk(
    scores: FrameScoreMap, k: int, topic_id: str = "", method: str | None = None
) -> RetrievalRun:
    """Top-k frames by score, ties broken by timestamp then frame id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    entries = scores.scores
    if k < len(entries):
        # only frames scoring >= the k-th largest value can reach the top-k
        # (boundary ties included), so the fine sort stays small
        frame_ids = list(entries)
        values = np.fromiter(
            (entries[fid].score for fid in frame_ids), dtype=np.float64, count=len(frame_ids)
        )
        nth_largest = np.partition(values, len(values) - k)[len(values) - k]
        candidates = [frame_ids[i] for i in np.flatnonzero(values >= nth_largest)]
    else:
        candidates = list(entries)
    ordered = sorted(candidates, key=lambda fid: _sort_key(fid, entries[fid]))[:k]
    return RetrievalRun(
        topic_id=topic_id,
        method=method if method is not None else scores.channel,
        ranked_frames=[
            ScoredFrame(
                frame_id=fid,
                score=scores.scores[fid].score,
                provenance=scores.scores[fid].provenance,
            )
            for fid in ordered
        ],
        k=k,
    )


def combine_channels(a: FrameScoreMap, b: FrameScoreMap, weight: float = 0.5) -> FrameScoreMap:
    """Fuse two channels by weighted score averaging at the frame level.

    Only frames present in both channels survive (an average of one number
    is ill-defined); provenance concatenates both channels' captions. The
    default weight 0.5 is the plain mean.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {weight}")
    combined: dict[FrameId, FrameScore] = {}
    for fid, fs_a in a.scores.items():
        fs_b = b.scores.get(fid)
        if fs_b is None:
            continue
        combined[fid] = FrameScore(
            score=weight * fs_a.score + (1.0 - weight) * fs_b.score,
            provenance=fs_a.provenance + fs_b.provenance,
            timestamp=fs_a.timestamp or fs_b.timestamp,
        )
    return FrameScoreMap(channel=f"{a.channel}x{b.channel}", scores=combined)


@dataclass(frozen=True)
class ReplacementDetail:
    frame_id: FrameId
    channel_rank: int
    combined_rank: int
    relevant: bool


@dataclass
class ReplacementReport:
    positive: int
    negative: int
    details: list[ReplacementDetail]


def replacement_effects(
    channel_a: FrameScoreMap,
    combined: FrameScoreMap,
    qrels: Qrels,
    topic_id: str,
    k: int,
) -> ReplacementReport:
    """Count frames pulled into the combined top-k from outside channel A's.

    Each newcomer is a positive replacement effect if relevant for the
    topic, negative otherwise; details carry both ranks for inspection.
    """
    if topic_id not in qrels.judgments:
        raise KeyError(f"topic {topic_id!r} not present in qrels")
    a_ranking = channel_a.ranking()
    combined_ranking = combined.ranking()
    a_topk = set(a_ranking[:k])
    a_rank = {fid: i + 1 for i, fid in enumerate(a_ranking)}
    details: list[ReplacementDetail] = []
    positive = negative = 0
    for position, fid in enumerate(combined_ranking[:k], start=1):
        if fid in a_topk:
            continue
        relevant = qrels.is_relevant(topic_id, fid)
        if relevant:
            positive += 1
        else:
            negative += 1
        details.append(
            ReplacementDetail(
                frame_id=fid,
                channel_rank=a_rank.get(fid, len(a_ranking) + 1),
                combined_rank=position,
                relevant=relevant,
            )
        )
    return ReplacementReport(positive=positive, negative=negative, details=details)


def rerank_llm(
    client: RerankerClient,
    index: CaptionIndex,
    query_vec: np.ndarray,
    topic_description: str,
    pool_size: int = 100,
    out_k: int = 10,
    topic_id: str = "",
    method: str = "rerank",
) -> RetrievalRun:
    """Rerank the top caption pool with an LLM, then expand to frames.

    The reranker sees the pool's caption texts with the topic description
    and returns an ordered id list; ids outside the pool are dropped with a
    warning. Reranked captions expand to their frames in order (first
    mention wins) until out_k frames; frame scores are reciprocal caption
    ranks so the run stays monotone.
    """
    if pool_size < out_k:
        raise ValueError(f"pool_size {pool_size} must be >= out_k {out_k}")
    pool = search(index, query_vec, pool_size)
    candidates = [(rc.caption_id, index.caption_meta[rc.caption_id].text) for rc in pool]
    pool_ids = {rc.caption_id for rc in pool}
    returned = client.rerank(topic_description, candidates, out_k)

    ordered_ids: list[str] = []
    for cid in returned:
        if cid not in pool_ids:
            logger.warning("reranker returned id outside the pool, dropped: %s", cid)
            continue
        if cid in ordered_ids:
            logger.warning("reranker returned duplicate id, dropped: %s", cid)
            continue
        ordered_ids.append(cid)

    ranked: list[ScoredFrame] = []
    seen: set[FrameId] = set()
    for position, cid in enumerate(ordered_ids, start=1):
        for fid in index.caption_meta[cid].frame_ids:
            if fid in seen:
                continue
            seen.add(fid)
            ranked.append(ScoredFrame(frame_id=fid, score=1.0 / position, provenance=(cid,)))
            if len(ranked) >= out_k:
                break
        if len(ranked) >= out_k:
            break
    return RetrievalRun(topic_id=topic_id, method=method, ranked_frames=ranked, k=out_k)


# ---------------------------------------------------------------------------
# Run files
# ---------------------------------------------------------------------------


def save_runs(path: str | Path, runs: Iterable[RetrievalRun]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for run in runs:
            for rank, sf in enumerate(run.ranked_frames, start=1):
                fh.write(f"{run.topic_id} Q0 {sf.frame_id} {rank} {sf.score:.6f} {run.method}\n")


def load_runs(path: str | Path) -> list[RetrievalRun]:
    """Parse a TREC-style run file back into per-topic runs."""
    path = Path(path)
    grouped: dict[str, RetrievalRun] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6 or parts[1] != "Q0":
                raise ValueError(f"{path.name}:{lineno}: expected 'topic Q0 frame rank score tag'")
            topic_id, _, frame_id, rank, score, tag = parts
            run = grouped.get(topic_id)
            if run is None:
                run = grouped[topic_id] = RetrievalRun(
                    topic_id=topic_id, method=tag, ranked_frames=[], k=0
                )
            if int(rank) != len(run.ranked_frames) + 1:
                raise ValueError(f"{path.name}:{lineno}: rank {rank} out of sequence")
            run.ranked_frames.append(
                ScoredFrame(frame_id=frame_id, score=float(score), provenance=())
            )
            run.k = len(run.ranked_frames)
    return list(grouped.values())
