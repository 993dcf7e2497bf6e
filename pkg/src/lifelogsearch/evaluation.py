"""Retrieval scoring against cluster-annotated relevance judgments.

Metrics follow the standard lifelog moment-retrieval formulations:
precision at K over retrieved frames, cluster recall at K over the topic's
relevance clusters (relevant retrieved frames only), and their per-topic
harmonic mean. Report averages are arithmetic means of per-topic values,
never metrics of pooled runs.

File formats:
    qrels:  whitespace-separated lines "topicId frameId clusterId"
    topics: JSON array of {"id", "title", "description", "k_override"?}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from .retrieval import RetrievalRun

logger = logging.getLogger(__name__)


class QrelsError(ValueError):
    """A qrels or topics file failed validation."""


@dataclass(frozen=True)
class Topic:
    topic_id: str
    title: str
    description: str
    relevant_count: int | None = None
    k_override: int | None = None


@dataclass
class Qrels:
    """Relevance judgments: topic -> frame -> cluster id."""

    judgments: dict[str, dict[str, str]] = field(default_factory=dict)

    def is_relevant(self, topic_id: str, frame_id: str) -> bool:
        return frame_id in self.judgments.get(topic_id, {})

    def clusters(self, topic_id: str) -> set[str]:
        return set(self.judgments.get(topic_id, {}).values())

    def relevant_frames(self, topic_id: str) -> set[str]:
        return set(self.judgments.get(topic_id, {}))


def load_qrels(path: str | Path) -> Qrels:
    path = Path(path)
    qrels = Qrels()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise QrelsError(
                    f"{path.name}:{lineno}: expected 'topicId frameId clusterId', got {line!r}"
                )
            topic_id, frame_id, cluster_id = parts
            per_topic = qrels.judgments.setdefault(topic_id, {})
            existing = per_topic.get(frame_id)
            if existing is not None and existing != cluster_id:
                raise QrelsError(
                    f"{path.name}:{lineno}: frame {frame_id!r} already judged in cluster "
                    f"{existing!r} for topic {topic_id!r}"
                )
            per_topic[frame_id] = cluster_id
    return qrels


def load_topics(path: str | Path) -> list[Topic]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise QrelsError(f"{path.name}: invalid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise QrelsError(f"{path.name}: expected a JSON array of topics")
    topics: list[Topic] = []
    seen: set[str] = set()
    for position, item in enumerate(raw):
        if not isinstance(item, dict) or "id" not in item or "title" not in item:
            raise QrelsError(f"{path.name}: topic #{position} needs 'id' and 'title'")
        topic_id = str(item["id"])
        if topic_id in seen:
            raise QrelsError(f"{path.name}: duplicate topic id {topic_id!r}")
        seen.add(topic_id)
        topics.append(
            Topic(
                topic_id=topic_id,
                title=str(item["title"]),
                description=str(item.get("description", "")),
                relevant_count=item.get("relevant_count"),
                k_override=item.get("k_override"),
            )
        )
    return topics


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _topk_ids(run: "RetrievalRun", k: int) -> list[str]:
    return [sf.frame_id for sf in run.ranked_frames[:k]]


def precision_at_k(run: "RetrievalRun", qrels: Qrels, k: int) -> float:
    """Fraction of the top-k that is relevant; denominator is k regardless."""
    if run.topic_id not in qrels.judgments:
        raise QrelsError(f"topic {run.topic_id!r} not present in qrels")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for fid in _topk_ids(run, k) if qrels.is_relevant(run.topic_id, fid))
    return hits / k


def cluster_recall_at_k(run: "RetrievalRun", qrels: Qrels, k: int) -> float:
    """Fraction of the topic's clusters hit by relevant frames in the top-k."""
    if run.topic_id not in qrels.judgments:
        raise QrelsError(f"topic {run.topic_id!r} not present in qrels")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    clusters = qrels.clusters(run.topic_id)
    if not clusters:
        raise QrelsError(f"topic {run.topic_id!r} has no clusters (malformed qrels)")
    judged = qrels.judgments[run.topic_id]
    covered = {judged[fid] for fid in _topk_ids(run, k) if fid in judged}
    return len(covered) / len(clusters)


def f1_at_k(run: "RetrievalRun", qrels: Qrels, k: int) -> float:
    """Per-topic harmonic mean of P@k and CR@k; 0 when both are 0."""
    p = precision_at_k(run, qrels, k)
    cr = cluster_recall_at_k(run, qrels, k)
    if p + cr == 0.0:
        return 0.0
    return 2.0 * p * cr / (p + cr)


@dataclass(frozen=True)
class TopicMetrics:
    p_at_k: float
    cr_at_k: float
    f1_at_k: float


@dataclass
class MetricsReport:
    per_topic: dict[str, TopicMetrics]
    avg_p: float
    avg_cr: float
    avg_f1: float
    k: int
    method: str

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "k": self.k,
            "per_topic": {
                tid: {"p_at_k": m.p_at_k, "cr_at_k": m.cr_at_k, "f1_at_k": m.f1_at_k}
                for tid, m in self.per_topic.items()
            },
            "averages": {"avg_p": self.avg_p, "avg_cr": self.avg_cr, "avg_f1": self.avg_f1},
        }

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        return cls(
            per_topic={
                tid: TopicMetrics(m["p_at_k"], m["cr_at_k"], m["f1_at_k"])
                for tid, m in data["per_topic"].items()
            },
            avg_p=data["averages"]["avg_p"],
            avg_cr=data["averages"]["avg_cr"],
            avg_f1=data["averages"]["avg_f1"],
            k=data["k"],
            method=data["method"],
        )

    def format_table(self) -> str:
        """Aligned text table: per-topic P@K columns plus the three averages."""
        topics = list(self.per_topic)
        headers = ["Method"] + topics + [f"AvgCR@{self.k}", f"AvgF1@{self.k}", f"AvgP@{self.k}"]
        row = (
            [self.method]
            + [f"{self.per_topic[tid].p_at_k:.1f}" for tid in topics]
            + [f"{self.avg_cr:.3f}", f"{self.avg_f1:.3f}", f"{self.avg_p:.2f}"]
        )
        widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
        line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        values = "  ".join(v.ljust(w) for v, w in zip(row, widths))
        return line + "\n" + values


def evaluate_runs(
    runs: Sequence["RetrievalRun"],
    qrels: Qrels,
    topics: Iterable[Topic],
    k: int,
    method: str | None = None,
) -> MetricsReport:
    """Score one run per topic and average per-topic metrics arithmetically.

    Topics without a run score 0 with a warning; a topic's k_override
    replaces k for that topic (short topics are judged at shallower depth).
    """
    by_topic: dict[str, "RetrievalRun"] = {}
    for run in runs:
        if run.topic_id in by_topic:
            raise QrelsError(f"duplicate run for topic {run.topic_id!r}")
        by_topic[run.topic_id] = run

    per_topic: dict[str, TopicMetrics] = {}
    for topic in topics:
        topic_k = topic.k_override or k
        run = by_topic.get(topic.topic_id)
        if run is None:
            logger.warning("no run for topic %s; scoring 0", topic.topic_id)
            per_topic[topic.topic_id] = TopicMetrics(0.0, 0.0, 0.0)
            continue
        per_topic[topic.topic_id] = TopicMetrics(
            p_at_k=precision_at_k(run, qrels, topic_k),
            cr_at_k=cluster_recall_at_k(run, qrels, topic_k),
            f1_at_k=f1_at_k(run, qrels, topic_k),
        )
    if not per_topic:
        raise QrelsError("no topics to evaluate")
    n = len(per_topic)
    if method is None:
        method = next(iter(by_topic.values())).method if by_topic else "unknown"
    return MetricsReport(
        per_topic=per_topic,
        avg_p=sum(m.p_at_k for m in per_topic.values()) / n,
        avg_cr=sum(m.cr_at_k for m in per_topic.values()) / n,
        avg_f1=sum(m.f1_at_k for m in per_topic.values()) / n,
        k=k,
        method=method,
    )
