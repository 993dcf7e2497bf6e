"""Lifelog frame corpus: manifest ingestion, validation, and windowing.

A corpus is a set of video-like segments (one per lifelogging day), each an
ordered list of frames with minute-precision timestamps. The corpus is
immutable after ingestion and safe for unlimited concurrent readers.

Manifest format: UTF-8 JSON Lines, one object per frame:
    {"id": str, "segment": str, "timestamp": ISO-8601 with offset,
     "image": relative path}
Rows need not be pre-sorted; ingestion sorts frames within a segment by
timestamp then id and orders segments chronologically.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

logger = logging.getLogger(__name__)

FrameId = str
SegmentId = str


class ManifestError(ValueError):
    """A manifest row or the assembled corpus violates an invariant."""


@dataclass(frozen=True)
class Frame:
    """One lifelog image and its position in the day-ordered stream."""

    id: FrameId
    segment: SegmentId
    index_in_segment: int
    timestamp: datetime  # timezone-aware; minute precision is sufficient
    image_path: str


@dataclass(frozen=True)
class VideoSegment:
    """A chronological, non-empty run of frames (one lifelogging day)."""

    id: SegmentId
    frames: tuple[FrameId, ...]


@dataclass(frozen=True)
class Window:
    """Consecutive frames of one segment, at most ``window_size`` long."""

    segment: SegmentId
    frames: tuple[FrameId, ...]
    start_timestamp: datetime
    end_timestamp: datetime


@dataclass(frozen=True)
class Corpus:
    segments: tuple[VideoSegment, ...]
    frames: dict[FrameId, Frame]
    base_dir: Path = Path(".")  # image paths resolve against this

    def image_file(self, frame: Frame) -> Path:
        return self.base_dir / frame.image_path

    def segment_frames(self, segment_id: SegmentId) -> list[Frame]:
        """Frames of one segment in chronological order."""
        for segment in self.segments:
            if segment.id == segment_id:
                return [self.frames[fid] for fid in segment.frames]
        raise KeyError(f"unknown segment: {segment_id}")

    def iter_frames(self):
        """All frames, segment by segment, in chronological order."""
        for segment in self.segments:
            for fid in segment.frames:
                yield self.frames[fid]

    def __len__(self) -> int:
        return len(self.frames)


def _parse_timestamp(raw: str, where: str) -> datetime:
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ManifestError(f"{where}: bad timestamp {raw!r}: {exc}") from None
    if ts.tzinfo is None:
        raise ManifestError(f"{where}: timestamp {raw!r} lacks a timezone offset")
    return ts


def ingest_manifest(manifest_path: str | Path) -> Corpus:
    """Load and validate a frame manifest into an immutable Corpus.

    Frames are sorted within each segment by timestamp then id, segments are
    ordered by their first frame's timestamp. Duplicate frame ids are
    rejected; frames whose image file is missing are retained with a warning.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")

    rows: dict[SegmentId, list[tuple[datetime, FrameId, str]]] = {}
    seen: dict[FrameId, int] = {}
    with manifest_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{manifest_path.name}:{lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{where}: invalid JSON: {exc}") from None
            for key in ("id", "segment", "timestamp", "image"):
                if key not in row:
                    raise ManifestError(f"{where}: missing field {key!r}")
            fid = str(row["id"])
            if not fid:
                raise ManifestError(f"{where}: empty frame id")
            if fid in seen:
                raise ManifestError(
                    f"{where}: duplicate frame id {fid!r} (first seen on line {seen[fid]})"
                )
            seen[fid] = lineno
            ts = _parse_timestamp(str(row["timestamp"]), where)
            rows.setdefault(str(row["segment"]), []).append((ts, fid, str(row["image"])))

    base_dir = manifest_path.parent
    frames: dict[FrameId, Frame] = {}
    segments: list[VideoSegment] = []
    for segment_id, entries in rows.items():
        entries.sort(key=lambda e: (e[0], e[1]))
        frame_ids = []
        for index, (ts, fid, image) in enumerate(entries):
            if not (base_dir / image).is_file():
                logger.warning("frame %s: image file missing: %s", fid, image)
            frames[fid] = Frame(
                id=fid,
                segment=segment_id,
                index_in_segment=index,
                timestamp=ts,
                image_path=image,
            )
            frame_ids.append(fid)
        segments.append(VideoSegment(id=segment_id, frames=tuple(frame_ids)))

    segments.sort(key=lambda s: (frames[s.frames[0]].timestamp, s.id))
    corpus = Corpus(segments=tuple(segments), frames=frames, base_dir=base_dir)
    validate_corpus(corpus)
    return corpus


def validate_corpus(corpus: Corpus) -> None:
    """Check the corpus invariants, raising ManifestError with a location.

    Guards programmatic construction as well as ingestion: frame ids unique
    across segments, indices contiguous from 0, timestamps non-decreasing
    within each segment.
    """
    claimed: dict[FrameId, SegmentId] = {}
    for segment in corpus.segments:
        if not segment.frames:
            raise ManifestError(f"segment {segment.id!r} is empty")
        previous: Frame | None = None
        for position, fid in enumerate(segment.frames):
            if fid in claimed:
                raise ManifestError(
                    f"frame {fid!r} appears in segments {claimed[fid]!r} and {segment.id!r}"
                )
            claimed[fid] = segment.id
            frame = corpus.frames.get(fid)
            if frame is None:
                raise ManifestError(f"segment {segment.id!r} references unknown frame {fid!r}")
            if frame.index_in_segment != position:
                raise ManifestError(
                    f"segment {segment.id!r}: frame {fid!r} has index "
                    f"{frame.index_in_segment}, expected {position}"
                )
            if previous is not None and frame.timestamp < previous.timestamp:
                raise ManifestError(
                    f"segment {segment.id!r}: non-monotone timestamp at frame {fid!r} "
                    f"({frame.timestamp.isoformat()} after {previous.timestamp.isoformat()})"
                )
            previous = frame


def window_frames(corpus: Corpus, window_size: int) -> list[Window]:
    """Partition each segment into consecutive non-overlapping windows.

    The final window of a segment may be shorter than ``window_size``;
    windows never span segments, and every frame lands in exactly one window.
    """
    if window_size < 1:
        raise ValueError(f"window_size must be >= 1, got {window_size}")
    windows: list[Window] = []
    for segment in corpus.segments:
        for start in range(0, len(segment.frames), window_size):
            chunk = segment.frames[start : start + window_size]
            windows.append(
                Window(
                    segment=segment.id,
                    frames=chunk,
                    start_timestamp=corpus.frames[chunk[0]].timestamp,
                    end_timestamp=corpus.frames[chunk[-1]].timestamp,
                )
            )
    return windows
