"""Caption generation at four granularities through pluggable model clients.

Three methods produce the caption store:
  * single: one caption per frame (target 20-40 words),
  * collective: one caption per window of consecutive frames (40-60 words),
  * merged: batches of filtered frames yield per-frame fine-grained captions,
    a 20-40 word batch summary, and per-group coarse-grained captions, with
    each batch's prompt carrying the previous batch's summary.

Caption store format: JSONL, one caption per line:
    {"caption_id", "text", "granularity", "frame_ids": [..], "model",
     "generated_at", "batch_id"?}

Word-count limits are advisory: generative models are not reliably
compliant, so out-of-range captions are logged and kept.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .clients import CaptionerClient, TransportError
from .corpus import Corpus, Frame, FrameId, Window

logger = logging.getLogger(__name__)


class CaptionGranularity(str, Enum):
    SINGLE = "single"
    COLLECTIVE = "collective"
    FINE_GRAINED = "fine_grained"
    COARSE_GRAINED = "coarse_grained"
    SUMMARY = "summary"


#: Granularities whose captions map to exactly one frame.
SINGLE_FRAME_GRANULARITIES = frozenset(
    {CaptionGranularity.SINGLE, CaptionGranularity.FINE_GRAINED}
)


class CaptionError(ValueError):
    """A caption violates its structural invariants."""


@dataclass(frozen=True)
class Caption:
    caption_id: str
    text: str
    granularity: CaptionGranularity
    frame_ids: tuple[FrameId, ...]
    model_name: str
    generated_at: datetime
    batch_id: str | None = None

    def __post_init__(self):
        if not self.text:
            raise CaptionError(f"caption {self.caption_id!r}: empty text")
        if not self.frame_ids:
            raise CaptionError(f"caption {self.caption_id!r}: no frame ids")
        if self.granularity in SINGLE_FRAME_GRANULARITIES and len(self.frame_ids) != 1:
            raise CaptionError(
                f"caption {self.caption_id!r}: {self.granularity.value} captions map to "
                f"exactly one frame, got {len(self.frame_ids)}"
            )


@dataclass(frozen=True)
class MergedBatchOutput:
    """Parsed structured output of one merged-method batch."""

    fine_grained: tuple[tuple[FrameId, str], ...]
    summary: str
    coarse_groups: tuple[tuple[tuple[FrameId, ...], str], ...]


@dataclass
class RetryPolicy:
    """Bounded retries with exponential backoff for transient client failures."""

    attempts: int = 3
    backoff_seconds: float = 0.5

    def call(self, fn: Callable[[], str], what: str) -> str:
        delay = self.backoff_seconds
        for attempt in range(1, self.attempts + 1):
            try:
                return fn()
            except TransportError as exc:
                if attempt == self.attempts:
                    raise
                logger.warning("%s failed (attempt %d/%d): %s", what, attempt, self.attempts, exc)
                if delay > 0:
                    time.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")


@dataclass
class CaptionRun:
    """Captions produced by one pipeline stage plus frames it gave up on."""

    captions: list[Caption] = field(default_factory=list)
    uncaptioned: list[FrameId] = field(default_factory=list)


@dataclass
class MergedCaptionRun:
    captions: list[Caption] = field(default_factory=list)
    final_summary: str = ""
    flagged_batches: list[str] = field(default_factory=list)


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

DEFAULT_SINGLE_TEMPLATE = (
    "This photo was taken by a wearable camera at {time} on {date}. Reconstruct the "
    "wearer's personal experience at that moment in the first person, covering key "
    "moments, locations, and activities, in 20-40 words."
)

DEFAULT_COLLECTIVE_TEMPLATE = (
    "These photos were taken in order by a wearable camera between {start_time} and "
    "{end_time} on {date}. Treat them as consecutive video frames and reconstruct the "
    "wearer's experience over the interval, covering key moments, locations, and "
    "activities, in 40-60 words."
)

DEFAULT_MERGED_TEMPLATE = (
    "These {count} photos were taken in order by a wearable camera ({times}). "
    "Summary of the frames immediately before these: {previous_summary}\n"
    "Complete three tasks about the camera wearer's experience:\n"
    "1. Give a brief fine-grained caption for every image, using its time.\n"
    "2. Summarize the individual's experiences across all images in 20-40 words.\n"
    "3. Group consecutive images that belong to the same experience and describe "
    "each group.\n"
    "Refer to images positionally as image_1 .. image_{count}. Respond with a single "
    "JSON object shaped as {{\"fine_grained\": [{{\"image\": 1, \"caption\": \"...\"}}], "
    "\"summary\": \"...\", \"groups\": [{{\"images\": [1, 2], \"caption\": \"...\"}}]}} "
    "and no other text."
)

_REPROMPT_SUFFIX = (
    "\nYour previous response could not be parsed. Respond again with exactly one "
    "valid JSON object in the required shape and nothing else."
)


@dataclass(frozen=True)
class PromptTemplates:
    """Prompt wording is configurable; defaults cover the three methods."""

    single: str = DEFAULT_SINGLE_TEMPLATE
    collective: str = DEFAULT_COLLECTIVE_TEMPLATE
    merged: str = DEFAULT_MERGED_TEMPLATE

    @classmethod
    def from_dir(cls, directory: str | Path) -> "PromptTemplates":
        """Load ``single.txt`` / ``collective.txt`` / ``merged.txt`` overrides."""
        directory = Path(directory)
        kwargs = {}
        for name in ("single", "collective", "merged"):
            path = directory / f"{name}.txt"
            if path.is_file():
                kwargs[name] = path.read_text(encoding="utf-8")
        return cls(**kwargs)


def build_single_prompt(frame: Frame, templates: PromptTemplates | None = None) -> str:
    templates = templates or PromptTemplates()
    return templates.single.format(
        time=frame.timestamp.strftime("%H:%M"),
        date=frame.timestamp.strftime("%Y-%m-%d"),
    )


def build_collective_prompt(window: Window, templates: PromptTemplates | None = None) -> str:
    templates = templates or PromptTemplates()
    return templates.collective.format(
        start_time=window.start_timestamp.strftime("%H:%M"),
        end_time=window.end_timestamp.strftime("%H:%M"),
        date=window.start_timestamp.strftime("%Y-%m-%d"),
    )


def build_merged_prompt(
    frames: Sequence[Frame], previous_summary: str, templates: PromptTemplates | None = None
) -> str:
    templates = templates or PromptTemplates()
    times = ", ".join(
        f"image_{i + 1} at {frame.timestamp.strftime('%H:%M')}" for i, frame in enumerate(frames)
    )
    return templates.merged.format(
        count=len(frames),
        times=times,
        previous_summary=previous_summary if previous_summary else "(none)",
    )


def _warn_word_count(text: str, low: int, high: int, what: str) -> None:
    words = len(text.split())
    if not low <= words <= high:
        logger.warning("%s: %d words, outside the %d-%d target", what, words, low, high)


# ---------------------------------------------------------------------------
# Caption generation
# ---------------------------------------------------------------------------


def caption_single(
    client: CaptionerClient,
    corpus: Corpus,
    templates: PromptTemplates | None = None,
    policy: RetryPolicy | None = None,
    clock: Callable[[], datetime] | None = None,
) -> CaptionRun:
    """Generate one single-granularity caption per frame.

    Frames whose caption call keeps failing after retries are recorded as
    uncaptioned and stay retrievable only through the other channels.
    """
    if not client.supports_single_image:
        raise ValueError(f"client {client.model_name!r} does not support single images")
    policy = policy or RetryPolicy()
    clock = clock or _utc_now
    run = CaptionRun()
    for frame in corpus.iter_frames():
        prompt = build_single_prompt(frame, templates)
        try:
            image = corpus.image_file(frame)
            text = policy.call(
                lambda: client.describe_image(prompt, image),
                f"single caption for {frame.id}",
            )
        except TransportError as exc:
            logger.error("frame %s left uncaptioned: %s", frame.id, exc)
            run.uncaptioned.append(frame.id)
            continue
        _warn_word_count(text, 20, 40, f"single caption for {frame.id}")
        run.captions.append(
            Caption(
                caption_id=f"single/{frame.id}",
                text=text,
                granularity=CaptionGranularity.SINGLE,
                frame_ids=(frame.id,),
                model_name=client.model_name,
                generated_at=clock(),
            )
        )
    return run


def caption_collective(
    client: CaptionerClient,
    windows: Sequence[Window],
    corpus: Corpus,
    templates: PromptTemplates | None = None,
    policy: RetryPolicy | None = None,
    clock: Callable[[], datetime] | None = None,
) -> CaptionRun:
    """Generate one collective caption per window of consecutive frames."""
    if not client.supports_multi_image:
        raise ValueError(f"client {client.model_name!r} does not support multi-image prompts")
    policy = policy or RetryPolicy()
    clock = clock or _utc_now
    run = CaptionRun()
    for window in windows:
        prompt = build_collective_prompt(window, templates)
        paths = [corpus.image_file(corpus.frames[fid]) for fid in window.frames]
        try:
            text = policy.call(
                lambda: client.describe_frames(prompt, paths),
                f"collective caption for window at {window.frames[0]}",
            )
        except TransportError as exc:
            logger.error("window at %s left uncaptioned: %s", window.frames[0], exc)
            run.uncaptioned.extend(window.frames)
            continue
        _warn_word_count(text, 40, 60, f"collective caption for window at {window.frames[0]}")
        run.captions.append(
            Caption(
                caption_id=f"collective/{window.frames[0]}",
                text=text,
                granularity=CaptionGranularity.COLLECTIVE,
                frame_ids=tuple(window.frames),
                model_name=client.model_name,
                generated_at=clock(),
            )
        )
    return run


def caption_merged(
    client: CaptionerClient,
    filtered_frames: Sequence[Frame],
    batch_size: int = 10,
    initial_summary: str | None = None,
    templates: PromptTemplates | None = None,
    policy: RetryPolicy | None = None,
    clock: Callable[[], datetime] | None = None,
    base_dir: Path | None = None,
) -> MergedCaptionRun:
    """Run the merged method over consecutive batches of filtered frames.

    Batches are strictly sequential: each prompt embeds the previous batch's
    summary. An unparseable model output gets exactly one corrective
    re-prompt; a second failure degrades the batch to one coarse group per
    frame with an empty summary and flags it.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not client.supports_multi_image:
        raise ValueError(f"client {client.model_name!r} does not support multi-image prompts")
    policy = policy or RetryPolicy()
    clock = clock or _utc_now
    run = MergedCaptionRun(final_summary=initial_summary or "")

    for start in range(0, len(filtered_frames), batch_size):
        batch = list(filtered_frames[start : start + batch_size])
        batch_ids = [frame.id for frame in batch]
        batch_tag = f"batch/{batch[0].id}"
        paths = [(base_dir / frame.image_path) if base_dir else Path(frame.image_path) for frame in batch]
        prompt = build_merged_prompt(batch, run.final_summary, templates)

        parsed: MergedBatchOutput | None = None
        try:
            raw = policy.call(
                lambda: client.describe_frames(prompt, paths), f"merged {batch_tag}"
            )
            try:
                parsed = parse_merged_output(raw, batch_ids)
            except MergedParseError as exc:
                logger.warning("%s: unparseable output (%s); re-prompting once", batch_tag, exc)
                raw = policy.call(
                    lambda: client.describe_frames(prompt + _REPROMPT_SUFFIX, paths),
                    f"merged {batch_tag} re-prompt",
                )
                parsed = parse_merged_output(raw, batch_ids)
        except (TransportError, MergedParseError) as exc:
            logger.error("%s: falling back to degenerate output: %s", batch_tag, exc)
            parsed = _degenerate_batch(batch)
            run.flagged_batches.append(batch_tag)

        generated_at = clock()
        for fid, text in parsed.fine_grained:
            run.captions.append(
                Caption(
                    caption_id=f"fine/{fid}",
                    text=text,
                    granularity=CaptionGranularity.FINE_GRAINED,
                    frame_ids=(fid,),
                    model_name=client.model_name,
                    generated_at=generated_at,
                    batch_id=batch_tag,
                )
            )
        if parsed.summary:
            _warn_word_count(parsed.summary, 20, 40, f"summary for {batch_tag}")
            run.captions.append(
                Caption(
                    caption_id=f"summary/{batch_tag}",
                    text=parsed.summary,
                    granularity=CaptionGranularity.SUMMARY,
                    frame_ids=tuple(batch_ids),
                    model_name=client.model_name,
                    generated_at=generated_at,
                    batch_id=batch_tag,
                )
            )
        for group_index, (group_ids, text) in enumerate(parsed.coarse_groups):
            run.captions.append(
                Caption(
                    caption_id=f"coarse/{batch_tag}/{group_index}",
                    text=text,
                    granularity=CaptionGranularity.COARSE_GRAINED,
                    frame_ids=tuple(group_ids),
                    model_name=client.model_name,
                    generated_at=generated_at,
                    batch_id=batch_tag,
                )
            )
        run.final_summary = parsed.summary
    return run


def _degenerate_batch(batch: Sequence[Frame]) -> MergedBatchOutput:
    groups = tuple(
        ((frame.id,), f"Unrecorded moment around {frame.timestamp.strftime('%H:%M')}.")
        for frame in batch
    )
    return MergedBatchOutput(fine_grained=(), summary="", coarse_groups=groups)


# ---------------------------------------------------------------------------
# Merged-output parsing
# ---------------------------------------------------------------------------


class MergedParseError(ValueError):
    """Structured merged output failed validation; ``kind`` names the defect."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1 and text.endswith("```"):
            text = text[first_newline + 1 : -3].strip()
    return text


def _image_index(value, count: int, where: str) -> int:
    if isinstance(value, str) and value.startswith("image_"):
        try:
            value = int(value[len("image_") :])
        except ValueError:
            raise MergedParseError("bad_reference", f"{where}: unparsable image reference {value!r}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise MergedParseError("bad_reference", f"{where}: image reference must be an index, got {value!r}")
    if not 1 <= value <= count:
        raise MergedParseError(
            "bad_reference", f"{where}: image_{value} out of range for a {count}-image batch"
        )
    return value


def parse_merged_output(raw: str, frame_ids: Sequence[FrameId]) -> MergedBatchOutput:
    """Strictly parse one merged batch document against its frame list.

    Image references are positional (image_1 .. image_N, 1-based). The
    fine-grained section must cover every frame exactly once; groups must be
    contiguous runs that together partition the batch.
    """
    count = len(frame_ids)
    try:
        document = json.loads(_strip_fences(raw))
    except json.JSONDecodeError as exc:
        raise MergedParseError("malformed", f"not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise MergedParseError("malformed", f"expected a JSON object, got {type(document).__name__}")
    for section in ("fine_grained", "summary", "groups"):
        if section not in document:
            raise MergedParseError("missing_section", f"missing task section {section!r}")

    fine_raw = document["fine_grained"]
    if not isinstance(fine_raw, list):
        raise MergedParseError("malformed", "fine_grained must be a list")
    fine: dict[int, str] = {}
    for item in fine_raw:
        if not isinstance(item, dict) or "image" not in item or "caption" not in item:
            raise MergedParseError("malformed", f"bad fine_grained entry: {item!r}")
        index = _image_index(item["image"], count, "fine_grained")
        caption = item["caption"]
        if not isinstance(caption, str) or not caption.strip():
            raise MergedParseError("malformed", f"fine_grained image_{index}: empty caption")
        if index in fine:
            raise MergedParseError("coverage", f"fine_grained describes image_{index} twice")
        fine[index] = caption.strip()
    if len(fine) != count:
        missing = sorted(set(range(1, count + 1)) - set(fine))
        raise MergedParseError(
            "coverage", f"fine_grained misses image_{', image_'.join(map(str, missing))}"
        )

    summary = document["summary"]
    if not isinstance(summary, str):
        raise MergedParseError("malformed", "summary must be a string")

    groups_raw = document["groups"]
    if not isinstance(groups_raw, list):
        raise MergedParseError("malformed", "groups must be a list")
    groups: list[tuple[tuple[FrameId, ...], str]] = []
    covered: set[int] = set()
    for item in groups_raw:
        if not isinstance(item, dict) or "images" not in item or "caption" not in item:
            raise MergedParseError("malformed", f"bad group entry: {item!r}")
        members_raw = item["images"]
        if not isinstance(members_raw, list) or not members_raw:
            raise MergedParseError("malformed", f"group has no images: {item!r}")
        members = [_image_index(ref, count, "groups") for ref in members_raw]
        if members != list(range(members[0], members[0] + len(members))):
            raise MergedParseError(
                "non_contiguous", f"group {members} is not a contiguous ascending run"
            )
        overlap = covered.intersection(members)
        if overlap:
            raise MergedParseError(
                "coverage", f"image_{sorted(overlap)[0]} appears in more than one group"
            )
        covered.update(members)
        caption = item["caption"]
        if not isinstance(caption, str) or not caption.strip():
            raise MergedParseError("malformed", f"group {members}: empty caption")
        groups.append((tuple(frame_ids[i - 1] for i in members), caption.strip()))
    if len(covered) != count:
        missing = sorted(set(range(1, count + 1)) - covered)
        raise MergedParseError(
            "coverage", f"groups omit image_{', image_'.join(map(str, missing))}"
        )

    ordered_fine = tuple((frame_ids[i - 1], fine[i]) for i in range(1, count + 1))
    groups.sort(key=lambda g: frame_ids.index(g[0][0]))
    return MergedBatchOutput(
        fine_grained=ordered_fine, summary=summary.strip(), coarse_groups=tuple(groups)
    )


# ---------------------------------------------------------------------------
# Caption store
# ---------------------------------------------------------------------------


class CaptionStoreError(ValueError):
    """A caption store file failed schema validation."""


def caption_to_json(caption: Caption) -> dict:
    record = {
        "caption_id": caption.caption_id,
        "text": caption.text,
        "granularity": caption.granularity.value,
        "frame_ids": list(caption.frame_ids),
        "model": caption.model_name,
        "generated_at": caption.generated_at.isoformat(),
    }
    if caption.batch_id is not None:
        record["batch_id"] = caption.batch_id
    return record


def _caption_from_json(record: dict, where: str) -> Caption:
    for key in ("caption_id", "text", "granularity", "frame_ids", "model", "generated_at"):
        if key not in record:
            raise CaptionStoreError(f"{where}: missing field {key!r}")
    try:
        granularity = CaptionGranularity(record["granularity"])
    except ValueError:
        raise CaptionStoreError(f"{where}: unknown granularity {record['granularity']!r}") from None
    try:
        generated_at = datetime.fromisoformat(record["generated_at"])
    except ValueError as exc:
        raise CaptionStoreError(f"{where}: bad generated_at: {exc}") from None
    try:
        return Caption(
            caption_id=str(record["caption_id"]),
            text=str(record["text"]),
            granularity=granularity,
            frame_ids=tuple(str(fid) for fid in record["frame_ids"]),
            model_name=str(record["model"]),
            generated_at=generated_at,
            batch_id=record.get("batch_id"),
        )
    except CaptionError as exc:
        raise CaptionStoreError(f"{where}: {exc}") from None


def save_captions(path: str | Path, captions: Iterable[Caption]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for caption in captions:
            fh.write(json.dumps(caption_to_json(caption), ensure_ascii=False) + "\n")


def load_captions(path: str | Path) -> list[Caption]:
    """Load a caption store file, or every ``*.jsonl`` in a store directory."""
    path = Path(path)
    if path.is_dir():
        captions: list[Caption] = []
        for part in sorted(path.glob("*.jsonl")):
            captions.extend(load_captions(part))
        return captions
    captions = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CaptionStoreError(f"{where}: invalid JSON: {exc}") from None
            captions.append(_caption_from_json(record, where))
    return captions
