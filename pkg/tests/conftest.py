"""Shared fixtures: synthetic corpora, scene-marked image stubs, mock clients.

Image stubs are plain files carrying a ``[[scene: ...]]`` marker that the
mock clients understand; PNG fixtures embed the same marker in a text chunk
so thumbnail rendering works on real image bytes.
"""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from lifelogsearch.corpus import Corpus, Frame, VideoSegment, ingest_manifest

UTC = timezone.utc
T0 = datetime(2016, 8, 15, 8, 0, tzinfo=UTC)


def write_scene_stub(path: Path, scene: str | None, salt: str = "") -> None:
    """Write a fake image file whose bytes carry a scene marker."""
    path.parent.mkdir(parents=True, exist_ok=True)
    body = f"stub-image {salt}\n"
    if scene is not None:
        body += f"[[scene: {scene}]]\n"
    path.write_text(body, encoding="utf-8")


def write_scene_png(path: Path, scene: str | None, salt: str = "") -> None:
    """Write a real 16x12 PNG with the scene marker in a text chunk."""
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    path.parent.mkdir(parents=True, exist_ok=True)
    digest = sum(ord(c) for c in salt) % 255
    img = Image.new("RGB", (16, 12), color=(digest, 80, 120))
    info = PngInfo()
    info.add_text("comment", f"[[scene: {scene}]] {salt}" if scene else f"stub {salt}")
    img.save(path, format="PNG", pnginfo=info)


def make_manifest(
    directory: Path,
    scenes_by_segment: dict[str, list[str | None]],
    start: datetime = T0,
    minutes_apart: int = 2,
    png: bool = False,
) -> Path:
    """Build a manifest plus image stubs; one scene entry per frame."""
    manifest_path = directory / "manifest.jsonl"
    writer = write_scene_png if png else write_scene_stub
    rows = []
    for seg_index, (segment, scenes) in enumerate(scenes_by_segment.items()):
        day = start + timedelta(days=seg_index)
        for i, scene in enumerate(scenes):
            fid = f"{segment}_f{i:04d}"
            image = f"images/{fid}.png" if png else f"images/{fid}.dat"
            writer(directory / image, scene, salt=fid)
            rows.append(
                {
                    "id": fid,
                    "segment": segment,
                    "timestamp": (day + timedelta(minutes=minutes_apart * i)).isoformat(),
                    "image": image,
                }
            )
    with manifest_path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return manifest_path


def make_corpus(sizes: dict[str, int], start: datetime = T0) -> Corpus:
    """Programmatic corpus (no files) for windowing and retrieval tests."""
    frames: dict[str, Frame] = {}
    segments = []
    for seg_index, (segment, size) in enumerate(sizes.items()):
        day = start + timedelta(days=seg_index)
        ids = []
        for i in range(size):
            fid = f"{segment}_f{i:04d}"
            frames[fid] = Frame(
                id=fid,
                segment=segment,
                index_in_segment=i,
                timestamp=day + timedelta(minutes=2 * i),
                image_path=f"images/{fid}.dat",
            )
            ids.append(fid)
        segments.append(VideoSegment(id=segment, frames=tuple(ids)))
    return Corpus(segments=tuple(segments), frames=frames)


@pytest.fixture
def tiny_corpus(tmp_path) -> Corpus:
    manifest = make_manifest(
        tmp_path, {"day1": ["making coffee in the kitchen", "reading at a desk", None]}
    )
    return ingest_manifest(manifest)


def write_config(directory: Path, seed: int = 7, extra_params: str = "") -> Path:
    """Standard mock-backed config next to a manifest in `directory`."""
    config_path = directory / "config.toml"
    config_path.write_text(
        f"""
[paths]
manifest = "manifest.jsonl"
caption_store = "artifacts/captions"
frame_embeddings = "artifacts/frame_embeddings.vemb"
filtered_frames = "artifacts/filtered_frames.json"
index_dir = "artifacts/index"
qrels = "qrels.txt"
topics = "topics.json"
runs_dir = "artifacts/runs"
thumbnails_dir = "artifacts/thumbnails"

[clients.captioner]
endpoint = "mock:{seed}"

[clients.vision_embedder]
endpoint = "mock:{seed}"
dimension = 64

[clients.text_embedder]
endpoint = "mock:{seed}"
dimension = 192

[clients.reranker]
endpoint = "mock:{seed}"

[params]
window_size = 8
merged_batch_size = 10
filter_threshold = 0.8
k = 10
rerank_pool = 100
query_prefix = true
fusion_weight = 0.5
combination = ["single", "collective"]
rerank_channel = "fine"
{extra_params}
""",
        encoding="utf-8",
    )
    return config_path


# ---------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion after the run
# ---------------------------------------------------------------------------

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        name = report.nodeid.split("::")[-1]
        _acceptance_results[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in sorted(_acceptance_results.items()):
        terminalreporter.write_line(f"{outcome:8s} {name}")
