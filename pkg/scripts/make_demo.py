#!/usr/bin/env python3
"""Build a self-contained mock-backed demo workspace.

Generates a synthetic two-day lifelog (PNG frames with scene markers the
mock clients understand), writes a config.toml wired to the seeded mocks,
and runs every pipeline stage so `lifelogsearch serve` works immediately:

    python scripts/make_demo.py /tmp/demo
    lifelogsearch -c /tmp/demo/config.toml serve --port 8080
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from PIL import Image
from PIL.PngImagePlugin import PngInfo

from lifelogsearch.cli import main as cli_main

SCENES_DAY1 = (
    ["making coffee in the kitchen"] * 6
    + ["reading the newspaper at the kitchen table"] * 6
    + ["cycling along the river path"] * 8
    + ["working at a desk with two monitors"] * 12
    + ["eating lunch in the office canteen"] * 6
    + ["attending a meeting in a glass-walled room"] * 10
)
SCENES_DAY2 = (
    ["waiting on a train platform"] * 6
    + ["riding a crowded train downtown"] * 8
    + ["browsing shelves in a bookshop"] * 8
    + ["eating an ice cream cone on the beach"] * 6
    + ["walking along the shoreline at sunset"] * 8
    + ["cooking dinner at the stove"] * 8
)

TOPICS = [
    {"id": "t1", "title": "eating an ice cream cone on the beach",
     "description": "Find the moments when ice cream was eaten at the beach."},
    {"id": "t2", "title": "riding a crowded train downtown",
     "description": "Find the commute on the train."},
    {"id": "t3", "title": "working at a desk with two monitors",
     "description": "Find desk work at the office."},
]


def _write_png(path: Path, scene: str, salt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    shade = (sum(ord(c) for c in scene) * 7 + len(salt)) % 200
    img = Image.new("RGB", (64, 48), color=(40 + shade, 90, 200 - shade))
    info = PngInfo()
    info.add_text("comment", f"[[scene: {scene}]] {salt}")
    img.save(path, format="PNG", pnginfo=info)


def build_workspace(directory: Path, seed: int) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    start = datetime(2016, 8, 15, 7, 30, tzinfo=timezone.utc)
    rows = []
    for day_index, scenes in enumerate((SCENES_DAY1, SCENES_DAY2)):
        segment = f"day{day_index + 1}"
        for i, scene in enumerate(scenes):
            fid = f"{segment}_f{i:04d}"
            image = f"images/{fid}.png"
            _write_png(directory / image, scene, salt=fid)
            timestamp = start + timedelta(days=day_index, minutes=3 * i)
            rows.append(
                {"id": fid, "segment": segment, "timestamp": timestamp.isoformat(),
                 "image": image}
            )
    with (directory / "manifest.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")

    (directory / "topics.json").write_text(json.dumps(TOPICS, indent=2), encoding="utf-8")
    qrels_lines = []
    beach_start = 6 + 8 + 8  # after waiting, train, bookshop blocks
    for i in range(6):
        qrels_lines.append(f"t1 day2_f{beach_start + i:04d} c1")
    for i in range(8):
        qrels_lines.append(f"t2 day2_f{6 + i:04d} c1")
    desk_start = 6 + 6 + 8  # after coffee, newspaper, cycling blocks
    for i in range(12):
        qrels_lines.append(f"t3 day1_f{desk_start + i:04d} c1")
    (directory / "qrels.txt").write_text("\n".join(qrels_lines) + "\n", encoding="utf-8")

    config = directory / "config.toml"
    config.write_text(
        f"""[paths]
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
""",
        encoding="utf-8",
    )
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("directory", type=Path)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--skip-pipeline", action="store_true",
                        help="Only write the corpus and config")
    args = parser.parse_args(argv)

    config = build_workspace(args.directory, args.seed)
    print(f"workspace at {args.directory}")
    if args.skip_pipeline:
        return 0
    for stage in (
        ["ingest"],
        ["embed", "--target", "frames"],
        ["filter"],
        ["caption", "--method", "single"],
        ["caption", "--method", "collective"],
        ["caption", "--method", "merged"],
        ["embed", "--target", "captions"],
    ):
        code = cli_main(["-c", str(config)] + stage)
        if code != 0:
            return code
    print(f"demo ready: lifelogsearch -c {config} serve --port 8080")
    return 0


if __name__ == "__main__":
    sys.exit(main())
