"""Command-line driver for every pipeline stage.

Stages are independently resumable: a stage whose output artifact already
exists is a no-op unless --force is given. With mock client endpoints the
whole pipeline is deterministic (caption timestamps are pinned so repeated
runs produce byte-identical stores).

    lifelogsearch -c config.toml ingest
    lifelogsearch -c config.toml caption --method single
    lifelogsearch -c config.toml embed --target frames
    lifelogsearch -c config.toml filter
    lifelogsearch -c config.toml caption --method merged
    lifelogsearch -c config.toml embed --target captions
    lifelogsearch -c config.toml query --text "driving a car" --method single
    lifelogsearch -c config.toml export-run --method combination
    lifelogsearch -c config.toml eval --runs artifacts/runs/combination.run
    lifelogsearch -c config.toml serve --port 8080
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import retrieval, textindex, vecstore
from .captioning import (
    CaptionGranularity,
    PromptTemplates,
    caption_collective,
    caption_merged,
    caption_single,
    load_captions,
    save_captions,
)
from .config import PipelineConfig, load_config, make_captioner, make_vision_embedder, make_text_embedder
from .corpus import ingest_manifest, window_frames
from .evaluation import load_qrels, load_topics
from .filtering import FrameEmbedding, embed_frames, filter_frames
from .pipeline import CHANNELS, METHODS, Artifacts

logger = logging.getLogger(__name__)

#: Pinned caption timestamp for mock runs, keeping stores byte-identical.
_MOCK_CLOCK = lambda: datetime(2001, 1, 1, tzinfo=timezone.utc)  # noqa: E731


def _clock(config: PipelineConfig):
    return _MOCK_CLOCK if config.captioner.is_mock else None


def _templates(config: PipelineConfig) -> PromptTemplates | None:
    if config.prompt_dir is not None:
        return PromptTemplates.from_dir(config.prompt_dir)
    return None


def _skip(path: Path, force: bool, what: str) -> bool:
    if path.exists() and not force:
        print(f"{what}: {path} already exists, skipping (use --force to rebuild)")
        return True
    return False


def cmd_ingest(config: PipelineConfig, args) -> int:
    corpus = ingest_manifest(config.paths.manifest)
    print(
        f"ingested {len(corpus.frames)} frames over {len(corpus.segments)} segments "
        f"from {config.paths.manifest}"
    )
    return 0


def cmd_caption(config: PipelineConfig, args) -> int:
    store_dir = Path(config.paths.caption_store)
    out_path = store_dir / f"{args.method}.jsonl"
    if _skip(out_path, args.force, f"caption {args.method}"):
        return 0
    corpus = ingest_manifest(config.paths.manifest)
    client = make_captioner(config)
    templates = _templates(config)
    clock = _clock(config)

    if args.method == "single":
        run = caption_single(client, corpus, templates=templates, clock=clock)
        captions, skipped = run.captions, run.uncaptioned
    elif args.method == "collective":
        windows = window_frames(corpus, config.params.window_size)
        run = caption_collective(client, windows, corpus, templates=templates, clock=clock)
        captions, skipped = run.captions, run.uncaptioned
    else:  # merged
        filtered_path = Path(config.paths.filtered_frames)
        if not filtered_path.is_file():
            print("merged captioning needs the filter stage output; run 'filter' first",
                  file=sys.stderr)
            return 1
        kept_ids = json.loads(filtered_path.read_text(encoding="utf-8"))
        captions, flagged = [], []
        # one summary chain per segment: batches never span days
        for segment in corpus.segments:
            segment_ids = set(segment.frames)
            frames = [corpus.frames[fid] for fid in kept_ids if fid in segment_ids]
            if not frames:
                continue
            merged = caption_merged(
                client, frames, batch_size=config.params.merged_batch_size,
                templates=templates, clock=clock, base_dir=corpus.base_dir,
            )
            captions.extend(merged.captions)
            flagged.extend(merged.flagged_batches)
        skipped = flagged
        if flagged:
            print(f"flagged batches (degenerate fallback): {flagged}")

    save_captions(out_path, captions)
    print(f"wrote {len(captions)} captions to {out_path}"
          + (f" ({len(skipped)} incomplete)" if skipped else ""))
    return 0


def cmd_embed(config: PipelineConfig, args) -> int:
    corpus = ingest_manifest(config.paths.manifest)
    if args.target == "frames":
        out_path = Path(config.paths.frame_embeddings)
        if _skip(out_path, args.force, "embed frames"):
            return 0
        client = make_vision_embedder(config)
        embeddings = embed_frames(client, list(corpus.iter_frames()), base_dir=corpus.base_dir)
        vecstore.save_vectors(out_path, [(e.frame_id, e.vector) for e in embeddings])
        print(f"wrote {len(embeddings)} frame embeddings to {out_path}")
        return 0

    store_dir = Path(config.paths.caption_store)
    if not store_dir.exists():
        print("no caption store found; run 'caption' first", file=sys.stderr)
        return 1
    captions = load_captions(store_dir)
    client = make_text_embedder(config)
    built = []
    for channel, granularity in CHANNELS.items():
        selected = [c for c in captions if c.granularity is granularity]
        if not selected:
            continue
        out_path = Path(config.paths.index_dir) / f"{channel}.vemb"
        if _skip(out_path, args.force, f"index {channel}"):
            continue
        # captions always carry the experience prefix; query_prefix only
        # controls the query side
        index = textindex.build_index(selected, client, granularities={granularity}, corpus=corpus)
        textindex.save_index(index, config.paths.index_dir, channel)
        built.append(f"{channel}({len(index)})")
    print(f"built indices: {', '.join(built) if built else 'none'}")
    return 0


def cmd_filter(config: PipelineConfig, args) -> int:
    out_path = Path(config.paths.filtered_frames)
    if _skip(out_path, args.force, "filter"):
        return 0
    embeddings_path = Path(config.paths.frame_embeddings)
    if not embeddings_path.is_file():
        print("no frame embeddings found; run 'embed --target frames' first", file=sys.stderr)
        return 1
    corpus = ingest_manifest(config.paths.manifest)
    _, entries = vecstore.load_vectors(embeddings_path)
    embeddings = {name: FrameEmbedding(frame_id=name, vector=vec) for name, vec in entries}
    kept_ids: list[str] = []
    for segment in corpus.segments:
        frames = corpus.segment_frames(segment.id)
        kept = filter_frames(frames, embeddings, config.params.filter_threshold)
        kept_ids.extend(frame.id for frame in kept)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(kept_ids, indent=0), encoding="utf-8")
    print(
        f"kept {len(kept_ids)}/{len(corpus.frames)} frames at threshold "
        f"{config.params.filter_threshold} -> {out_path}"
    )
    return 0


def _print_run(run: retrieval.RetrievalRun) -> None:
    for rank, sf in enumerate(run.ranked_frames, start=1):
        print(f"{run.topic_id} Q0 {sf.frame_id} {rank} {sf.score:.6f} {run.method}")


def cmd_query(config: PipelineConfig, args) -> int:
    artifacts = Artifacts.load(config)
    run = artifacts.run_query(args.text, args.method, k=args.k)
    _print_run(run)
    return 0


def cmd_rerank(config: PipelineConfig, args) -> int:
    artifacts = Artifacts.load(config)
    run = artifacts.run_query(args.text, "rerank", k=args.k, description=args.description or "")
    _print_run(run)
    return 0


def cmd_export_run(config: PipelineConfig, args) -> int:
    out_path = Path(config.paths.runs_dir) / f"{args.method}.run"
    if _skip(out_path, args.force, f"export-run {args.method}"):
        return 0
    topics = load_topics(config.paths.topics)
    artifacts = Artifacts.load(config)
    runs = [
        artifacts.run_query(
            topic.title, args.method, k=args.k, topic_id=topic.topic_id,
            description=topic.description,
        )
        for topic in topics
    ]
    retrieval.save_runs(out_path, runs)
    print(f"wrote {sum(len(r.ranked_frames) for r in runs)} lines for "
          f"{len(runs)} topics to {out_path}")
    return 0


def cmd_eval(config: PipelineConfig, args) -> int:
    from .evaluation import evaluate_runs

    qrels = load_qrels(Path(args.qrels) if args.qrels else config.paths.qrels)
    topics = load_topics(config.paths.topics)
    runs = retrieval.load_runs(Path(args.runs))
    report = evaluate_runs(runs, qrels, topics, k=args.k or config.params.k)
    print(report.format_table())
    report_path = Path(args.runs).with_suffix(".eval.json")
    report_path.write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")
    print(f"report written to {report_path}")
    return 0


def cmd_serve(config: PipelineConfig, args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lifelogsearch",
        description="Caption-based moment retrieval over lifelog image streams",
    )
    parser.add_argument("-c", "--config", required=True, help="Path to the TOML config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="Validate and summarize the frame manifest")

    p = sub.add_parser("caption", help="Generate captions into the caption store")
    p.add_argument("--method", choices=["single", "collective", "merged"], required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("embed", help="Embed frames or build caption indices")
    p.add_argument("--target", choices=["frames", "captions"], required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("filter", help="Drop near-duplicate frames for the merged method")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("query", help="Run one query and print TREC-style results")
    p.add_argument("--text", required=True)
    p.add_argument("--method", choices=list(METHODS), default="single")
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("rerank", help="Run one query through the LLM reranking stage")
    p.add_argument("--text", required=True)
    p.add_argument("--description", default=None, help="Topic narrative passed to the reranker")
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("export-run", help="Write a TREC run file over all topics")
    p.add_argument("--method", choices=list(METHODS), required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("eval", help="Score a run file against qrels")
    p.add_argument("--runs", required=True)
    p.add_argument("--qrels", default=None)
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("serve", help="Start the HTTP search service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "caption": cmd_caption,
    "embed": cmd_embed,
    "filter": cmd_filter,
    "query": cmd_query,
    "rerank": cmd_rerank,
    "export-run": cmd_export_run,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](config, args)
    except Exception as exc:  # surfaced as a diagnostic, nonzero exit
        if args.verbose:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
