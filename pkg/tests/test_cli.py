"""End-to-end CLI pipeline tests on a 100-frame mock fixture."""

import json
from pathlib import Path

import pytest

from lifelogsearch.cli import main

from conftest import make_manifest, write_config

PLANTED_SCENE = "eating an ice cream cone on the beach"


def _scenes_100():
    """Two segments, 100 frames: redundant runs plus a planted block."""
    day1 = []
    for block in range(6):
        day1.extend([f"working at desk number {block}"] * 8)  # redundant runs
    day1.extend([None] * 12)  # 60 frames total
    day2 = [PLANTED_SCENE] * 10 + [f"walking down street {i}" for i in range(20)] + [None] * 10
    return {"day1": day1, "day2": day2}


def _write_eval_inputs(directory: Path):
    (directory / "topics.json").write_text(
        json.dumps(
            [
                {"id": "t1", "title": PLANTED_SCENE, "description": "the beach moment"},
                {"id": "t2", "title": "walking down street 3", "description": "street walk"},
            ]
        )
    )
    planted = [f"day2_f{i:04d}" for i in range(10)]
    lines = [f"t1 {fid} c1" for fid in planted[:5]] + [f"t1 {fid} c2" for fid in planted[5:]]
    lines += ["t2 day2_f0013 c1"]
    (directory / "qrels.txt").write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="module")
def built_pipeline(tmp_path_factory):
    """Run every build stage once; tests below only read artifacts."""
    directory = tmp_path_factory.mktemp("pipeline")
    make_manifest(directory, _scenes_100())
    _write_eval_inputs(directory)
    config = write_config(directory)
    for stage in (
        ["ingest"],
        ["embed", "--target", "frames"],
        ["filter"],
        ["caption", "--method", "single"],
        ["caption", "--method", "collective"],
        ["caption", "--method", "merged"],
        ["embed", "--target", "captions"],
    ):
        assert main(["-c", str(config)] + stage) == 0, f"stage failed: {stage}"
    return directory, config


def _run_full_pipeline(directory: Path) -> Path:
    make_manifest(directory, _scenes_100())
    _write_eval_inputs(directory)
    config = write_config(directory)
    for stage in (
        ["ingest"],
        ["embed", "--target", "frames"],
        ["filter"],
        ["caption", "--method", "single"],
        ["caption", "--method", "collective"],
        ["caption", "--method", "merged"],
        ["embed", "--target", "captions"],
        ["export-run", "--method", "single"],
        ["export-run", "--method", "combination"],
    ):
        assert main(["-c", str(config)] + stage) == 0
    return config


class TestStages:
    def test_ingest_reports_counts(self, built_pipeline, capsys):
        directory, config = built_pipeline
        assert main(["-c", str(config), "ingest"]) == 0
        out = capsys.readouterr().out
        assert "100 frames" in out and "2 segments" in out

    def test_filter_drops_redundant_runs(self, built_pipeline):
        directory, _ = built_pipeline
        kept = json.loads((directory / "artifacts/filtered_frames.json").read_text())
        # day1's six 8-frame same-scene runs collapse to one frame each
        day1_kept = [fid for fid in kept if fid.startswith("day1")]
        assert len(day1_kept) < 30
        assert "day1_f0000" in day1_kept

    def test_caption_stores_exist_per_method(self, built_pipeline):
        directory, _ = built_pipeline
        store = directory / "artifacts/captions"
        singles = (store / "single.jsonl").read_text().strip().splitlines()
        assert len(singles) == 100
        assert (store / "collective.jsonl").is_file()
        assert (store / "merged.jsonl").is_file()

    def test_indices_cover_four_channels(self, built_pipeline):
        directory, _ = built_pipeline
        index_dir = directory / "artifacts/index"
        for channel in ("single", "collective", "fine", "coarse"):
            assert (index_dir / f"{channel}.vemb").is_file(), channel
            assert (index_dir / f"{channel}.meta.json").is_file(), channel

    def test_rerunning_stage_is_noop(self, built_pipeline, capsys):
        _, config = built_pipeline
        assert main(["-c", str(config), "caption", "--method", "single"]) == 0
        assert "skipping" in capsys.readouterr().out

    def test_query_prints_trec_lines(self, built_pipeline, capsys):
        _, config = built_pipeline
        code = main(
            ["-c", str(config), "query", "--text", PLANTED_SCENE, "--method", "single", "--k", "10"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 10
        parts = lines[0].split()
        assert len(parts) == 6 and parts[1] == "Q0" and parts[5] == "single"
        assert parts[2].startswith("day2_f000")  # planted block wins

    def test_query_combination_method(self, built_pipeline, capsys):
        _, config = built_pipeline
        code = main(
            ["-c", str(config), "query", "--text", PLANTED_SCENE, "--method", "combination"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 10
        assert lines[0].split()[5] == "combination"

    def test_rerank_command(self, built_pipeline, capsys):
        _, config = built_pipeline
        code = main(["-c", str(config), "rerank", "--text", PLANTED_SCENE, "--k", "5"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 5
        assert lines[0].split()[5] == "rerank"

    def test_eval_prints_topic_table(self, built_pipeline, capsys):
        directory, config = built_pipeline
        assert main(["-c", str(config), "export-run", "--method", "single"]) == 0
        run_path = directory / "artifacts/runs/single.run"
        assert main(["-c", str(config), "eval", "--runs", str(run_path)]) == 0
        out = capsys.readouterr().out
        assert "t1" in out and "t2" in out and "AvgP@10" in out
        report = json.loads(run_path.with_suffix(".eval.json").read_text())
        assert report["per_topic"]["t1"]["p_at_k"] == 1.0

    def test_unknown_stage_error_is_diagnostic(self, built_pipeline, capsys):
        _, config = built_pipeline
        code = main(["-c", str(config), "eval", "--runs", "/nonexistent/x.run"])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestDeterminism:
    def test_full_pipeline_byte_identical_across_runs(self, tmp_path):
        config_a = _run_full_pipeline(tmp_path / "a")
        config_b = _run_full_pipeline(tmp_path / "b")
        for name in ("single.run", "combination.run"):
            run_a = (tmp_path / "a/artifacts/runs" / name).read_bytes()
            run_b = (tmp_path / "b/artifacts/runs" / name).read_bytes()
            assert run_a == run_b, name
        for store in ("single.jsonl", "collective.jsonl", "merged.jsonl"):
            bytes_a = (tmp_path / "a/artifacts/captions" / store).read_bytes()
            bytes_b = (tmp_path / "b/artifacts/captions" / store).read_bytes()
            assert bytes_a == bytes_b, store
