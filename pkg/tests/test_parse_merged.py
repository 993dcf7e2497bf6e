import json

import pytest

from lifelogsearch.captioning import MergedParseError, parse_merged_output

FRAMES = [f"f{i}" for i in range(1, 11)]  # ten-frame batch


def doc(fine=None, summary="A quiet morning at home, 25 words or so.", groups=None, **extra):
    payload = {
        "fine_grained": fine
        if fine is not None
        else [{"image": i, "caption": f"frame {i} caption"} for i in range(1, 11)],
        "summary": summary,
        "groups": groups
        if groups is not None
        else [
            {"images": [1, 2, 3, 4, 5], "caption": "first half"},
            {"images": [6, 7, 8, 9, 10], "caption": "second half"},
        ],
    }
    payload.update(extra)
    return json.dumps(payload)


class TestWellFormed:
    def test_two_groups(self):
        out = parse_merged_output(doc(), FRAMES)
        assert len(out.coarse_groups) == 2
        assert out.coarse_groups[0][0] == ("f1", "f2", "f3", "f4", "f5")
        assert [fid for fid, _ in out.fine_grained] == FRAMES

    def test_single_group_whole_batch(self):
        out = parse_merged_output(
            doc(groups=[{"images": list(range(1, 11)), "caption": "all"}]), FRAMES
        )
        assert len(out.coarse_groups) == 1

    def test_each_frame_its_own_group(self):
        groups = [{"images": [i], "caption": f"g{i}"} for i in range(1, 11)]
        out = parse_merged_output(doc(groups=groups), FRAMES)
        assert len(out.coarse_groups) == 10

    def test_string_image_references(self):
        fine = [{"image": f"image_{i}", "caption": f"c{i}"} for i in range(1, 11)]
        groups = [{"images": [f"image_{i}" for i in range(1, 11)], "caption": "all"}]
        out = parse_merged_output(doc(fine=fine, groups=groups), FRAMES)
        assert out.coarse_groups[0][0] == tuple(FRAMES)

    def test_markdown_fenced_json_accepted(self):
        out = parse_merged_output("```json\n" + doc() + "\n```", FRAMES)
        assert out.summary.startswith("A quiet morning")

    def test_fine_grained_out_of_order_is_reordered(self):
        fine = [{"image": i, "caption": f"c{i}"} for i in range(10, 0, -1)]
        out = parse_merged_output(doc(fine=fine), FRAMES)
        assert [fid for fid, _ in out.fine_grained] == FRAMES

    def test_groups_reported_in_frame_order(self):
        groups = [
            {"images": [6, 7, 8, 9, 10], "caption": "late"},
            {"images": [1, 2, 3, 4, 5], "caption": "early"},
        ]
        out = parse_merged_output(doc(groups=groups), FRAMES)
        assert [g[1] for g in out.coarse_groups] == ["early", "late"]

    def test_extra_keys_tolerated(self):
        out = parse_merged_output(doc(notes="extra commentary"), FRAMES)
        assert len(out.fine_grained) == 10

    def test_short_batch(self):
        frames = FRAMES[:3]
        payload = json.dumps(
            {
                "fine_grained": [{"image": i, "caption": f"c{i}"} for i in (1, 2, 3)],
                "summary": "short batch",
                "groups": [{"images": [1, 2, 3], "caption": "tiny"}],
            }
        )
        out = parse_merged_output(payload, frames)
        assert out.coarse_groups[0][0] == ("f1", "f2", "f3")

    def test_summary_whitespace_trimmed(self):
        out = parse_merged_output(doc(summary="  padded summary  "), FRAMES)
        assert out.summary == "padded summary"


def _kind(raw, frames=FRAMES):
    with pytest.raises(MergedParseError) as excinfo:
        parse_merged_output(raw, frames)
    return excinfo.value.kind


class TestMalformed:
    def test_not_json(self):
        assert _kind("this is not json at all") == "malformed"

    def test_json_but_not_object(self):
        assert _kind(json.dumps([1, 2, 3])) == "malformed"

    def test_missing_fine_grained_section(self):
        payload = json.loads(doc())
        del payload["fine_grained"]
        assert _kind(json.dumps(payload)) == "missing_section"

    def test_missing_summary_section(self):
        payload = json.loads(doc())
        del payload["summary"]
        assert _kind(json.dumps(payload)) == "missing_section"

    def test_missing_groups_section(self):
        payload = json.loads(doc())
        del payload["groups"]
        assert _kind(json.dumps(payload)) == "missing_section"

    def test_fine_reference_out_of_range(self):
        fine = [{"image": i, "caption": f"c{i}"} for i in range(1, 10)]
        fine.append({"image": 11, "caption": "ghost frame"})
        assert _kind(doc(fine=fine)) == "bad_reference"

    def test_group_reference_out_of_range(self):
        groups = [{"images": list(range(1, 10)) + [11], "caption": "overflow"}]
        assert _kind(doc(groups=groups)) == "bad_reference"

    def test_unparsable_image_string(self):
        fine = [{"image": "image_x", "caption": "c"}]
        assert _kind(doc(fine=fine)) == "bad_reference"

    def test_group_gap_not_contiguous(self):
        groups = [
            {"images": [1, 2, 4], "caption": "gap"},
            {"images": [3, 5, 6, 7, 8, 9, 10], "caption": "rest"},
        ]
        assert _kind(doc(groups=groups)) == "non_contiguous"

    def test_group_descending_not_contiguous(self):
        groups = [{"images": [10, 9, 8, 7, 6, 5, 4, 3, 2, 1], "caption": "reversed"}]
        assert _kind(doc(groups=groups)) == "non_contiguous"

    def test_groups_omitting_a_frame(self):
        groups = [
            {"images": [1, 2, 3], "caption": "early"},
            {"images": [5, 6, 7, 8, 9, 10], "caption": "late"},
        ]
        assert _kind(doc(groups=groups)) == "coverage"

    def test_groups_overlapping(self):
        groups = [
            {"images": [1, 2, 3, 4, 5], "caption": "a"},
            {"images": [5, 6, 7, 8, 9, 10], "caption": "b"},
        ]
        assert _kind(doc(groups=groups)) == "coverage"

    def test_fine_missing_frame(self):
        fine = [{"image": i, "caption": f"c{i}"} for i in range(1, 10)]
        assert _kind(doc(fine=fine)) == "coverage"

    def test_fine_duplicate_frame(self):
        fine = [{"image": i, "caption": f"c{i}"} for i in range(1, 11)]
        fine[1] = {"image": 1, "caption": "again"}
        assert _kind(doc(fine=fine)) == "coverage"

    def test_empty_caption_rejected(self):
        fine = [{"image": i, "caption": "" if i == 4 else f"c{i}"} for i in range(1, 11)]
        assert _kind(doc(fine=fine)) == "malformed"

    def test_empty_group_rejected(self):
        groups = [{"images": [], "caption": "nothing"}]
        assert _kind(doc(groups=groups)) == "malformed"

    def test_summary_wrong_type(self):
        assert _kind(doc(summary=42)) == "malformed"

    def test_boolean_image_reference_rejected(self):
        fine = [{"image": True, "caption": "c"}]
        assert _kind(doc(fine=fine)) == "bad_reference"
