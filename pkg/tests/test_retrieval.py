import numpy as np
import pytest

from lifelogsearch.captioning import Caption, CaptionGranularity
from lifelogsearch.clients import MockRerankerClient, StaticRerankerClient
from lifelogsearch.evaluation import Qrels
from lifelogsearch.retrieval import (
    FrameScore,
    FrameScoreMap,
    combine_channels,
    frame_scores,
    load_runs,
    rerank_llm,
    replacement_effects,
    retrieve_topk,
    save_runs,
)
from lifelogsearch.textindex import CaptionIndex

from conftest import T0, make_corpus


def _caption(cid, granularity, frame_ids, text=None):
    return Caption(
        caption_id=cid,
        text=text or f"text of {cid}",
        granularity=granularity,
        frame_ids=tuple(frame_ids),
        model_name="m",
        generated_at=T0,
    )


def _index(captions, vectors, corpus=None):
    """Hand-built index: row i of `vectors` belongs to captions[i]."""
    matrix = np.vstack([np.asarray(v, dtype=np.float32) for v in vectors])
    frame_times = {}
    if corpus is not None:
        frame_times = {fid: f.timestamp for fid, f in corpus.frames.items()}
    return CaptionIndex(
        caption_ids=[c.caption_id for c in captions],
        matrix=matrix,
        dimension=matrix.shape[1],
        caption_meta={c.caption_id: c for c in captions},
        embedder_name="hand",
        frame_times=frame_times,
    )


def _axis(dim, i, scale=1.0):
    v = np.zeros(dim, dtype=np.float32)
    v[i] = scale
    return v


def _scoremap(channel, scores, corpus=None):
    entries = {}
    for fid, score in scores.items():
        ts = corpus.frames[fid].timestamp if corpus else None
        entries[fid] = FrameScore(score=score, provenance=(f"{channel}/{fid}",), timestamp=ts)
    return FrameScoreMap(channel=channel, scores=entries)


class TestFrameScores:
    def test_collective_caption_expands_to_all_frames(self):
        corpus = make_corpus({"day1": 8})
        ids = list(corpus.segments[0].frames)
        caption = _caption("collective/w0", CaptionGranularity.COLLECTIVE, ids)
        # query along axis 0; caption vector gives dot 0.9
        index = _index([caption], [[0.9, np.sqrt(1 - 0.81)]], corpus)
        scores = frame_scores(index, np.array([1.0, 0.0], dtype=np.float32))
        assert set(scores.scores) == set(ids)
        for fid in ids:
            assert scores.scores[fid].score == pytest.approx(0.9, abs=1e-6)
            assert scores.scores[fid].provenance == ("collective/w0",)

    def test_single_channel_is_bijection(self):
        corpus = make_corpus({"day1": 5})
        ids = list(corpus.segments[0].frames)
        captions = [_caption(f"single/{fid}", CaptionGranularity.SINGLE, [fid]) for fid in ids]
        vectors = [_axis(5, i) for i in range(5)]
        index = _index(captions, vectors, corpus)
        scores = frame_scores(index, _axis(5, 2))
        assert len(scores.scores) == 5
        provenances = {fs.provenance[0] for fs in scores.scores.values()}
        assert provenances == {c.caption_id for c in captions}

    def test_overlapping_captions_take_max(self):
        corpus = make_corpus({"day1": 3})
        ids = list(corpus.segments[0].frames)
        low = _caption("coarse/a", CaptionGranularity.COARSE_GRAINED, ids[:2])
        high = _caption("coarse/b", CaptionGranularity.COARSE_GRAINED, ids[1:])
        index = _index(
            [low, high],
            [[0.4, np.sqrt(1 - 0.16)], [0.6, np.sqrt(1 - 0.36)]],
            corpus,
        )
        scores = frame_scores(index, np.array([1.0, 0.0], dtype=np.float32))
        shared = scores.scores[ids[1]]
        assert shared.score == pytest.approx(0.6, abs=1e-6)
        assert shared.provenance == ("coarse/b",)


class TestRetrieveTopk:
    def test_sorts_and_truncates(self):
        scores = _scoremap("single", {"a": 0.9, "b": 0.8, "c": 0.7})
        run = retrieve_topk(scores, 2)
        assert run.frame_ids() == ["a", "b"]
        assert run.k == 2

    def test_equal_scores_fall_back_to_chronology(self):
        corpus = make_corpus({"day1": 4})
        ids = list(corpus.segments[0].frames)
        scores = _scoremap("single", {fid: 0.5 for fid in ids}, corpus)
        run = retrieve_topk(scores, 4)
        assert run.frame_ids() == ids

    def test_empty_map_gives_empty_run(self):
        run = retrieve_topk(FrameScoreMap(channel="x", scores={}), 10)
        assert run.ranked_frames == []

    def test_prefix_property(self):
        rng = np.random.default_rng(0)
        scores = _scoremap("s", {f"f{i}": float(rng.random()) for i in range(40)})
        small = retrieve_topk(scores, 5).frame_ids()
        large = retrieve_topk(scores, 20).frame_ids()
        assert large[:5] == small

    def test_scores_non_increasing(self):
        rng = np.random.default_rng(1)
        scores = _scoremap("s", {f"f{i}": float(rng.random()) for i in range(30)})
        run = retrieve_topk(scores, 30)
        values = [sf.score for sf in run.ranked_frames]
        assert values == sorted(values, reverse=True)


class TestCombineChannels:
    def test_plain_average(self):
        a = _scoremap("single", {"x": 0.6})
        b = _scoremap("collective", {"x": 0.8})
        combined = combine_channels(a, b)
        assert combined.scores["x"].score == pytest.approx(0.7)
        assert combined.scores["x"].provenance == ("single/x", "collective/x")

    def test_one_channel_frames_excluded(self):
        a = _scoremap("single", {"x": 0.6, "only_a": 0.9})
        b = _scoremap("collective", {"x": 0.8, "only_b": 0.9})
        combined = combine_channels(a, b)
        assert set(combined.scores) == {"x"}

    def test_score_symmetry(self):
        rng = np.random.default_rng(2)
        frames = [f"f{i}" for i in range(20)]
        a = _scoremap("a", {fid: float(rng.random()) for fid in frames})
        b = _scoremap("b", {fid: float(rng.random()) for fid in frames})
        ab = combine_channels(a, b)
        ba = combine_channels(b, a)
        for fid in frames:
            assert ab.scores[fid].score == pytest.approx(ba.scores[fid].score)

    def test_fusion_weight_knob(self):
        a = _scoremap("a", {"x": 1.0})
        b = _scoremap("b", {"x": 0.0})
        assert combine_channels(a, b, weight=0.25).scores["x"].score == pytest.approx(0.25)

    def test_argmax_invariance_under_positive_scaling(self):
        rng = np.random.default_rng(3)
        frames = [f"f{i}" for i in range(25)]
        a = {fid: float(rng.random()) for fid in frames}
        b = {fid: float(rng.random()) for fid in frames}
        plain = combine_channels(_scoremap("a", a), _scoremap("b", b))
        scaled = combine_channels(
            _scoremap("a", {f: 3.5 * s for f, s in a.items()}),
            _scoremap("b", {f: 3.5 * s for f, s in b.items()}),
        )
        assert plain.ranking() == scaled.ranking()

    def test_rank_shift_property(self):
        rng = np.random.default_rng(4)
        frames = [f"f{i}" for i in range(50)]
        a = _scoremap("a", {fid: float(rng.random()) for fid in frames})
        b = _scoremap("b", {fid: float(rng.random()) for fid in frames})
        combined = combine_channels(a, b)
        k = 10
        run = retrieve_topk(combined, k)
        kth_best = run.ranked_frames[-1].score
        topk = set(run.frame_ids())
        for fid in frames:
            if min(a.scores[fid].score, b.scores[fid].score) > kth_best:
                assert fid in topk

    def test_low_single_rank_rescued_by_collective_caption(self):
        # shape of the published example: a frame ranked deep in the single
        # channel rides its window's high-scoring collective caption into
        # the combined top-10
        corpus = make_corpus({"day1": 64})
        ids = list(corpus.segments[0].frames)
        target = ids[40]  # lives in window 5 (frames 40..47)
        single = {fid: 0.5 - 0.005 * i for i, fid in enumerate(ids)}
        single[target] = 0.02  # near the bottom of the single ranking
        a = _scoremap("single", single, corpus)
        window_of = {fid: i // 8 for i, fid in enumerate(ids)}
        collective_score = {w: 0.1 for w in range(8)}
        collective_score[5] = 0.95  # the target's window ranks first
        b = _scoremap(
            "collective", {fid: collective_score[window_of[fid]] for fid in ids}, corpus
        )
        assert a.rank_of(target) > 50
        combined = combine_channels(a, b)
        assert target in retrieve_topk(combined, 10).frame_ids()


class TestReplacementEffects:
    def _qrels(self, relevant):
        return Qrels(judgments={"t1": {fid: "c1" for fid in relevant}})

    def test_no_replacement(self):
        corpus = make_corpus({"day1": 12})
        ids = list(corpus.segments[0].frames)
        scores = {fid: 1.0 - 0.01 * i for i, fid in enumerate(ids)}
        a = _scoremap("single", scores, corpus)
        report = replacement_effects(a, a, self._qrels(ids[:3]), "t1", 10)
        assert (report.positive, report.negative) == (0, 0)
        assert report.details == []

    def test_planted_fifteen_frame_topic(self):
        # hand-built 15-frame topic: combined pulls in f10 (relevant) and
        # f11 (irrelevant), displacing two of channel A's top ten
        corpus = make_corpus({"day1": 15})
        ids = list(corpus.segments[0].frames)
        a_scores = {fid: 0.9 - 0.05 * i for i, fid in enumerate(ids)}
        combined_scores = dict(a_scores)
        combined_scores[ids[10]] = 0.95  # newcomer, relevant
        combined_scores[ids[11]] = 0.93  # newcomer, irrelevant
        combined_scores[ids[8]] = 0.05  # pushed out
        combined_scores[ids[9]] = 0.04  # pushed out
        a = _scoremap("single", a_scores, corpus)
        combined = _scoremap("combo", combined_scores, corpus)
        qrels = self._qrels([ids[10], ids[0]])
        report = replacement_effects(a, combined, qrels, "t1", 10)
        assert (report.positive, report.negative) == (1, 1)
        by_frame = {d.frame_id: d for d in report.details}
        assert by_frame[ids[10]].relevant is True
        assert by_frame[ids[10]].channel_rank == 11
        assert by_frame[ids[10]].combined_rank == 1
        assert by_frame[ids[11]].relevant is False
        assert by_frame[ids[11]].channel_rank == 12
        assert by_frame[ids[11]].combined_rank == 2

    def test_unknown_topic_rejected(self):
        a = _scoremap("single", {"x": 1.0})
        with pytest.raises(KeyError):
            replacement_effects(a, a, Qrels(), "missing", 10)


class TestRerank:
    def _single_index(self, corpus):
        ids = list(corpus.segments[0].frames)
        captions = [_caption(f"single/{fid}", CaptionGranularity.SINGLE, [fid]) for fid in ids]
        dim = len(ids)
        # descending scores along the query axis keep the pool order obvious
        vectors = []
        for i in range(len(ids)):
            score = 0.95 - 0.9 * i / len(ids)
            vec = np.zeros(dim, dtype=np.float32)
            vec[0] = score
            vec[1 + i % (dim - 1)] = np.sqrt(1 - score * score)
            vectors.append(vec)
        query = np.zeros(dim, dtype=np.float32)
        query[0] = 1.0
        return _index(captions, vectors, corpus), query, ids

    def test_identity_reranker_equals_plain_retrieval(self):
        corpus = make_corpus({"day1": 20})
        index, query, _ = self._single_index(corpus)
        plain = retrieve_topk(frame_scores(index, query), 10)
        reranked = rerank_llm(
            MockRerankerClient("identity"), index, query, "topic", pool_size=20, out_k=10
        )
        assert reranked.frame_ids() == plain.frame_ids()

    def test_reverse_reranker_reverses_expansion(self):
        corpus = make_corpus({"day1": 12})
        index, query, _ = self._single_index(corpus)
        plain = retrieve_topk(frame_scores(index, query), 12)
        reranked = rerank_llm(
            MockRerankerClient("reverse"), index, query, "topic", pool_size=12, out_k=12
        )
        assert reranked.frame_ids() == plain.frame_ids()[::-1]

    def test_multi_frame_captions_expand_in_order(self):
        corpus = make_corpus({"day1": 8})
        ids = list(corpus.segments[0].frames)
        captions = [
            _caption("collective/w0", CaptionGranularity.COLLECTIVE, ids[:4]),
            _caption("collective/w1", CaptionGranularity.COLLECTIVE, ids[4:]),
        ]
        index = _index(captions, [[0.9, 0.1], [0.5, 0.5]], corpus)
        query = np.array([1.0, 0.0], dtype=np.float32)
        run = rerank_llm(
            MockRerankerClient("reverse"), index, query, "topic", pool_size=6, out_k=6
        )
        assert run.frame_ids() == ids[4:] + ids[:2]

    def test_out_of_pool_ids_dropped(self, caplog):
        corpus = make_corpus({"day1": 6})
        index, query, ids = self._single_index(corpus)
        client = StaticRerankerClient(["ghost/1", f"single/{ids[3]}", f"single/{ids[0]}"])
        with caplog.at_level("WARNING"):
            run = rerank_llm(client, index, query, "topic", pool_size=6, out_k=3)
        assert run.frame_ids() == [ids[3], ids[0]]  # shorter than out_k
        assert any("outside the pool" in r.message for r in caplog.records)

    def test_scores_non_increasing_after_rerank(self):
        corpus = make_corpus({"day1": 10})
        index, query, _ = self._single_index(corpus)
        run = rerank_llm(
            MockRerankerClient("reverse"), index, query, "topic", pool_size=10, out_k=10
        )
        values = [sf.score for sf in run.ranked_frames]
        assert values == sorted(values, reverse=True)

    def test_pool_smaller_than_out_k_rejected(self):
        corpus = make_corpus({"day1": 5})
        index, query, _ = self._single_index(corpus)
        with pytest.raises(ValueError):
            rerank_llm(MockRerankerClient(), index, query, "t", pool_size=3, out_k=5)


class TestExpansionConservation:
    def test_provenance_maps_back_to_covering_caption(self):
        corpus = make_corpus({"day1": 16})
        ids = list(corpus.segments[0].frames)
        captions = [
            _caption(f"collective/w{w}", CaptionGranularity.COLLECTIVE, ids[8 * w : 8 * w + 8])
            for w in range(2)
        ]
        index = _index(captions, [[0.8, 0.6], [0.3, np.sqrt(1 - 0.09)]], corpus)
        scores = frame_scores(index, np.array([1.0, 0.0], dtype=np.float32))
        run = retrieve_topk(scores, 16)
        for sf in run.ranked_frames:
            for cid in sf.provenance:
                assert sf.frame_id in index.caption_meta[cid].frame_ids


class TestRunFiles:
    def test_round_trip_and_format(self, tmp_path):
        corpus = make_corpus({"day1": 5})
        scores = _scoremap(
            "single", {fid: 0.9 - 0.1 * i for i, fid in enumerate(corpus.frames)}, corpus
        )
        runs = [retrieve_topk(scores, 3, topic_id=f"t{i}", method="single") for i in (1, 2)]
        path = tmp_path / "single.run"
        save_runs(path, runs)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 6
        parts = lines[0].split()
        assert len(parts) == 6
        assert parts[0] == "t1" and parts[1] == "Q0" and parts[3] == "1"
        assert parts[5] == "single"
        restored = load_runs(path)
        assert [r.topic_id for r in restored] == ["t1", "t2"]
        assert restored[0].frame_ids() == runs[0].frame_ids()

    def test_out_of_sequence_rank_rejected(self, tmp_path):
        path = tmp_path / "bad.run"
        path.write_text("t1 Q0 f1 1 0.9 m\nt1 Q0 f2 3 0.8 m\n")
        with pytest.raises(ValueError, match="out of sequence"):
            load_runs(path)
