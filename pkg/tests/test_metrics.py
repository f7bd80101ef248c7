from __future__ import annotations

import numpy as np
import pytest

from facereact import (
    AppropriatenessIndex,
    EvalConfig,
    GeneratedSet,
    LabelConfig,
    ValidationError,
    acc,
    apply_normalization,
    build_index,
    evaluate_all,
    fr_corr,
    fr_dist,
    fr_div,
    fr_dvs,
    fr_rea,
    fr_syn,
    fr_var,
    load_generated_set,
    write_clip_series,
)
from facereact.metrics import METRIC_NAMES

from _oracles import naive_dtw
from conftest import N_FACIAL, broadcast_series, facial_series


def toy_index(sets, ids=None):
    ids = tuple(ids) if ids else tuple(f"c{i}" for i in range(len(sets)))
    return AppropriatenessIndex(
        clip_ids=ids,
        neighbors=tuple(tuple(s) for s in sets),
        threshold=0.5,
        inclusive=False,
        matrix_hash="toy",
    )


def gen_set(per_clip_series, ids=None):
    ids = tuple(ids) if ids else tuple(f"c{i}" for i in range(len(per_clip_series)))
    return GeneratedSet(clip_ids=ids, reactions=tuple(tuple(g) for g in per_clip_series))


@pytest.fixture()
def gt_as_generation(synth_bundle):
    corpus = synth_bundle["corpus"]
    return GeneratedSet(corpus.clip_ids, tuple((l,) for l in corpus.listeners))


class TestFrDist:
    def test_zero_when_generation_is_appropriate(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        gen = GeneratedSet(corpus.clip_ids, tuple((l,) for l in corpus.listeners))
        assert fr_dist(gen, synth_bundle["index"], corpus.listeners) == 0.0

    def test_duplicated_generation_doubles(self):
        rng = np.random.default_rng(0)
        reactions = [facial_series(rng.standard_normal((10, N_FACIAL)), f"c{i}") for i in range(2)]
        probe = facial_series(rng.standard_normal((10, N_FACIAL)))
        index = toy_index([(0, 1), (0, 1)])
        single = fr_dist(gen_set([[probe], [probe]]), index, reactions)
        double = fr_dist(gen_set([[probe, probe], [probe, probe]]), index, reactions)
        assert double == pytest.approx(2 * single, rel=1e-12)

    def test_three_clip_planted_distances(self):
        rng = np.random.default_rng(1)
        reactions = [facial_series(rng.standard_normal((8, N_FACIAL)), f"c{i}") for i in range(3)]
        gens = [facial_series(rng.standard_normal((8, N_FACIAL))) for _ in range(3)]
        sets = [(0, 1), (0, 1, 2), (2,)]
        index = toy_index(sets)
        expected = np.mean(
            [min(naive_dtw(g.frames, reactions[j].frames) for j in s) for g, s in zip(gens, sets)]
        )
        got = fr_dist(gen_set([[g] for g in gens]), index, reactions)
        assert got == pytest.approx(expected, abs=1e-9)

    def test_bigger_sets_cannot_increase(self):
        rng = np.random.default_rng(2)
        reactions = [facial_series(rng.standard_normal((8, N_FACIAL)), f"c{i}") for i in range(3)]
        gens = gen_set([[facial_series(rng.standard_normal((8, N_FACIAL)))] for _ in range(3)])
        small = fr_dist(gens, toy_index([(0,), (1,), (2,)]), reactions)
        large = fr_dist(gens, toy_index([(0, 1, 2)] * 3), reactions)
        assert large <= small + 1e-12


class TestFrCorr:
    def test_gt_generation_is_one(self, synth_bundle, gt_as_generation):
        corpus = synth_bundle["corpus"]
        assert fr_corr(gt_as_generation, synth_bundle["index"], corpus.listeners) == pytest.approx(1.0, abs=1e-12)

    def test_anti_correlated_generation_negative(self):
        rng = np.random.default_rng(0)
        frames = rng.standard_normal((30, N_FACIAL))
        frames -= frames.mean(axis=0)  # zero means so the flip is a pure anticorrelation
        reaction = facial_series(frames, "c0")
        gen = gen_set([[facial_series(-frames)]], ids=("c0",))
        value = fr_corr(gen, toy_index([(0,)], ids=("c0",)), [reaction])
        assert value == pytest.approx(-1.0, abs=1e-9)
        assert value < 0

    def test_duplicated_generation_doubles(self):
        rng = np.random.default_rng(1)
        reactions = [facial_series(rng.standard_normal((12, N_FACIAL)), "c0")]
        probe = facial_series(rng.standard_normal((12, N_FACIAL)))
        index = toy_index([(0,)], ids=("c0",))
        one = fr_corr(gen_set([[probe]], ids=("c0",)), index, reactions)
        two = fr_corr(gen_set([[probe, probe]], ids=("c0",)), index, reactions)
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_bigger_sets_cannot_decrease(self):
        rng = np.random.default_rng(2)
        reactions = [facial_series(rng.standard_normal((10, N_FACIAL)), f"c{i}") for i in range(3)]
        gens = gen_set([[facial_series(rng.standard_normal((10, N_FACIAL)))] for _ in range(3)])
        small = fr_corr(gens, toy_index([(0,), (1,), (2,)]), reactions)
        large = fr_corr(gens, toy_index([(0, 1, 2)] * 3), reactions)
        assert large >= small - 1e-12


class TestAcc:
    def test_gt_generation_scores_one(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        params = synth_bundle["params"]
        listeners_proc = [apply_normalization(l, params) for l in corpus.listeners]
        gen = GeneratedSet(corpus.clip_ids, tuple((l,) for l in listeners_proc))
        assert acc(gen, synth_bundle["index"], listeners_proc, synth_bundle["matrix"]) == 1.0

    def test_distant_constant_generation_scores_zero(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        params = synth_bundle["params"]
        listeners_proc = [apply_normalization(l, params) for l in corpus.listeners]
        t = listeners_proc[0].n_frames
        far = facial_series(np.full((t, N_FACIAL), 1e4))
        gen = GeneratedSet(corpus.clip_ids, tuple((far,) for _ in corpus.listeners))
        assert acc(gen, synth_bundle["index"], listeners_proc, synth_bundle["matrix"]) == 0.0

    def test_tiny_threshold_accepts_everything_nearer_than_max(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        params = synth_bundle["params"]
        listeners_proc = [apply_normalization(l, params) for l in corpus.listeners]
        index = build_index(synth_bundle["matrix"], LabelConfig(threshold=1e-9))
        rng = np.random.default_rng(0)
        jittered = [
            facial_series(l.frames + 0.01 * rng.standard_normal(l.frames.shape), l.clip_id)
            for l in listeners_proc
        ]
        gen = GeneratedSet(corpus.clip_ids, tuple((j,) for j in jittered))
        assert acc(gen, index, listeners_proc, synth_bundle["matrix"]) == 1.0

    def test_monotone_in_threshold(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        params = synth_bundle["params"]
        listeners_proc = [apply_normalization(l, params) for l in corpus.listeners]
        rng = np.random.default_rng(1)
        jittered = [
            facial_series(l.frames + 0.5 * rng.standard_normal(l.frames.shape), l.clip_id)
            for l in listeners_proc
        ]
        gen = GeneratedSet(corpus.clip_ids, tuple((j,) for j in jittered))
        prev = 1.0
        for t in (0.1, 0.3, 0.5, 0.7, 0.9):
            index = build_index(synth_bundle["matrix"], LabelConfig(threshold=t))
            value = acc(gen, index, listeners_proc, synth_bundle["matrix"])
            assert value <= prev + 1e-12
            prev = value

    def test_extra_members_cannot_decrease(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        params = synth_bundle["params"]
        listeners_proc = [apply_normalization(l, params) for l in corpus.listeners]
        index = synth_bundle["index"]
        rng = np.random.default_rng(2)
        jittered = [
            facial_series(l.frames + 1.0 * rng.standard_normal(l.frames.shape), l.clip_id)
            for l in listeners_proc
        ]
        gen = GeneratedSet(corpus.clip_ids, tuple((j,) for j in jittered))
        full_sets = AppropriatenessIndex(
            clip_ids=index.clip_ids,
            neighbors=tuple(tuple(range(corpus.size)) for _ in range(corpus.size)),
            threshold=index.threshold,
            inclusive=index.inclusive,
            matrix_hash=index.matrix_hash,
        )
        base = acc(gen, index, listeners_proc, synth_bundle["matrix"])
        widened = acc(gen, full_sets, listeners_proc, synth_bundle["matrix"])
        assert widened >= base - 1e-12

    def test_provenance_mismatch(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        stale = AppropriatenessIndex(
            clip_ids=corpus.clip_ids,
            neighbors=tuple((m,) for m in range(corpus.size)),
            threshold=0.5,
            inclusive=False,
            matrix_hash="deadbeef",
        )
        gen = GeneratedSet(corpus.clip_ids, tuple((l,) for l in corpus.listeners))
        with pytest.raises(ValidationError, match="stale index"):
            acc(gen, stale, corpus.listeners, synth_bundle["matrix"])


class TestDiversity:
    def test_fr_var_constant_is_zero(self):
        gen = gen_set([[facial_series(np.full((6, N_FACIAL), 0.3))]])
        assert fr_var(gen) == 0.0

    def test_fr_var_two_point(self):
        gen = gen_set([[broadcast_series(np.array([0.0, 2.0]))]])
        assert fr_var(gen) == pytest.approx(1.0)

    def test_fr_var_quadratic_scaling(self):
        rng = np.random.default_rng(0)
        series = facial_series(rng.standard_normal((12, N_FACIAL)))
        doubled = facial_series(2 * series.frames)
        assert fr_var(gen_set([[doubled]])) == pytest.approx(4 * fr_var(gen_set([[series]])), rel=1e-12)

    def test_fr_div_identical_zero_and_alpha1_warns(self):
        s = broadcast_series(np.array([0.0, 1.0]))
        assert fr_div(gen_set([[s, s, s]])) == 0.0
        with pytest.warns(UserWarning, match="single generation"):
            assert fr_div(gen_set([[s]])) == 0.0

    def test_fr_div_single_pair_value(self):
        a = broadcast_series(np.array([0.0, 0.0]))
        b = broadcast_series(np.array([2.0, 2.0]))
        assert fr_div(gen_set([[a, b]])) == pytest.approx(4.0)

    def test_fr_div_equidistant_triple_triples_pair_value(self):
        a = broadcast_series(np.array([0.0, 0.0]))
        b = broadcast_series(np.array([2.0, 2.0]))
        c = broadcast_series(np.array([1.0 + np.sqrt(3.0), 1.0 - np.sqrt(3.0)]))
        pair = fr_div(gen_set([[a, b]]))
        triple = fr_div(gen_set([[a, b, c]]))
        assert triple == pytest.approx(3 * pair, rel=1e-9)

    def test_fr_div_generation_order_invariant(self):
        rng = np.random.default_rng(1)
        gens = [facial_series(rng.standard_normal((8, N_FACIAL))) for _ in range(3)]
        assert fr_div(gen_set([gens])) == pytest.approx(fr_div(gen_set([gens[::-1]])), abs=1e-12)

    def test_fr_dvs_identical_across_clips_is_zero(self):
        s = broadcast_series(np.array([0.5, 0.7]))
        assert fr_dvs(gen_set([[s], [s], [s]])) == 0.0

    def test_fr_dvs_single_pair_value(self):
        a = broadcast_series(np.array([0.0, 0.0]))
        b = broadcast_series(np.array([2.0, 2.0]))
        assert fr_dvs(gen_set([[a], [b]])) == pytest.approx(4.0)

    def test_fr_dvs_clip_relabeling_invariant(self):
        rng = np.random.default_rng(2)
        gens = [[facial_series(rng.standard_normal((8, N_FACIAL)))] for _ in range(4)]
        assert fr_dvs(gen_set(gens)) == pytest.approx(fr_dvs(gen_set(gens[::-1])), abs=1e-12)

    def test_fr_dvs_needs_two_clips(self):
        with pytest.raises(ValidationError, match="at least 2"):
            fr_dvs(gen_set([[broadcast_series(np.array([0.0, 1.0]))]]))


class TestFrRea:
    def test_reproducing_the_appropriate_set(self):
        rng = np.random.default_rng(0)
        reactions = [facial_series(rng.standard_normal((40, N_FACIAL)), f"c{i}") for i in range(2)]
        index = toy_index([(0,), (1,)])
        gen = gen_set([[reactions[0]], [reactions[1]]])
        assert fr_rea(gen, index, reactions) <= 1e-4

    def test_single_channel_shift_matches_closed_form(self):
        rng = np.random.default_rng(1)
        frames = rng.standard_normal((200, N_FACIAL))
        reaction = facial_series(frames, "c0")
        c = 0.7
        shifted = frames.copy()
        shifted[:, 3] += c
        gen = gen_set([[facial_series(shifted)]], ids=("c0",))
        value = fr_rea(gen, toy_index([(0,)], ids=("c0",)), [reaction])
        assert value == pytest.approx(c**2, abs=1e-6)

    def test_frame_order_invariant(self):
        rng = np.random.default_rng(2)
        frames = rng.standard_normal((60, N_FACIAL))
        reaction = facial_series(rng.standard_normal((60, N_FACIAL)), "c0")
        index = toy_index([(0,)], ids=("c0",))
        a = fr_rea(gen_set([[facial_series(frames)]], ids=("c0",)), index, [reaction])
        b = fr_rea(
            gen_set([[facial_series(frames[rng.permutation(60)])]], ids=("c0",)), index, [reaction]
        )
        assert a == pytest.approx(b, abs=1e-9)

    def test_pooled_variant(self):
        rng = np.random.default_rng(3)
        reactions = [facial_series(rng.standard_normal((30, N_FACIAL)), f"c{i}") for i in range(2)]
        index = toy_index([(0,), (1,)])
        gen = gen_set([[reactions[0]], [reactions[1]]])
        assert fr_rea(gen, index, reactions, pooled=True) <= 1e-4


class TestFrSyn:
    def test_mirror_is_synchronous(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        gen = GeneratedSet(
            corpus.clip_ids,
            tuple((facial_series(s.frames.copy(), s.clip_id),) for s in corpus.speakers),
        )
        assert fr_syn(gen, corpus.speakers, max_lag=8) == 0.0

    def test_planted_delay(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        k = 3
        delayed = []
        for s in corpus.speakers:
            frames = np.empty_like(s.frames)
            frames[k:] = s.frames[:-k]
            frames[:k] = s.frames[0]
            delayed.append(facial_series(frames, s.clip_id))
        gen = GeneratedSet(corpus.clip_ids, tuple((d,) for d in delayed))
        assert fr_syn(gen, corpus.speakers, max_lag=8) == pytest.approx(float(k))

    def test_duplicated_generation_doubles(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        k = 2
        delayed = []
        for s in corpus.speakers:
            frames = np.empty_like(s.frames)
            frames[k:] = s.frames[:-k]
            frames[:k] = s.frames[0]
            delayed.append(facial_series(frames, s.clip_id))
        one = fr_syn(GeneratedSet(corpus.clip_ids, tuple((d,) for d in delayed)), corpus.speakers, 8)
        two = fr_syn(GeneratedSet(corpus.clip_ids, tuple((d, d) for d in delayed)), corpus.speakers, 8)
        assert two == pytest.approx(2 * one)


class TestEvaluateAll:
    def test_ground_truth_fixed_point(self, synth_bundle, gt_as_generation):
        report = evaluate_all(
            gt_as_generation,
            synth_bundle["index"],
            synth_bundle["matrix"],
            synth_bundle["corpus"],
            EvalConfig(max_lag=10),
        )
        assert report.frdist == pytest.approx(0.0, abs=1e-9)
        assert report.frcorr == pytest.approx(1.0, abs=1e-9)
        assert report.acc == pytest.approx(1.0, abs=1e-9)
        assert report.frdiv == pytest.approx(0.0, abs=1e-9)

    def test_all_fields_finite_on_random_generation(self, synth_bundle):
        from facereact import baseline_random

        corpus = synth_bundle["corpus"]
        t = corpus.listeners[0].n_frames
        gen = GeneratedSet(
            corpus.clip_ids,
            tuple(
                tuple(baseline_random(corpus.schema, t, 2, seed=m))
                for m in range(corpus.size)
            ),
        )
        report = evaluate_all(gen, synth_bundle["index"], synth_bundle["matrix"], corpus, EvalConfig(max_lag=10))
        for name, value in report.as_dict().items():
            assert np.isfinite(value), name
        assert 0.0 <= report.acc <= 1.0
        assert report.frdiv > 0

    def test_report_keys_are_the_eight_metrics(self, synth_bundle, gt_as_generation):
        report = evaluate_all(
            gt_as_generation, synth_bundle["index"], synth_bundle["matrix"], synth_bundle["corpus"], EvalConfig(max_lag=10)
        )
        metric_keys = [l.split("=")[0] for l in report.kv_lines() if l.startswith("metric.")]
        assert metric_keys == [f"metric.{n}" for n in METRIC_NAMES]

    def test_wrong_generation_length_rejected(self, synth_bundle):
        corpus = synth_bundle["corpus"]
        short = facial_series(np.zeros((10, N_FACIAL)))
        gen = GeneratedSet(corpus.clip_ids, tuple((short,) for _ in range(corpus.size)))
        with pytest.raises(ValidationError, match="frames"):
            evaluate_all(gen, synth_bundle["index"], synth_bundle["matrix"], corpus, EvalConfig(max_lag=10))

    def test_empty_generated_set_rejected(self):
        with pytest.raises(ValidationError, match="empty generated set"):
            GeneratedSet(clip_ids=(), reactions=())

    def test_ragged_alpha_rejected(self):
        s = broadcast_series(np.array([0.0, 1.0]))
        with pytest.raises(ValidationError, match="uniform"):
            GeneratedSet(clip_ids=("a", "b"), reactions=((s,), (s, s)))


class TestGeneratedSetIO:
    def test_roundtrip_via_files(self, synth_bundle, tmp_path):
        corpus = synth_bundle["corpus"]
        for cid, listener in zip(corpus.clip_ids, corpus.listeners):
            write_clip_series(tmp_path / f"{cid}.gen1.csv", listener)
        gen = load_generated_set(tmp_path, corpus)
        assert gen.alpha == 1
        assert gen.clip_ids == corpus.clip_ids
        for loaded, gt in zip(gen.reactions, corpus.listeners):
            np.testing.assert_allclose(loaded[0].frames, gt.frames, atol=1e-9)

    def test_wrong_length_names_file(self, synth_bundle, tmp_path):
        corpus = synth_bundle["corpus"]
        for cid, listener in zip(corpus.clip_ids, corpus.listeners):
            write_clip_series(tmp_path / f"{cid}.gen1.csv", listener)
        bad = corpus.listeners[0]
        truncated = facial_series(bad.frames[:-5], bad.clip_id)
        write_clip_series(tmp_path / f"{corpus.clip_ids[0]}.gen1.csv", truncated)
        with pytest.raises(ValidationError, match=rf"{corpus.clip_ids[0]}\.gen1\.csv"):
            load_generated_set(tmp_path, corpus)

    def test_missing_generation(self, synth_bundle, tmp_path):
        corpus = synth_bundle["corpus"]
        with pytest.raises(ValidationError, match="no generations found"):
            load_generated_set(tmp_path, corpus)

    def test_ragged_alpha(self, synth_bundle, tmp_path):
        corpus = synth_bundle["corpus"]
        for cid, listener in zip(corpus.clip_ids, corpus.listeners):
            write_clip_series(tmp_path / f"{cid}.gen1.csv", listener)
        write_clip_series(tmp_path / f"{corpus.clip_ids[0]}.gen2.csv", corpus.listeners[0])
        with pytest.raises(ValidationError, match="generations"):
            load_generated_set(tmp_path, corpus)
