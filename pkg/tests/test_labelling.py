from __future__ import annotations

import struct

import numpy as np
import pytest

from facereact import (
    DtwConfig,
    LabelConfig,
    ProvenanceError,
    SimilarityMatrix,
    ValidationError,
    build_index,
    load_index,
    load_matrix,
    pairwise_matrix,
    rethreshold_index,
    save_index,
    save_matrix,
)
from facereact.labelling import check_provenance, resolve_threshold

from _oracles import naive_dtw, naive_neighbor_sets


def mk_matrix(distances, clip_ids=None, band=None, factor=1):
    d = np.asarray(distances, dtype=float)
    ids = tuple(clip_ids) if clip_ids else tuple(f"c{i}" for i in range(d.shape[0]))
    return SimilarityMatrix(
        clip_ids=ids,
        distances=d,
        max_dtw=float(d.max()),
        band_radius=band,
        downsample_factor=factor,
        config_hash=LabelConfig(threshold=0.5).distance_config_hash(),
    )


def random_corpus(rng, m=10, t=12, c=3):
    return [rng.standard_normal((t, c)) for _ in range(m)]


class TestPairwiseMatrix:
    def test_identical_corpus_is_degenerate(self):
        x = np.random.default_rng(0).standard_normal((8, 2))
        with pytest.raises(ValidationError, match="degenerate corpus"):
            pairwise_matrix([x, x.copy()], LabelConfig(threshold=0.5))

    def test_outlier_sets_max(self):
        rng = np.random.default_rng(1)
        base = rng.standard_normal((10, 2))
        near = base + 0.01
        far = base + 50.0
        matrix = pairwise_matrix([base, near, far], LabelConfig(threshold=0.5))
        expected = max(naive_dtw(a, b) for a, b in [(base, near), (base, far), (near, far)])
        assert matrix.max_dtw == pytest.approx(expected, rel=1e-9)
        assert matrix.max_dtw == pytest.approx(naive_dtw(base, far), rel=1e-9) or matrix.max_dtw == pytest.approx(
            naive_dtw(near, far), rel=1e-9
        )

    def test_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(2)
        matrix = pairwise_matrix(random_corpus(rng), LabelConfig(threshold=0.5))
        np.testing.assert_allclose(matrix.distances, matrix.distances.T, atol=1e-9)
        np.testing.assert_array_equal(np.diag(matrix.distances), 0.0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        series = random_corpus(rng, m=8)
        matrix = pairwise_matrix(series, LabelConfig(threshold=0.5))
        for i in range(8):
            for j in range(8):
                assert matrix.distances[i, j] == pytest.approx(naive_dtw(series[i], series[j]), abs=1e-9)

    def test_too_few_clips(self):
        with pytest.raises(ValidationError, match="at least 2"):
            pairwise_matrix([np.zeros((4, 1))], LabelConfig(threshold=0.5))

    def test_thread_count_does_not_change_bits(self):
        rng = np.random.default_rng(4)
        series = random_corpus(rng, m=12)
        serial = pairwise_matrix(series, LabelConfig(threshold=0.5), threads=1)
        threaded = pairwise_matrix(series, LabelConfig(threshold=0.5), threads=4)
        assert np.array_equal(serial.distances, threaded.distances)
        assert serial.max_dtw == threaded.max_dtw


class TestBuildIndex:
    def test_tiny_threshold_excludes_only_the_farthest_pairs(self):
        # The max-distance pair always has similarity exactly 0, which no
        # positive threshold admits under the strict rule; everything else
        # joins every set as the threshold approaches 0.
        rng = np.random.default_rng(0)
        matrix = pairwise_matrix(random_corpus(rng, m=6), LabelConfig(threshold=0.001))
        index = build_index(matrix, LabelConfig(threshold=1e-9))
        sims = matrix.similarities()
        for i in range(6):
            for j in range(6):
                if sims[i, j] > 1e-9:
                    assert j in index.neighbors[i]
                else:
                    assert matrix.distances[i, j] == pytest.approx(matrix.max_dtw, rel=1e-9)

    def test_huge_threshold_gives_singletons(self):
        rng = np.random.default_rng(1)
        matrix = pairwise_matrix(random_corpus(rng, m=6), LabelConfig(threshold=0.999))
        index = build_index(matrix, LabelConfig(threshold=0.999))
        assert all(n == (i,) for i, n in enumerate(index.neighbors))

    def test_planted_three_clip_sets(self):
        matrix = mk_matrix([[0.0, 1.0, 10.0], [1.0, 0.0, 10.0], [10.0, 10.0, 0.0]])
        index = build_index(matrix, LabelConfig(threshold=0.5))
        assert index.neighbors == ((0, 1), (0, 1), (2,))

    def test_reflexive_and_symmetric(self):
        rng = np.random.default_rng(2)
        matrix = pairwise_matrix(random_corpus(rng, m=10), LabelConfig(threshold=0.5))
        for t in (0.1, 0.3, 0.5, 0.7, 0.9):
            index = build_index(matrix, LabelConfig(threshold=t))
            for m, neigh in enumerate(index.neighbors):
                assert m in neigh
                for j in neigh:
                    assert m in index.neighbors[j]

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(3)
        matrix = pairwise_matrix(random_corpus(rng, m=10), LabelConfig(threshold=0.5))
        previous = None
        for t in np.linspace(0.05, 0.95, 10):
            index = build_index(matrix, LabelConfig(threshold=float(t)))
            sets = [set(n) for n in index.neighbors]
            if previous is not None:
                assert all(s <= p for s, p in zip(sets, previous))
            previous = sets

    def test_matches_naive_thresholding(self):
        rng = np.random.default_rng(4)
        series = random_corpus(rng, m=12)
        matrix = pairwise_matrix(series, LabelConfig(threshold=0.5))
        naive_d = np.array([[naive_dtw(a, b) for b in series] for a in series])
        for t in (0.2, 0.5, 0.8):
            index = build_index(matrix, LabelConfig(threshold=t))
            assert index.neighbors == naive_neighbor_sets(naive_d, t)

    def test_percentile_mode_is_inclusive(self):
        rng = np.random.default_rng(5)
        matrix = pairwise_matrix(random_corpus(rng, m=8), LabelConfig(percentile=75.0))
        index = build_index(matrix, LabelConfig(percentile=75.0))
        assert index.inclusive
        value, inclusive = resolve_threshold(matrix, LabelConfig(percentile=75.0))
        assert inclusive
        assert index.threshold == value

    def test_degenerate_max(self):
        with pytest.raises(ValidationError, match="degenerate"):
            mk_matrix(np.zeros((3, 3))).similarities()

    def test_config_validation(self):
        with pytest.raises(ValidationError, match="exactly one"):
            LabelConfig(threshold=0.5, percentile=90.0)
        with pytest.raises(ValidationError, match="exactly one"):
            LabelConfig()
        with pytest.raises(ValidationError, match="threshold"):
            LabelConfig(threshold=1.5)


class TestRethreshold:
    @pytest.mark.parametrize("config", [LabelConfig(threshold=0.4), LabelConfig(threshold=0.75),
                                        LabelConfig(percentile=80.0)])
    def test_pruned_recompute_matches_exact_index(self, config):
        rng = np.random.default_rng(6)
        series = random_corpus(rng, m=12, t=15)
        matrix = pairwise_matrix(series, config)
        exact = build_index(matrix, config)
        pruned = rethreshold_index(series, matrix, config)
        assert pruned.neighbors == exact.neighbors
        assert pruned.threshold == exact.threshold

    def test_banded_config_consistency(self):
        rng = np.random.default_rng(7)
        series = random_corpus(rng, m=8, t=20)
        config = LabelConfig(threshold=0.5, dtw=DtwConfig(band_radius=3))
        matrix = pairwise_matrix(series, config)
        assert build_index(matrix, config).neighbors == rethreshold_index(series, matrix, config).neighbors


class TestMatrixPersistence:
    def test_bitwise_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = pairwise_matrix(random_corpus(rng), LabelConfig(threshold=0.5))
        path = tmp_path / "dist.mat"
        save_matrix(path, matrix)
        loaded = load_matrix(path)
        assert np.array_equal(loaded.distances, matrix.distances)
        assert loaded.max_dtw == matrix.max_dtw
        assert loaded.clip_ids == matrix.clip_ids
        assert loaded.content_hash() == matrix.content_hash()

    def test_tampered_payload_detected(self, tmp_path):
        rng = np.random.default_rng(1)
        matrix = pairwise_matrix(random_corpus(rng), LabelConfig(threshold=0.5))
        path = tmp_path / "dist.mat"
        save_matrix(path, matrix)
        data = bytearray(path.read_bytes())
        data[-5] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ProvenanceError, match="hash mismatch"):
            load_matrix(path)

    def test_truncated_file(self, tmp_path):
        rng = np.random.default_rng(2)
        matrix = pairwise_matrix(random_corpus(rng), LabelConfig(threshold=0.5))
        path = tmp_path / "dist.mat"
        save_matrix(path, matrix)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ValidationError, match="does not match header"):
            load_matrix(path)

    def test_wrong_m_in_header(self, tmp_path):
        rng = np.random.default_rng(3)
        matrix = pairwise_matrix(random_corpus(rng, m=5), LabelConfig(threshold=0.5))
        path = tmp_path / "dist.mat"
        save_matrix(path, matrix)
        data = bytearray(path.read_bytes())
        data[12:16] = struct.pack("<I", 99)  # M field follows magic + version
        path.write_bytes(bytes(data))
        with pytest.raises(ValidationError, match="does not match header"):
            load_matrix(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "dist.mat"
        path.write_bytes(b"NOTAMTRX" + b"\x00" * 120)
        with pytest.raises(ValidationError, match="bad magic"):
            load_matrix(path)

    def test_missing_sidecar(self, tmp_path):
        rng = np.random.default_rng(4)
        matrix = pairwise_matrix(random_corpus(rng), LabelConfig(threshold=0.5))
        path = tmp_path / "dist.mat"
        save_matrix(path, matrix)
        (tmp_path / "dist.mat.clips").unlink()
        with pytest.raises(ValidationError, match="sidecar"):
            load_matrix(path)


class TestIndexPersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        matrix = pairwise_matrix(random_corpus(rng), LabelConfig(threshold=0.5))
        index = build_index(matrix, LabelConfig(threshold=0.5))
        path = tmp_path / "sets.idx"
        save_index(path, index)
        loaded = load_index(path)
        assert loaded == index

    def test_provenance_check(self, tmp_path):
        rng = np.random.default_rng(1)
        series = random_corpus(rng)
        matrix = pairwise_matrix(series, LabelConfig(threshold=0.5))
        index = build_index(matrix, LabelConfig(threshold=0.5))
        check_provenance(index, matrix)  # same run: fine
        other = pairwise_matrix([s * 2 for s in series], LabelConfig(threshold=0.5))
        with pytest.raises(ProvenanceError, match="stale index"):
            check_provenance(index, other)

    def test_missing_header_field(self, tmp_path):
        path = tmp_path / "sets.idx"
        path.write_text("# threshold: 0.5\nc0: c0\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="missing header"):
            load_index(path)

    def test_unknown_clip_in_set(self, tmp_path):
        path = tmp_path / "sets.idx"
        path.write_text(
            "# threshold: 0.5\n# inclusive: false\n# matrix_hash: ab\nc0: c0,zz\n",
            encoding="utf-8",
        )
        with pytest.raises(ValidationError, match="unknown clip id"):
            load_index(path)
