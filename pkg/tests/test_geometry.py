"""Cost-matrix builders and the transport score, both evaluation paths."""

import numpy as np
import pytest

from wood.errors import DimensionError
from wood.geometry import (
    EvalPath,
    ScoreConfig,
    binary_matrix,
    dynamic_matrix,
    score_argmin_class,
    wasserstein_to_onehot,
    wood_score,
)
from wood.oracles import lp_transport
from wood.transport import CostKind, SinkhornConfig, one_hot

from conftest import random_simplex

CLOSED_BINARY = ScoreConfig(CostKind.BINARY, EvalPath.CLOSED_FORM)
CLOSED_DYNAMIC = ScoreConfig(CostKind.DYNAMIC, EvalPath.CLOSED_FORM)


def sinkhorn_cfg(kind, lam=50.0):
    return ScoreConfig(kind, EvalPath.SINKHORN, SinkhornConfig(lam=lam))


class TestBinaryMatrix:
    def test_k2(self):
        np.testing.assert_array_equal(binary_matrix(2).entries, [[0, 1], [1, 0]])

    def test_k3_structure(self):
        m = binary_matrix(3).entries
        assert np.all(np.diag(m) == 0)
        assert np.sum(m) == 6

    def test_degenerate_k(self):
        with pytest.raises(DimensionError):
            binary_matrix(1)


class TestDynamicMatrix:
    def test_uniform_k2(self):
        m = dynamic_matrix([0.5, 0.5], 0)
        np.testing.assert_array_equal(m.entries, [[0.5, 0.5], [0.5, 0.5]])

    def test_one_hot_columns(self):
        # f = e_0, k = 0: first column (0,1,1), the others (1,0,0).
        m = dynamic_matrix([1.0, 0.0, 0.0], 0).entries
        np.testing.assert_array_equal(m[:, 0], [0, 1, 1])
        np.testing.assert_array_equal(m[:, 1], [1, 0, 0])
        np.testing.assert_array_equal(m[:, 2], [1, 0, 0])

    def test_labeled_row_and_other_rows_sum_to_one(self, rng):
        f = random_simplex(rng, 4)
        m = dynamic_matrix(f, 2).entries
        for row in range(4):
            if row != 2:
                np.testing.assert_allclose(m[2] + m[row], np.ones(4), atol=1e-15)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            dynamic_matrix([0.5, 0.5], 2)


class TestWassersteinToOnehot:
    def test_uniform_dynamic_k10(self):
        f = np.full(10, 0.1)
        assert wasserstein_to_onehot(f, 3, CLOSED_DYNAMIC) == pytest.approx(0.9, abs=1e-15)

    def test_mass_on_label_is_zero(self):
        f = one_hot(1, 3)
        assert wasserstein_to_onehot(f, 1, CLOSED_BINARY) == 0.0
        assert wasserstein_to_onehot(f, 1, CLOSED_DYNAMIC) == 0.0

    def test_frozen_example_values(self):
        f = [0.5, 0.3, 0.2]
        assert wasserstein_to_onehot(f, 0, CLOSED_BINARY) == pytest.approx(0.5)
        assert wasserstein_to_onehot(f, 0, CLOSED_DYNAMIC) == pytest.approx(0.62)

    def test_closed_form_matches_lp_oracle(self, rng):
        for _ in range(20):
            k = int(rng.integers(2, 6))
            f = random_simplex(rng, k)
            label = int(rng.integers(k))
            cf_binary = wasserstein_to_onehot(f, label, CLOSED_BINARY)
            lp_binary, _ = lp_transport(one_hot(label, k), f, binary_matrix(k))
            assert cf_binary == pytest.approx(lp_binary, abs=1e-8)
            cf_dynamic = wasserstein_to_onehot(f, label, CLOSED_DYNAMIC)
            lp_dynamic, _ = lp_transport(one_hot(label, k), f, dynamic_matrix(f, label))
            assert cf_dynamic == pytest.approx(lp_dynamic, abs=1e-8)

    def test_closed_form_vs_sinkhorn_band(self, rng):
        # |closed - sinkhorn(lam=100)| <= 2% of max(closed, 0.05)
        for kind in (CostKind.BINARY, CostKind.DYNAMIC):
            cfg100 = sinkhorn_cfg(kind, lam=100.0)
            closed = ScoreConfig(kind, EvalPath.CLOSED_FORM)
            for _ in range(200):
                k = int(rng.integers(2, 8))
                f = random_simplex(rng, k)
                label = int(rng.integers(k))
                a = wasserstein_to_onehot(f, label, closed)
                b = wasserstein_to_onehot(f, label, cfg100)
                assert abs(a - b) <= 0.02 * max(a, 0.05)


class TestWoodScore:
    def test_binary_min_is_one_minus_max(self):
        f = [0.5, 0.3, 0.2]
        assert wood_score(f, CLOSED_BINARY) == pytest.approx(0.5)
        assert score_argmin_class(f, CLOSED_BINARY) == 0

    def test_one_hot_scores_zero(self):
        f = one_hot(1, 4)
        assert wood_score(f, CLOSED_BINARY) == 0.0
        assert wood_score(f, CLOSED_DYNAMIC) == 0.0

    def test_uniform_dynamic_k10(self):
        assert wood_score(np.full(10, 0.1), CLOSED_DYNAMIC) == pytest.approx(0.9)

    def test_argmin_examples(self):
        assert score_argmin_class([0.2, 0.7, 0.1], CLOSED_BINARY) == 1
        assert score_argmin_class([1 / 3, 1 / 3, 1 / 3], CLOSED_BINARY) == 0
        assert score_argmin_class([0.2, 0.7, 0.1], CLOSED_DYNAMIC) == 0

    def test_sinkhorn_binary_argmin_matches_closed(self, rng):
        cfg = sinkhorn_cfg(CostKind.BINARY)
        for _ in range(10):
            f = random_simplex(rng, 4)
            assert score_argmin_class(f, cfg) == score_argmin_class(f, CLOSED_BINARY)


class TestPropositions:
    def test_label_invariance_closed_form_bitwise(self, rng):
        cfg = CLOSED_DYNAMIC
        for _ in range(50):
            k = int(rng.integers(2, 11))
            f = random_simplex(rng, k)
            values = {wasserstein_to_onehot(f, label, cfg) for label in range(k)}
            assert len(values) == 1

    def test_label_invariance_sinkhorn_spread(self, rng):
        cfg = sinkhorn_cfg(CostKind.DYNAMIC, lam=50.0)
        for _ in range(10):
            f = random_simplex(rng, 10)
            values = [wasserstein_to_onehot(f, label, cfg) for label in range(10)]
            assert max(values) - min(values) <= 1e-6

    def test_uniform_attains_strict_maximum(self, rng):
        for k in (2, 5, 10):
            uniform = np.full(k, 1.0 / k)
            top = wood_score(uniform, CLOSED_DYNAMIC)
            assert top == pytest.approx(1.0 - 1.0 / k, abs=1e-12)
            for _ in range(200):
                f = random_simplex(rng, k)
                assert wood_score(f, CLOSED_DYNAMIC) < top

    def test_score_ranges(self, rng):
        for _ in range(100):
            k = int(rng.integers(2, 11))
            f = random_simplex(rng, k)
            for cfg in (CLOSED_BINARY, CLOSED_DYNAMIC):
                s = wood_score(f, cfg)
                assert 0.0 <= s <= 1.0 - 1.0 / k + 1e-12
