import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from effectrank import (
    RankingMetrics,
    auqc_normalized,
    auqc_true,
    kendall_tau,
    mse,
    qini_curve,
    ranking_metrics,
)

from .conftest import make_dataset


def auqc_double_sum(tau, order):
    """Direct cumulative double-sum form: sum over k of the top-k effect total."""
    ranked = np.asarray(tau, dtype=np.float64)[order]
    return float(sum(ranked[: k + 1].sum() for k in range(len(ranked))))


def kendall_brute(scores, tau):
    """Tau-b from explicit pair counting with tie corrections."""
    scores = np.asarray(scores, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    n = scores.shape[0]
    conc = disc = ties_s = ties_t = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = np.sign(scores[i] - scores[j])
            b = np.sign(tau[i] - tau[j])
            if a == 0 and b == 0:
                ties_s += 1
                ties_t += 1
            elif a == 0:
                ties_s += 1
            elif b == 0:
                ties_t += 1
            elif a == b:
                conc += 1
            else:
                disc += 1
    n0 = n * (n - 1) // 2
    denom = np.sqrt((n0 - ties_s) * (n0 - ties_t))
    return (conc - disc) / denom


class TestAuqcTrue:
    def test_hand_examples(self):
        tau = np.array([3.0, 1.0, 2.0])
        # Scores ranking tau descending: 3, 2, 1.
        assert auqc_true(tau, np.array([3.0, 1.0, 2.0])) == 14.0
        # Scores keeping file order: 3, 1, 2.
        assert auqc_true(tau, np.array([3.0, 2.0, 1.0])) == 13.0

    def test_zero_effects(self):
        assert auqc_true(np.zeros(5), np.arange(5.0)) == 0.0

    def test_equals_double_sum_all_permutations(self):
        rng = np.random.default_rng(0)
        for n in range(2, 8):
            tau = rng.integers(-5, 6, size=n).astype(np.float64)
            for order in itertools.permutations(range(n)):
                order = np.array(order)
                scores = np.empty(n)
                scores[order] = np.arange(n, 0, -1, dtype=np.float64)
                assert auqc_true(tau, scores) == auqc_double_sum(tau, order)

    def test_equals_double_sum_real_tau(self, rng):
        for n in (2, 5, 7):
            tau = rng.normal(size=n)
            for order in itertools.permutations(range(n)):
                order = np.array(order)
                scores = np.empty(n)
                scores[order] = np.arange(n, 0, -1, dtype=np.float64)
                assert abs(auqc_true(tau, scores) - auqc_double_sum(tau, order)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            auqc_true(np.ones(3), np.ones(4))


class TestAuqcNormalized:
    def test_perfect_is_one(self):
        tau = np.array([3.0, 1.0, 2.0])
        assert auqc_normalized(tau, tau) == 1.0

    def test_hand_values(self):
        tau = np.array([3.0, 1.0, 2.0])
        keep_order = np.array([3.0, 2.0, 1.0])
        assert auqc_normalized(tau, keep_order) == pytest.approx(0.5)
        assert auqc_normalized(tau, -tau) == pytest.approx(-1.0)

    def test_random_mean_is_permutation_mean(self, rng):
        # A_rand must equal the exhaustive permutation average of the raw area.
        for n in (3, 5, 6):
            tau = rng.normal(size=n)
            areas = []
            for order in itertools.permutations(range(n)):
                scores = np.empty(n)
                scores[np.array(order)] = np.arange(n, 0, -1, dtype=np.float64)
                areas.append(auqc_true(tau, scores))
            assert np.mean(areas) == pytest.approx(tau.sum() * (n + 1) / 2, rel=1e-12)

    def test_bounded_by_one_exhaustive(self, rng):
        for n in (2, 4, 6):
            tau = rng.normal(size=n)
            for order in itertools.permutations(range(n)):
                scores = np.empty(n)
                scores[np.array(order)] = np.arange(n, 0, -1, dtype=np.float64)
                assert auqc_normalized(tau, scores) <= 1.0 + 1e-12

    def test_monotone_transform_invariance(self, rng):
        tau = rng.normal(size=40)
        scores = rng.normal(size=40)
        base = auqc_normalized(tau, scores)
        assert auqc_normalized(tau, 3.0 * scores + 7.0) == base
        assert auqc_normalized(tau, np.exp(scores)) == base

    def test_constant_tau_degenerate(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            value = auqc_normalized(np.full(4, 2.5), np.arange(4.0))
        assert value == 0.0
        assert caught and "undefined" in str(caught[0].message).lower()


class TestQiniCurve:
    def test_toy_treated_first(self):
        curve = qini_curve(
            scores=np.array([2.0, 1.0]), outcome=np.array([1.0, 0.0]), treatment=np.array([1, 0])
        )
        np.testing.assert_allclose(curve.q, [0.0, 1.0, 1.0])
        assert curve.area == 2.0

    def test_balanced_constant_outcome_flat(self):
        curve = qini_curve(
            scores=np.array([4.0, 3.0, 2.0, 1.0]),
            outcome=np.ones(4),
            treatment=np.array([1, 0, 1, 0]),
        )
        assert curve.q[-1] == 0.0
        assert curve.normalized_area == 0.0

    def test_zero_outcomes(self):
        curve = qini_curve(np.arange(6.0), np.zeros(6), np.array([1, 0, 1, 0, 1, 0]))
        np.testing.assert_array_equal(curve.q, np.zeros(7))
        assert curve.area == 0.0

    def test_manual_prefix_computation(self, rng):
        n = 30
        scores = rng.normal(size=n)
        y = rng.normal(size=n)
        t = rng.integers(0, 2, size=n)
        if t.min() == t.max():
            t[0] = 1 - t[0]
        curve = qini_curve(scores, y, t)
        order = np.argsort(-scores, kind="stable")
        global_ratio = t.sum() / (n - t.sum())
        for m in (1, 7, n):
            top = order[:m]
            nt = t[top].sum()
            nc = m - nt
            ratio = nt / nc if nc > 0 else global_ratio
            expected = y[top][t[top] == 1].sum() - y[top][t[top] == 0].sum() * ratio
            assert curve.q[m] == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert curve.area == pytest.approx(curve.q[1:].sum())

    def test_single_arm_rejected(self):
        with pytest.raises(ValueError):
            qini_curve(np.arange(3.0), np.ones(3), np.array([1, 1, 1]))

    def test_curve_length_and_csv(self, tmp_path, rng):
        n = 12
        t = np.array([1, 0] * 6)
        curve = qini_curve(rng.normal(size=n), rng.normal(size=n), t)
        assert curve.m.shape == (n + 1,) and curve.q.shape == (n + 1,)
        path = tmp_path / "qini.csv"
        curve.to_csv(str(path))
        lines = path.read_text().strip().splitlines()
        assert len(lines) == n + 2
        assert lines[0].split(",")[0] == "m"


class TestKendall:
    def test_identity_and_reversal(self):
        x = np.array([0.3, 1.2, -0.5, 2.0])
        assert kendall_tau(x, x) == 1.0
        assert kendall_tau(-x, x) == -1.0

    def test_single_adjacent_swap(self):
        assert kendall_tau(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0, 2.0, 4.0, 3.0])) == pytest.approx(2 / 3)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_matches_pair_counting_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 12))
        # Integer grids force ties to exercise the tie corrections.
        scores = rng.integers(0, 4, size=n).astype(np.float64)
        tau = rng.integers(0, 4, size=n).astype(np.float64)
        if np.all(scores == scores[0]) or np.all(tau == tau[0]):
            return
        assert kendall_tau(scores, tau) == pytest.approx(kendall_brute(scores, tau), abs=1e-12)

    def test_one_sided_constant_is_zero(self):
        assert kendall_tau(np.ones(5), np.arange(5.0)) == 0.0
        assert kendall_tau(np.arange(5.0), np.ones(5)) == 0.0

    def test_both_constant_undefined(self):
        with pytest.raises(ValueError):
            kendall_tau(np.ones(4), np.zeros(4))

    def test_too_short(self):
        with pytest.raises(ValueError):
            kendall_tau(np.array([1.0]), np.array([1.0]))


class TestMse:
    def test_examples(self):
        assert mse(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
        assert mse(np.array([2.0, 3.0]), np.array([1.0, 2.0])) == 1.0
        assert mse(np.array([0.0, 2.0]), np.array([1.0, 1.0])) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.ones(2), np.ones(3))


class TestRankingMetrics:
    def test_with_ground_truth(self, rng):
        n = 50
        ds = make_dataset(
            rng.normal(size=(n, 2)),
            rng.integers(0, 2, size=n),
            rng.normal(size=n),
            rng.normal(size=n),
        )
        scores = rng.normal(size=n)
        metrics = ranking_metrics(scores, ds)
        assert metrics.auqc_norm == auqc_normalized(ds.true_tau, scores)
        assert metrics.kendall == kendall_tau(scores, ds.true_tau)
        assert metrics.mse == mse(scores, ds.true_tau)
        assert metrics.qini_norm == qini_curve(scores, ds.outcome, ds.treatment).normalized_area
        d = metrics.to_dict()
        assert set(d) == {"qini_norm", "auqc_norm", "kendall", "mse"}

    def test_without_ground_truth(self, rng):
        n = 30
        ds = make_dataset(rng.normal(size=(n, 2)), np.array([0, 1] * 15), rng.normal(size=n))
        metrics = ranking_metrics(rng.normal(size=n), ds)
        assert metrics.auqc_norm is None and metrics.kendall is None and metrics.mse is None
        assert isinstance(metrics.qini_norm, float)

    def test_dataclass_defaults(self):
        m = RankingMetrics(qini_norm=0.5)
        assert m.auqc_norm is None
