"""Ranking quality metrics for treatment-effect models.

The central quantity is the area under the cumulative-effect curve of a ranking:
walk the instances from the highest score down, keep a running sum of their true
effects, and add up that running sum after every step. Algebraically the area
equals a gain sum with a linear positional discount, so the best achievable value
is reached by sorting on the true effects themselves, and the average over all
orderings has a closed form. Those two anchors turn the raw area into the
normalized score used everywhere in this package: 1 is a perfect ordering, 0 is
what shuffling achieves on average.

When true effects are unknown the same idea runs on observed outcomes of the two
trial arms instead, giving the incremental-outcome curve and its normalized area.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset

__all__ = [
    "QiniCurve",
    "RankingMetrics",
    "auqc_true",
    "auqc_normalized",
    "qini_curve",
    "kendall_tau",
    "mse",
    "ranking_metrics",
]


def _descending_order(scores: np.ndarray) -> np.ndarray:
    """Indices sorting scores high to low; ties keep their input order."""
    return np.argsort(-scores, kind="stable")


def _check_1d(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def auqc_true(tau: np.ndarray, scores: np.ndarray) -> float:
    """Area under the cumulative true-effect curve of the score ranking.

    Equal to the gain sum with linear discount: instance at 1-based position i of
    the descending-score order contributes tau_i * (n - i + 1). Ties in scores are
    broken by input index.
    """
    tau = _check_1d("tau", tau)
    scores = _check_1d("scores", scores)
    if tau.shape != scores.shape:
        raise ValueError(f"length mismatch: tau {tau.shape[0]} vs scores {scores.shape[0]}")
    n = tau.shape[0]
    order = _descending_order(scores)
    discounts = np.arange(n, 0, -1, dtype=np.float64)
    return float(tau[order] @ discounts)


def auqc_normalized(tau: np.ndarray, scores: np.ndarray) -> float:
    """Normalized curve area: 1 for a perfect ranking, 0 in expectation for random.

    The random anchor is the exact average over all orderings, sum(tau)*(n+1)/2.
    With every effect identical the perfect and random anchors coincide and no
    ranking is better than any other; that degenerate case returns 0 with a
    warning.
    """
    tau = _check_1d("tau", tau)
    area = auqc_true(tau, scores)
    best = auqc_true(tau, tau)
    rand = float(tau.sum()) * (tau.shape[0] + 1) / 2.0
    denom = best - rand
    if denom <= 1e-12 * max(1.0, abs(best), abs(rand)):
        warnings.warn("all effects equal; normalized curve area undefined, returning 0.0")
        return 0.0
    return (area - rand) / denom


@dataclass
class QiniCurve:
    """Incremental-outcome curve estimated from the two trial arms.

    points holds q(m) for m = 0..n where q(m) is the cumulative treated outcome
    minus the cumulative control outcome scaled by the treated/control count
    ratio, both restricted to the top m instances of the ranking. area sums
    q(1)..q(n); normalized_area rescales area minus the random-ranking diagonal
    by n * |q(n)| so that values are comparable across datasets.
    """

    m: np.ndarray
    q: np.ndarray
    area: float
    normalized_area: float

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "q"])
            for m_i, q_i in zip(self.m, self.q):
                writer.writerow([int(m_i), repr(float(q_i))])


def qini_curve(scores: np.ndarray, outcome: np.ndarray, treatment: np.ndarray) -> QiniCurve:
    """Estimate the incremental-outcome curve of a ranking from RCT arms.

    Prefixes that contain no control instances use the whole-sample count ratio
    (the 0/0 limit); both arms must be non-empty overall.
    """
    scores = _check_1d("scores", scores)
    outcome = _check_1d("outcome", outcome)
    treatment = np.asarray(treatment)
    n = scores.shape[0]
    if outcome.shape[0] != n or treatment.shape[0] != n:
        raise ValueError("scores, outcome, treatment must have equal length")
    t = treatment.astype(np.float64)
    n_treated = float(t.sum())
    n_control = float(n - n_treated)
    if n_treated == 0 or n_control == 0:
        raise ValueError("both treatment arms must be non-empty to estimate the curve")

    order = _descending_order(scores)
    t_sorted = t[order]
    y_sorted = outcome[order]

    cum_treated_y = np.cumsum(y_sorted * t_sorted)
    cum_control_y = np.cumsum(y_sorted * (1.0 - t_sorted))
    cum_treated_n = np.cumsum(t_sorted)
    cum_control_n = np.cumsum(1.0 - t_sorted)

    global_ratio = n_treated / n_control
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cum_control_n > 0, cum_treated_n / np.maximum(cum_control_n, 1.0), global_ratio)
    q = cum_treated_y - cum_control_y * ratio

    q_full = np.concatenate([[0.0], q])
    area = float(q.sum())
    q_end = float(q[-1])
    # A curve ending at ~zero net uplift has nothing to normalize by; its
    # normalized area is 0 rather than an exploding ratio.
    if abs(q_end) <= 1e-12 * max(1.0, float(np.max(np.abs(q)))):
        normalized = 0.0
    else:
        normalized = (area - n * q_end / 2.0) / (n * abs(q_end))
    return QiniCurve(m=np.arange(n + 1), q=q_full, area=area, normalized_area=normalized)


def kendall_tau(scores: np.ndarray, tau: np.ndarray) -> float:
    """Tie-corrected rank correlation between predicted and true effects.

    A vector with zero variance carries no ordering information: if only one
    side is constant the correlation is 0.0, if both are it is undefined and
    raises.
    """
    scores = _check_1d("scores", scores)
    tau = _check_1d("tau", tau)
    if scores.shape != tau.shape:
        raise ValueError(f"length mismatch: scores {scores.shape[0]} vs tau {tau.shape[0]}")
    if scores.shape[0] < 2:
        raise ValueError("need at least 2 instances for rank correlation")
    value = stats.kendalltau(scores, tau).statistic
    if not np.isfinite(value):
        if np.all(scores == scores[0]) and np.all(tau == tau[0]):
            raise ValueError("rank correlation undefined: both inputs have zero variance")
        return 0.0
    return float(value)


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Plain mean squared error."""
    pred = _check_1d("pred", pred)
    target = _check_1d("target", target)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: pred {pred.shape[0]} vs target {target.shape[0]}")
    return float(np.mean((pred - target) ** 2))


@dataclass
class RankingMetrics:
    """Metric bundle for one scored dataset.

    auqc_norm, kendall and mse need ground-truth effects and are None without
    them; qini_norm only needs the two arms and is always present.
    """

    qini_norm: float
    auqc_norm: float | None = None
    kendall: float | None = None
    mse: float | None = None

    def to_dict(self) -> dict:
        return {
            "qini_norm": self.qini_norm,
            "auqc_norm": self.auqc_norm,
            "kendall": self.kendall,
            "mse": self.mse,
        }


def ranking_metrics(scores: np.ndarray, ds: Dataset) -> RankingMetrics:
    """Compute every applicable metric for scores against a dataset."""
    curve = qini_curve(scores, ds.outcome, ds.treatment)
    if ds.true_tau is None:
        return RankingMetrics(qini_norm=curve.normalized_area)
    return RankingMetrics(
        qini_norm=curve.normalized_area,
        auqc_norm=auqc_normalized(ds.true_tau, scores),
        kendall=kendall_tau(scores, ds.true_tau),
        mse=mse(scores, ds.true_tau),
    )
