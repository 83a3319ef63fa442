"""Training objectives: pointwise regression plus sampled pairwise and listwise ranking.

The ranking objectives turn effect estimation into ordering. For a sampled pair
(i, j) the model's score difference is squashed through a scaled sigmoid into the
probability that i should outrank j, and the target says it should whenever
label_i >= label_j; the gradient of the resulting cross entropy with respect to
the raw scores is what the boosting engine consumes. The listwise variant keeps
the same per-pair machinery but weights every pair by how much the ranking
quality metric would change if the two instances swapped places, which focuses
the model on mistakes that actually cost curve area.

Pairs are resampled every boosting round: each instance appears k times on the
left, matched with a uniformly drawn partner (possibly itself; a self-pair is a
tie with probability one half and contributes no gradient). Sums are over the
k*n realized pairs with no 1/(k*n) factor; the scale is absorbed by the learning
rate.

Scores may optionally be squashed to (0, 1) by a logistic before the pair
probability is formed ("score normalization"); the chain-rule factor u*(1-u)
then multiplies each gradient contribution and its square multiplies the
curvature, Gauss-Newton style.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ObjectiveSpec",
    "PairSample",
    "pairwise_label",
    "pairwise_prob",
    "sample_pairs",
    "rank_positions",
    "ideal_gain_norm",
    "delta_auqc",
    "pair_grad_hess",
    "pair_loss",
    "grad_pointwise",
    "grad_pairwise",
    "grad_listwise",
    "r_labels_weights",
    "realized_loss",
    "build_objective",
    "spec_to_dict",
    "spec_from_dict",
]

_KINDS = ("pointwise", "pairwise", "listwise")

_PROB_CLAMP = 1e-15


@dataclass(frozen=True)
class ObjectiveSpec:
    """Declarative description of a training objective.

    sigma scales the score difference inside the pair sigmoid, k is the number of
    sampled partners per instance per round, and normalize_scores toggles the
    logistic squashing of raw scores. weights carries optional per-instance
    weights (>= 0) for the training set; a pair's contribution is scaled by the
    mean of its two instance weights. weights is runtime data, not configuration,
    and is excluded from config serialization.
    """

    kind: str = "pointwise"
    sigma: float = 1.0
    k: int = 1
    normalize_scores: bool = True
    seed: int = 0
    weights: np.ndarray | None = field(default=None, compare=False, repr=False)

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}, expected one of {_KINDS}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.ndim != 1:
                raise ValueError(f"weights must be 1-D, got shape {w.shape}")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and >= 0")


@dataclass(frozen=True)
class PairSample:
    """Index arrays of sampled ordered pairs; pair p is (left[p], right[p])."""

    left: np.ndarray
    right: np.ndarray

    def __len__(self) -> int:
        return self.left.shape[0]


def sample_pairs(n: int, k: int, rng: np.random.Generator) -> PairSample:
    """Draw the round's pair set: each instance k times on the left, partners uniform.

    Exactly k*n pairs. Self-pairs are allowed by the uniform partner draw.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    left = np.repeat(np.arange(n, dtype=np.int64), k)
    right = rng.integers(0, n, size=n * k, dtype=np.int64)
    return PairSample(left=left, right=right)


def pairwise_label(label_i: float, label_j: float) -> float:
    """Target probability that i outranks j: 1 when label_i >= label_j, else 0."""
    return 1.0 if label_i >= label_j else 0.0


def pairwise_prob(score_i: float, score_j: float, sigma: float = 1.0) -> float:
    """Modelled probability that i outranks j: sigmoid of the scaled score gap."""
    return float(_sigmoid(sigma * (np.float64(score_i) - np.float64(score_j))))


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def rank_positions(scores: np.ndarray) -> np.ndarray:
    """1-based positions in the descending-score order, ties broken by index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    ranks = np.empty(scores.shape[0], dtype=np.int64)
    ranks[order] = np.arange(1, scores.shape[0] + 1)
    return ranks


def ideal_gain_norm(labels: np.ndarray) -> float:
    """Normalizer for swap deltas: |best achievable discounted gain|, floored at 1.

    The best gain puts labels in descending order under the linear discount
    (n, n-1, ..., 1). Signed labels can make it nearly cancel, hence the floor.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.shape[0]
    ideal = np.sort(labels)[::-1] @ np.arange(n, 0, -1, dtype=np.float64)
    return max(abs(float(ideal)), 1.0)


def delta_auqc(labels: np.ndarray, ranks: np.ndarray, i: int, j: int, z_norm: float | None = None) -> float:
    """Normalized |change| in discounted cumulative gain if instances i and j swapped.

    Swapping positions p_i and p_j changes the gain sum by exactly
    (label_i - label_j) * (rank_i - rank_j) up to sign; this returns its absolute
    value divided by z_norm (the ideal-gain normalizer of the labels when not
    supplied).
    """
    labels = np.asarray(labels, dtype=np.float64)
    ranks = np.asarray(ranks)
    if not np.array_equal(np.sort(ranks), np.arange(1, labels.shape[0] + 1)):
        raise ValueError("ranks must be a permutation of 1..n")
    if z_norm is None:
        z_norm = ideal_gain_norm(labels)
    return abs(float(labels[i]) - float(labels[j])) * abs(int(ranks[i]) - int(ranks[j])) / z_norm


def _pair_core(labels, scores, left, right, spec):
    """Per-pair lambda, curvature, and per-instance chain factor."""
    if spec.normalize_scores:
        u = _sigmoid(scores)
        chain = u * (1.0 - u)
    else:
        u = scores
        chain = None
    gap = u[left] - u[right]
    p = _sigmoid(spec.sigma * gap)
    ell = (labels[left] >= labels[right]).astype(np.float64)
    lam = spec.sigma * (p - ell)
    curv = spec.sigma * spec.sigma * p * (1.0 - p)
    return lam, curv, chain, p, ell


def _pair_scale(spec, left, right, pair_weights):
    """Combined pair scale: instance-weight mean times optional per-pair weight."""
    scale = None
    if spec.weights is not None:
        w = np.asarray(spec.weights, dtype=np.float64)
        scale = 0.5 * (w[left] + w[right])
    if pair_weights is not None:
        scale = pair_weights if scale is None else scale * pair_weights
    return scale


def pair_grad_hess(
    labels: np.ndarray,
    scores: np.ndarray,
    pairs: PairSample,
    spec: ObjectiveSpec,
    pair_weights: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Gauss-Newton curvature of the pair cross entropy on a fixed pair set.

    Each pair adds lambda = sigma*(p - ell) at its left index and -lambda at its
    right index; curvature sigma^2*p*(1-p) accumulates at both. With score
    normalization the left/right chain factors multiply the additions (squared
    for the curvature).
    """
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    left, right = pairs.left, pairs.right
    lam, curv, chain, _, _ = _pair_core(labels, scores, left, right, spec)
    scale = _pair_scale(spec, left, right, pair_weights)
    if scale is not None:
        lam = lam * scale
        curv = curv * scale
    if chain is None:
        chain_l = chain_r = 1.0
    else:
        chain_l, chain_r = chain[left], chain[right]
    grad = np.bincount(left, weights=lam * chain_l, minlength=n)
    grad -= np.bincount(right, weights=lam * chain_r, minlength=n)
    hess = np.bincount(left, weights=curv * chain_l * chain_l, minlength=n)
    hess += np.bincount(right, weights=curv * chain_r * chain_r, minlength=n)
    return grad, hess


def pair_loss(
    labels: np.ndarray,
    scores: np.ndarray,
    pairs: PairSample,
    spec: ObjectiveSpec,
    pair_weights: np.ndarray | None = None,
) -> float:
    """Summed pair cross entropy on a fixed pair set, probabilities clamped before the log."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    left, right = pairs.left, pairs.right
    _, _, _, p, ell = _pair_core(labels, scores, left, right, spec)
    p = np.clip(p, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    terms = -(ell * np.log(p) + (1.0 - ell) * np.log1p(-p))
    scale = _pair_scale(spec, left, right, pair_weights)
    if scale is not None:
        terms = terms * scale
    return float(terms.sum())


def _listwise_pair_weights(labels, scores, pairs):
    ranks = rank_positions(scores)
    z = ideal_gain_norm(labels)
    dl = np.abs(labels[pairs.left] - labels[pairs.right])
    dr = np.abs(ranks[pairs.left] - ranks[pairs.right]).astype(np.float64)
    return dl * dr / z


def grad_pointwise(
    labels: np.ndarray, scores: np.ndarray, spec: ObjectiveSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Squared-error gradient (score - label) and unit curvature, times any weights.

    The conventional factor 2 and the 1/n of a mean are absorbed by the learning
    rate.
    """
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if spec.weights is None:
        return scores - labels, np.ones_like(scores)
    w = np.asarray(spec.weights, dtype=np.float64)
    return (scores - labels) * w, w.copy()


def grad_pairwise(
    labels: np.ndarray, scores: np.ndarray, spec: ObjectiveSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise-objective gradient on a freshly sampled pair set."""
    pairs = sample_pairs(scores.shape[0], spec.k, rng)
    return pair_grad_hess(labels, scores, pairs, spec)


def grad_listwise(
    labels: np.ndarray, scores: np.ndarray, spec: ObjectiveSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Listwise gradient: sampled pairs weighted by their normalized swap delta.

    Ranks come from the current raw scores (descending, ties by index) and are
    recomputed on every call; the deltas are treated as constants during
    differentiation.
    """
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    pairs = sample_pairs(scores.shape[0], spec.k, rng)
    deltas = _listwise_pair_weights(labels, scores, pairs)
    return pair_grad_hess(labels, scores, pairs, spec, pair_weights=deltas)


def spec_to_dict(spec: ObjectiveSpec) -> dict:
    """Config-file form of a spec. weights is runtime data and never serialized."""
    return {
        "kind": spec.kind,
        "sigma": spec.sigma,
        "k": spec.k,
        "normalize_scores": spec.normalize_scores,
        "seed": spec.seed,
    }


def spec_from_dict(doc: dict) -> ObjectiveSpec:
    """Parse the config-file form; unknown keys are rejected."""
    allowed = {"kind", "sigma", "k", "normalize_scores", "seed"}
    extra = set(doc) - allowed
    if extra:
        raise ValueError(f"unknown objective fields {sorted(extra)}")
    spec = ObjectiveSpec(**doc)
    spec.validate()
    return spec


def r_labels_weights(
    outcome: np.ndarray, treatment: np.ndarray, m_hat: np.ndarray, e_hat: float
) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonalized regression targets: residual ratio labels and squared-residual weights.

    labels = (y - m_hat) / (t - e_hat), weights = (t - e_hat)^2. Requires
    0 < e_hat < 1 so the denominator never vanishes for binary t.
    """
    if not 0.0 < e_hat < 1.0:
        raise ValueError(f"e_hat must be in (0, 1), got {e_hat}")
    y = np.asarray(outcome, dtype=np.float64)
    t = np.asarray(treatment, dtype=np.float64)
    m = np.asarray(m_hat, dtype=np.float64)
    resid = t - e_hat
    labels = (y - m) / resid
    weights = resid * resid
    return labels, weights


def realized_loss(
    labels: np.ndarray, scores: np.ndarray, spec: ObjectiveSpec, rng: np.random.Generator
) -> float:
    """The objective's validation metric: weighted MSE, or freshly sampled pair loss."""
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if spec.kind == "pointwise":
        if spec.weights is None:
            return float(np.mean((scores - labels) ** 2))
        w = np.asarray(spec.weights, dtype=np.float64)
        total = float(w.sum())
        if total == 0:
            return 0.0
        return float((w * (scores - labels) ** 2).sum() / total)
    pairs = sample_pairs(scores.shape[0], spec.k, rng)
    if spec.kind == "listwise":
        deltas = _listwise_pair_weights(labels, scores, pairs)
        return pair_loss(labels, scores, pairs, spec, pair_weights=deltas)
    return pair_loss(labels, scores, pairs, spec)


class _SpecObjective:
    """Adapter giving the boosting engine its callback surface for a spec.

    Per-call weights (train weights from the spec, validation weights from the
    validation bundle) override the spec's own weights field.
    """

    def __init__(self, spec: ObjectiveSpec):
        spec.validate()
        self.spec = spec
        self.seed = spec.seed

    def _with(self, weights):
        return replace(self.spec, weights=weights)

    def loss(self, labels, scores, weights, rng) -> float:
        return realized_loss(labels, scores, self._with(weights), rng)


class PointwiseObjective(_SpecObjective):
    resamples = False

    def init_score(self, labels, weights) -> float:
        if weights is None:
            return float(np.mean(labels))
        total = float(np.sum(weights))
        if total == 0:
            return 0.0
        return float(np.sum(np.asarray(weights) * np.asarray(labels)) / total)

    def grad_hess(self, labels, scores, weights, round_index, rng):
        return grad_pointwise(labels, scores, self._with(weights))


class PairwiseObjective(_SpecObjective):
    resamples = True

    def init_score(self, labels, weights) -> float:
        return 0.0

    def grad_hess(self, labels, scores, weights, round_index, rng):
        return grad_pairwise(labels, scores, self._with(weights), rng)


class ListwiseObjective(_SpecObjective):
    resamples = True

    def init_score(self, labels, weights) -> float:
        return 0.0

    def grad_hess(self, labels, scores, weights, round_index, rng):
        return grad_listwise(labels, scores, self._with(weights), rng)


def build_objective(spec: ObjectiveSpec):
    """Instantiate the engine-facing adapter for an objective spec."""
    spec.validate()
    if spec.kind == "pointwise":
        return PointwiseObjective(spec)
    if spec.kind == "pairwise":
        return PairwiseObjective(spec)
    return ListwiseObjective(spec)
