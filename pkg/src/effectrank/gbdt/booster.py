"""Newton boosting over histogram trees with pluggable objectives.

The engine is objective-agnostic: anything exposing init_score / grad_hess /
loss / seed can drive it, and the shipped pointwise, pairwise and listwise
objectives are built from an ObjectiveSpec. Gradients are recomputed from the
current raw scores every round (so sampled-pair objectives redraw their pairs),
curvatures are floored at 1e-6 before leaf values are formed, and with a
validation bundle the loop stops once the objective's validation metric has not
improved for early_stopping_rounds, keeping the best round's trees.

Fitting is bit-deterministic: identical data, params and objective seed give an
identical model, byte for byte through JSON serialization.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from ..objectives import ObjectiveSpec, build_objective
from .binning import BinMapper
from .grower import Tree, grow_tree

__all__ = ["GbdtParams", "ValidationData", "GbdtModel", "fit"]

_HESS_FLOOR = 1e-6
_FORMAT = "effectrank-gbdt"
_VERSION = 1


@dataclass(frozen=True)
class GbdtParams:
    """Boosting hyperparameters.

    max_depth / early_stopping_rounds accept None for "unlimited" / "disabled".
    num_leaves=1 is allowed and makes every tree a root-only Newton step.
    """

    num_rounds: int = 200
    learning_rate: float = 0.1
    num_leaves: int = 31
    max_depth: int | None = 6
    min_data_in_leaf: int = 20
    l2_reg: float = 1.0
    max_bins: int = 256
    early_stopping_rounds: int | None = 20
    seed: int = 0

    def validate(self) -> None:
        if self.num_rounds < 1:
            raise ValueError(f"num_rounds must be >= 1, got {self.num_rounds}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.num_leaves < 1:
            raise ValueError(f"num_leaves must be >= 1, got {self.num_leaves}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be None or >= 1, got {self.max_depth}")
        if self.min_data_in_leaf < 1:
            raise ValueError(f"min_data_in_leaf must be >= 1, got {self.min_data_in_leaf}")
        if self.l2_reg < 0:
            raise ValueError(f"l2_reg must be >= 0, got {self.l2_reg}")
        if not 2 <= self.max_bins <= 65536:
            raise ValueError(f"max_bins must be in [2, 65536], got {self.max_bins}")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError(
                f"early_stopping_rounds must be None or >= 1, got {self.early_stopping_rounds}"
            )


@dataclass
class ValidationData:
    """Held-out data driving early stopping; weights are objective-specific."""

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None


@dataclass
class GbdtModel:
    """A fitted additive tree model predicting base_score + sum of tree values.

    Fit diagnostics live on the instance (train_history_, valid_history_,
    best_round_, train_scores_) and are not serialized.
    """

    base_score: float
    trees: list[Tree]
    params: GbdtParams
    n_features: int

    def __post_init__(self):
        self.train_history_: list[float] = []
        self.valid_history_: list[float] = []
        self.best_round_: int | None = None
        self.train_scores_: np.ndarray | None = None

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if features.shape[1] != self.n_features:
            raise ValueError(
                f"feature count {features.shape[1]} does not match model's {self.n_features}"
            )
        scores = np.full(features.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            scores += tree.predict(features)
        return scores

    def to_json(self) -> str:
        trees = []
        for t in self.trees:
            trees.append(
                {
                    "feature": t.feature.tolist(),
                    "threshold": [None if f < 0 else x for f, x in zip(t.feature, t.threshold)],
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
            )
        doc = {
            "format": _FORMAT,
            "version": _VERSION,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "params": asdict(self.params),
            "trees": trees,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        if doc.get("format") != _FORMAT:
            raise ValueError(f"not a {_FORMAT} document")
        if doc.get("version") != _VERSION:
            raise ValueError(f"unsupported version {doc.get('version')!r}, expected {_VERSION}")
        trees = []
        for td in doc["trees"]:
            trees.append(
                Tree(
                    feature=np.asarray(td["feature"], dtype=np.int32),
                    threshold=np.asarray(
                        [np.nan if x is None else x for x in td["threshold"]], dtype=np.float64
                    ),
                    left=np.asarray(td["left"], dtype=np.int32),
                    right=np.asarray(td["right"], dtype=np.int32),
                    value=np.asarray(td["value"], dtype=np.float64),
                )
            )
        return cls(
            base_score=float(doc["base_score"]),
            trees=trees,
            params=GbdtParams(**doc["params"]),
            n_features=int(doc["n_features"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "GbdtModel":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _check_training_inputs(features, labels, weights):
    features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError(f"features must be a non-empty 2-D array, got shape {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (features.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match {features.shape[0]} rows")
    if not np.all(np.isfinite(labels)):
        raise ValueError("labels contain non-finite values")
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != labels.shape:
            raise ValueError(f"weights shape {weights.shape} does not match labels")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and >= 0")
    return features, labels, weights


def fit(
    features: np.ndarray,
    labels: np.ndarray,
    objective: ObjectiveSpec | object,
    params: GbdtParams = GbdtParams(),
    weights: np.ndarray | None = None,
    valid: ValidationData | None = None,
) -> GbdtModel:
    """Train a boosted tree model under the given objective.

    objective is an ObjectiveSpec or any object implementing the callback
    surface (seed, init_score, grad_hess, loss). When valid is given and
    early_stopping_rounds is set, the returned model is truncated to the round
    with the best validation metric, which may be zero trees.

    Raises on non-finite gradients, naming the offending round.
    """
    params.validate()
    features, labels, weights = _check_training_inputs(features, labels, weights)
    if isinstance(objective, ObjectiveSpec):
        objective = build_objective(objective)

    vfeatures = vlabels = vweights = None
    if valid is not None:
        vfeatures, vlabels, vweights = _check_training_inputs(
            valid.features, valid.labels, valid.weights
        )
        if vfeatures.shape[1] != features.shape[1]:
            raise ValueError(
                f"validation feature count {vfeatures.shape[1]} does not match {features.shape[1]}"
            )

    mapper = BinMapper(params.max_bins).fit(features)
    binned = mapper.transform(features)
    n_bins = mapper.n_bins_
    bin_edges = mapper.bin_edges_

    base = float(objective.init_score(labels, weights))
    scores = np.full(features.shape[0], base, dtype=np.float64)
    rng = np.random.default_rng(objective.seed)

    # Loss evaluations draw from a fresh, identically seeded generator each
    # time: sampled-loss objectives then score the same pair set every round,
    # so the early-stopping sequence measures score movement, not redraw noise.
    # The training stream above is consumed only by grad_hess, which keeps the
    # grown trees independent of whether a validation set is monitored.
    def eval_rng():
        return np.random.default_rng(np.random.SeedSequence([objective.seed, 1]))

    model = GbdtModel(base_score=base, trees=[], params=params, n_features=features.shape[1])
    stop_early = valid is not None and params.early_stopping_rounds is not None
    # Objectives that redraw pairs may recover from a gainless round; assume so
    # for unknown custom objectives.
    resamples = getattr(objective, "resamples", True)

    vscores = None
    best_loss = np.inf
    best_round = -1
    best_scores = scores.copy()
    if valid is not None:
        vscores = np.full(vfeatures.shape[0], base, dtype=np.float64)
        best_loss = float(objective.loss(vlabels, vscores, vweights, eval_rng()))
        model.valid_history_.append(best_loss)

    for round_index in range(params.num_rounds):
        grad, hess = objective.grad_hess(labels, scores, weights, round_index, rng)
        grad = np.asarray(grad, dtype=np.float64)
        hess = np.asarray(hess, dtype=np.float64)
        if grad.shape != labels.shape or hess.shape != labels.shape:
            raise ValueError(f"objective returned wrong-shaped grad/hess at round {round_index + 1}")
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise RuntimeError(f"non-finite gradient or curvature at round {round_index + 1}")
        hess = np.maximum(hess, _HESS_FLOOR)

        tree = grow_tree(binned, bin_edges, n_bins, grad, hess, params)
        if tree is None:
            if round_index == 0:
                warnings.warn(
                    "no split with positive gain at the root in round 1; "
                    "model reduces to its base score"
                )
                break
            if not resamples:
                break
            continue

        for nid, rows in tree.leaf_rows.items():
            scores[rows] += tree.value[nid]
        model.trees.append(tree)
        model.train_history_.append(float(objective.loss(labels, scores, weights, eval_rng())))

        if valid is not None:
            vscores += tree.predict(vfeatures)
            vloss = float(objective.loss(vlabels, vscores, vweights, eval_rng()))
            model.valid_history_.append(vloss)
            if vloss < best_loss:
                best_loss = vloss
                best_round = len(model.trees) - 1
                best_scores = scores.copy()
            elif stop_early and len(model.trees) - 1 - best_round >= params.early_stopping_rounds:
                break

    if stop_early:
        model.trees = model.trees[: best_round + 1]
        model.best_round_ = best_round
        model.train_scores_ = best_scores
    else:
        model.best_round_ = len(model.trees) - 1
        model.train_scores_ = scores
    return model
