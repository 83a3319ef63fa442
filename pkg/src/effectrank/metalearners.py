"""Six strategies for turning outcome models into treatment-effect rankers.

Every strategy reduces effect estimation to one or more supervised fits and a
final scoring rule; the final-stage model always trains under the caller's
objective (pointwise, pairwise or listwise), while auxiliary nuisance models are
plain pointwise regressions. All component models train on the same training
split and share one hyperparameter set; the validation split only drives early
stopping, with pseudo-labels recomputed on it through the already-fitted
first-stage models.

Strategies:

* Z: one model on the propensity-scaled outcome transform, whose conditional
  mean is the treatment effect under randomization.
* S: one model with the treatment indicator appended as a feature; the effect is
  the prediction gap between the two indicator settings.
* T: one outcome model per arm; the effect is their difference.
* X: per-arm outcome models impute each instance's counterfactual residual, a
  second pair of models regresses those, and predictions blend by propensity.
* DR: a doubly robust pseudo-outcome built from per-arm models and the inverse
  propensity residual, regressed by one final model.
* R: an outcome model ignoring treatment orthogonalizes outcomes; the final
  model fits residual ratios under squared residual weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset, estimate_propensity
from .gbdt import GbdtModel, GbdtParams, ValidationData
from .gbdt import fit as gbdt_fit
from .objectives import ObjectiveSpec, r_labels_weights, spec_from_dict, spec_to_dict

__all__ = ["MetaKind", "MetaModel", "z_transform", "fit_meta", "predict_tau"]

_FORMAT = "effectrank-meta"
_VERSION = 1


class MetaKind(str, Enum):
    Z = "Z"
    S = "S"
    T = "T"
    X = "X"
    DR = "DR"
    R = "R"


COMPONENT_NAMES: dict[MetaKind, tuple[str, ...]] = {
    MetaKind.Z: ("f_z",),
    MetaKind.S: ("f_s",),
    MetaKind.T: ("f_t1", "f_t0"),
    MetaKind.X: ("f_t1", "f_t0", "f_x0", "f_x1"),
    MetaKind.DR: ("f_t1", "f_t0", "f_dr"),
    MetaKind.R: ("m_hat", "f_r"),
}


def z_transform(outcome: np.ndarray, treatment: np.ndarray, e_hat: float) -> np.ndarray:
    """Propensity-scaled outcome: y/e when treated, -y/(1-e) otherwise.

    Its conditional expectation equals the treatment effect when assignment is
    independent of potential outcomes, which is what makes the Z strategy a
    single regression.
    """
    if not 0.0 < e_hat < 1.0:
        raise ValueError(f"e_hat must be in (0, 1), got {e_hat}")
    y = np.asarray(outcome, dtype=np.float64)
    t = np.asarray(treatment, dtype=np.float64)
    return np.where(t == 1.0, y / e_hat, -y / (1.0 - e_hat))


@dataclass
class MetaModel:
    """A fitted strategy: its components, the objective they trained under, and e-hat."""

    kind: MetaKind
    propensity: float
    objective: ObjectiveSpec
    components: dict[str, GbdtModel]

    def predict_tau(self, features: np.ndarray) -> np.ndarray:
        return predict_tau(self, features)

    def to_json(self) -> str:
        doc = {
            "format": _FORMAT,
            "version": _VERSION,
            "kind": self.kind.value,
            "propensity": self.propensity,
            "objective": spec_to_dict(self.objective),
            "components": {name: json.loads(m.to_json()) for name, m in self.components.items()},
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MetaModel":
        doc = json.loads(text)
        if doc.get("format") != _FORMAT:
            raise ValueError(f"not a {_FORMAT} document")
        if doc.get("version") != _VERSION:
            raise ValueError(f"unsupported version {doc.get('version')!r}, expected {_VERSION}")
        return cls(
            kind=MetaKind(doc["kind"]),
            propensity=float(doc["propensity"]),
            objective=spec_from_dict(doc["objective"]),
            components={
                name: GbdtModel.from_json(json.dumps(md)) for name, md in doc["components"].items()
            },
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "MetaModel":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _with_indicator(features: np.ndarray, value: float | np.ndarray) -> np.ndarray:
    col = np.broadcast_to(np.asarray(value, dtype=np.float64), (features.shape[0],))
    return np.column_stack([features, col])


def _fit_component(name: str, **kwargs) -> GbdtModel:
    try:
        return gbdt_fit(**kwargs)
    except Exception as exc:
        exc.args = (f"component {name}: {exc}",) + exc.args[1:]
        raise


def fit_meta(
    kind: MetaKind,
    objective: ObjectiveSpec,
    train: Dataset,
    valid: Dataset,
    params: GbdtParams = GbdtParams(),
) -> MetaModel:
    """Fit one strategy's component models.

    train provides both arms and the propensity estimate; valid only drives early
    stopping of each component (with its pseudo-labels recomputed through the
    same first-stage models that produced the training ones). Component failures
    propagate with the component name prepended.
    """
    kind = MetaKind(kind)
    objective.validate()
    params.validate()
    e = estimate_propensity(train)
    pointwise = ObjectiveSpec(kind="pointwise", seed=objective.seed)

    x_tr, t_tr, y_tr = train.features, train.treatment.astype(np.float64), train.outcome
    x_va, t_va, y_va = valid.features, valid.treatment.astype(np.float64), valid.outcome
    treated_tr = t_tr == 1.0
    treated_va = t_va == 1.0
    components: dict[str, GbdtModel] = {}

    def fit_arms(spec_obj):
        """Per-arm outcome models, early-stopped on the matching validation arm."""
        for name, mask_tr, mask_va in (
            ("f_t1", treated_tr, treated_va),
            ("f_t0", ~treated_tr, ~treated_va),
        ):
            components[name] = _fit_component(
                name,
                features=x_tr[mask_tr],
                labels=y_tr[mask_tr],
                objective=spec_obj,
                params=params,
                valid=ValidationData(x_va[mask_va], y_va[mask_va]),
            )

    if kind is MetaKind.Z:
        components["f_z"] = _fit_component(
            "f_z",
            features=x_tr,
            labels=z_transform(y_tr, t_tr, e),
            objective=objective,
            params=params,
            valid=ValidationData(x_va, z_transform(y_va, t_va, e)),
        )

    elif kind is MetaKind.S:
        components["f_s"] = _fit_component(
            "f_s",
            features=_with_indicator(x_tr, t_tr),
            labels=y_tr,
            objective=objective,
            params=params,
            valid=ValidationData(_with_indicator(x_va, t_va), y_va),
        )

    elif kind is MetaKind.T:
        fit_arms(objective)

    elif kind is MetaKind.X:
        fit_arms(pointwise)
        # Imputed effects: treated rows get y - f_t0(x), control rows f_t1(x) - y.
        d1_tr = y_tr[treated_tr] - components["f_t0"].predict(x_tr[treated_tr])
        d0_tr = components["f_t1"].predict(x_tr[~treated_tr]) - y_tr[~treated_tr]
        d1_va = y_va[treated_va] - components["f_t0"].predict(x_va[treated_va])
        d0_va = components["f_t1"].predict(x_va[~treated_va]) - y_va[~treated_va]
        components["f_x1"] = _fit_component(
            "f_x1",
            features=x_tr[treated_tr],
            labels=d1_tr,
            objective=objective,
            params=params,
            valid=ValidationData(x_va[treated_va], d1_va),
        )
        components["f_x0"] = _fit_component(
            "f_x0",
            features=x_tr[~treated_tr],
            labels=d0_tr,
            objective=objective,
            params=params,
            valid=ValidationData(x_va[~treated_va], d0_va),
        )

    elif kind is MetaKind.DR:
        fit_arms(pointwise)

        def dr_pseudo(x, t, y):
            f1 = components["f_t1"].predict(x)
            f0 = components["f_t0"].predict(x)
            own = np.where(t == 1.0, f1, f0)
            return (t - e) / (e * (1.0 - e)) * (y - own) + f1 - f0

        components["f_dr"] = _fit_component(
            "f_dr",
            features=x_tr,
            labels=dr_pseudo(x_tr, t_tr, y_tr),
            objective=objective,
            params=params,
            valid=ValidationData(x_va, dr_pseudo(x_va, t_va, y_va)),
        )

    elif kind is MetaKind.R:
        components["m_hat"] = _fit_component(
            "m_hat",
            features=x_tr,
            labels=y_tr,
            objective=pointwise,
            params=params,
            valid=ValidationData(x_va, y_va),
        )
        labels_tr, w_tr = r_labels_weights(y_tr, t_tr, components["m_hat"].predict(x_tr), e)
        labels_va, w_va = r_labels_weights(y_va, t_va, components["m_hat"].predict(x_va), e)
        components["f_r"] = _fit_component(
            "f_r",
            features=x_tr,
            labels=labels_tr,
            objective=objective,
            params=params,
            weights=w_tr,
            valid=ValidationData(x_va, labels_va, weights=w_va),
        )

    return MetaModel(kind=kind, propensity=e, objective=objective, components=components)


def predict_tau(model: MetaModel, features: np.ndarray) -> np.ndarray:
    """Per-instance effect scores from a fitted strategy.

    Scores from ranking objectives order instances but carry no calibration
    claim; only pointwise final stages target the effect's scale.
    """
    features = np.asarray(features, dtype=np.float64)
    c = model.components
    kind = model.kind
    if kind is MetaKind.Z:
        return c["f_z"].predict(features)
    if kind is MetaKind.S:
        return c["f_s"].predict(_with_indicator(features, 1.0)) - c["f_s"].predict(
            _with_indicator(features, 0.0)
        )
    if kind is MetaKind.T:
        return c["f_t1"].predict(features) - c["f_t0"].predict(features)
    if kind is MetaKind.X:
        g = model.propensity
        return g * c["f_x0"].predict(features) + (1.0 - g) * c["f_x1"].predict(features)
    if kind is MetaKind.DR:
        return c["f_dr"].predict(features)
    if kind is MetaKind.R:
        return c["f_r"].predict(features)
    raise ValueError(f"unknown strategy kind {kind!r}")
