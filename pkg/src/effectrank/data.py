"""Experiment data handling: RCT tables, CSV ingestion, a synthetic generator, splits.

Every dataset is a plain in-memory table of float features, a binary treatment
indicator, a real-valued outcome, and (when the generating process is known) the
true per-instance treatment effect. Arrays are float64/int8 and validated once at
construction; downstream code relies on that and does not re-check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "CsvSchema",
    "SyntheticConfig",
    "SplitSpec",
    "load_csv",
    "save_csv",
    "sample_coefficients",
    "generate_synthetic",
    "split",
    "kfold",
    "estimate_propensity",
]


def _sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable logistic function."""
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


@dataclass
class Dataset:
    """An RCT-style table: features, binary treatment, outcome, optional true effect.

    Parameters
    ----------
    features : ndarray of shape (n, d)
        Numeric feature matrix. Must be finite.
    treatment : ndarray of shape (n,)
        Assignment indicator, exactly 0 or 1 per instance.
    outcome : ndarray of shape (n,)
        Observed outcome under the assigned arm. Must be finite.
    true_tau : ndarray of shape (n,), optional
        Ground-truth individual treatment effect, available for synthetic data.
    """

    features: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    true_tau: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if n == 0:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(self.features)):
            bad = np.argwhere(~np.isfinite(self.features))[0]
            raise ValueError(f"non-finite feature value at row {bad[0] + 1}, column {bad[1]}")

        t = np.asarray(self.treatment)
        if t.shape != (n,):
            raise ValueError(f"treatment shape {t.shape} does not match {n} rows")
        t_float = t.astype(np.float64)
        if not np.all((t_float == 0.0) | (t_float == 1.0)):
            bad_row = int(np.flatnonzero((t_float != 0.0) & (t_float != 1.0))[0])
            raise ValueError(f"non-binary treatment, row {bad_row + 1}")
        self.treatment = t_float.astype(np.int8)

        y = np.asarray(self.outcome, dtype=np.float64)
        if y.shape != (n,):
            raise ValueError(f"outcome shape {y.shape} does not match {n} rows")
        if not np.all(np.isfinite(y)):
            bad_row = int(np.flatnonzero(~np.isfinite(y))[0])
            raise ValueError(f"non-finite outcome, row {bad_row + 1}")
        self.outcome = y

        if self.true_tau is not None:
            tau = np.asarray(self.true_tau, dtype=np.float64)
            if tau.shape != (n,):
                raise ValueError(f"true_tau shape {tau.shape} does not match {n} rows")
            if not np.all(np.isfinite(tau)):
                bad_row = int(np.flatnonzero(~np.isfinite(tau))[0])
                raise ValueError(f"non-finite true_tau, row {bad_row + 1}")
            self.true_tau = tau

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row-subset view copied into a new validated Dataset."""
        idx = np.asarray(idx)
        return Dataset(
            features=self.features[idx],
            treatment=self.treatment[idx],
            outcome=self.outcome[idx],
            true_tau=None if self.true_tau is None else self.true_tau[idx],
        )


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for CSV ingestion.

    feature_cols=None means "every column not otherwise mapped, in file order".
    """

    treatment_col: str = "t"
    outcome_col: str = "y"
    tau_col: str | None = None
    feature_cols: tuple[str, ...] | None = None


def load_csv(path: str, schema: CsvSchema = CsvSchema(), delimiter: str = ",") -> Dataset:
    """Parse a headered numeric CSV into a Dataset.

    All mapped columns must parse as floats; the treatment column must be exactly
    0 or 1. Errors name the offending data row (1-based, header excluded) and
    column. Categorical encoding is the caller's job: every feature column fed in
    here must already be numeric.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        rows = list(reader)

    if len(header) != len(set(header)):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise ValueError(f"{path}: duplicate column names {dupes}")
    if not rows:
        raise ValueError(f"{path}: no data rows")

    col_index = {name: j for j, name in enumerate(header)}
    for required in (schema.treatment_col, schema.outcome_col):
        if required not in col_index:
            raise ValueError(f"{path}: missing column {required!r}")
    if schema.tau_col is not None and schema.tau_col not in col_index:
        raise ValueError(f"{path}: missing column {schema.tau_col!r}")

    reserved = {schema.treatment_col, schema.outcome_col}
    if schema.tau_col is not None:
        reserved.add(schema.tau_col)
    if schema.feature_cols is None:
        feature_cols = [h for h in header if h not in reserved]
    else:
        feature_cols = list(schema.feature_cols)
        for name in feature_cols:
            if name not in col_index:
                raise ValueError(f"{path}: missing column {name!r}")
    if not feature_cols:
        raise ValueError(f"{path}: no feature columns left after mapping")

    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(row)} cells, expected {width}")

    def column(name: str) -> np.ndarray:
        j = col_index[name]
        cells = [row[j] for row in rows]
        try:
            return np.asarray(cells, dtype=np.float64)
        except ValueError:
            for i, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {cell!r}, row {i + 1}, column {name!r}"
                    ) from None
            raise

    features = np.column_stack([column(name) for name in feature_cols])
    for j, name in enumerate(feature_cols):
        bad = np.flatnonzero(~np.isfinite(features[:, j]))
        if bad.size:
            raise ValueError(f"{path}: non-finite value, row {bad[0] + 1}, column {name!r}")

    t = column(schema.treatment_col)
    bad = np.flatnonzero((t != 0.0) & (t != 1.0))
    if bad.size:
        raise ValueError(f"{path}: non-binary treatment, row {bad[0] + 1}")

    y = column(schema.outcome_col)
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise ValueError(f"{path}: non-finite outcome, row {bad[0] + 1}")

    tau = None
    if schema.tau_col is not None:
        tau = column(schema.tau_col)
        bad = np.flatnonzero(~np.isfinite(tau))
        if bad.size:
            raise ValueError(f"{path}: non-finite value, row {bad[0] + 1}, column {schema.tau_col!r}")

    return Dataset(features=features, treatment=t, outcome=y, true_tau=tau)


def save_csv(ds: Dataset, path: str, delimiter: str = ",") -> None:
    """Write a Dataset as f0..f{d-1},t,y[,tau]; floats keep full round-trip precision."""
    header = [f"f{j}" for j in range(ds.d)] + ["t", "y"]
    if ds.true_tau is not None:
        header.append("tau")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(str(int(ds.treatment[i])))
            row.append(repr(float(ds.outcome[i])))
            if ds.true_tau is not None:
                row.append(repr(float(ds.true_tau[i])))
            writer.writerow(row)


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic RCT generator.

    The default configuration matches the benchmark setting used throughout the
    tests: 10000 instances, 10 standard-normal features, Gaussian nuisance noise
    with sd 0.1, servicing cost at 10% of revenue, and no treatment effect on the
    sale propensity (treatment_lift=0), so treating any customer has a strictly
    negative expected effect equal to minus the expected cost.
    """

    n: int = 10000
    d: int = 10
    noise_sd: float = 0.1
    cost_rate: float = 0.1
    treatment_lift: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")
        if not 0 <= self.cost_rate < 1:
            raise ValueError(f"cost_rate must be in [0, 1), got {self.cost_rate}")


def sample_coefficients(cfg: SyntheticConfig) -> tuple[np.ndarray, np.ndarray]:
    """Re-derive the generator's fixed coefficient draws for a config.

    The sale and revenue coefficient vectors are the first two draws from the
    seeded RNG, so they can be reproduced without regenerating the table. Exposed
    because analytic oracles need them.

    Returns
    -------
    (u_sale, u_revenue) : two ndarrays of shape (d,), entries uniform on (-1, 1).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    u_sale = rng.uniform(-1.0, 1.0, size=cfg.d)
    u_revenue = rng.uniform(-1.0, 1.0, size=cfg.d)
    return u_sale, u_revenue


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(41)


def _mean_sigmoid(arg: np.ndarray, sd: float) -> np.ndarray:
    """E[sigmoid(arg + eps)] for eps ~ N(0, sd^2), by Gauss-Hermite quadrature."""
    if sd == 0.0:
        return _sigmoid(arg)
    shifted = arg[:, None] + math.sqrt(2.0) * sd * _GH_NODES[None, :]
    return (_sigmoid(shifted) @ _GH_WEIGHTS) / math.sqrt(math.pi)


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Simulate a randomized trial where treating always costs and may help sell.

    Mechanics, all conditional on a feature draw x ~ N(0, I_d):

    * sale propensity  S = sigmoid(x . u_sale + eps_s [+ treatment_lift if treated])
    * revenue if sold  R = 1 + |x . u_revenue| + eps_r
    * servicing cost   C = cost_rate * R, charged only when treated
    * outcome          y = s * R - t * C   with s ~ Bernoulli(S)

    eps_s, eps_r ~ N(0, noise_sd^2) are drawn once per instance and shared across
    both potential outcomes, as is the uniform variate behind the sale draw.
    Treatment is a fair coin, so the propensity is 0.5 by construction.

    true_tau holds the analytic effect E[y(1) - y(0) | x]:
    (E[S_treated] - E[S_control] - cost_rate) * (1 + |x . u_revenue|), which at
    treatment_lift=0 reduces to -cost_rate * (1 + |x . u_revenue|).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    u_sale = rng.uniform(-1.0, 1.0, size=cfg.d)
    u_revenue = rng.uniform(-1.0, 1.0, size=cfg.d)
    x = rng.standard_normal((cfg.n, cfg.d))
    eps_s = rng.normal(0.0, cfg.noise_sd, size=cfg.n)
    eps_r = rng.normal(0.0, cfg.noise_sd, size=cfg.n)
    t = (rng.random(cfg.n) < 0.5).astype(np.int8)
    sale_uniform = rng.random(cfg.n)

    sale_logit = x @ u_sale + eps_s + cfg.treatment_lift * t
    sold = sale_uniform < _sigmoid(sale_logit)
    revenue = 1.0 + np.abs(x @ u_revenue) + eps_r
    cost = cfg.cost_rate * revenue
    y = sold * revenue - t * cost

    mean_revenue = 1.0 + np.abs(x @ u_revenue)
    if cfg.treatment_lift == 0.0:
        sale_gap = 0.0
    else:
        base = x @ u_sale
        sale_gap = _mean_sigmoid(base + cfg.treatment_lift, cfg.noise_sd) - _mean_sigmoid(base, cfg.noise_sd)
    tau = (sale_gap - cfg.cost_rate) * mean_revenue

    return Dataset(features=x, treatment=t, outcome=y, true_tau=tau)


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for a shuffled train/valid/test partition. Must sum to 1."""

    train: float = 0.64
    valid: float = 0.16
    test: float = 0.20
    seed: int = 0

    def validate(self) -> None:
        for name, frac in (("train", self.train), ("valid", self.valid), ("test", self.test)):
            if not 0 < frac < 1:
                raise ValueError(f"{name} fraction must be in (0, 1), got {frac}")
        if abs(self.train + self.valid + self.test - 1.0) > 1e-9:
            raise ValueError(
                f"fractions must sum to 1, got {self.train + self.valid + self.test!r}"
            )


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle rows with the spec's seed and cut train/valid/test by its fractions.

    Sizes are floor(train*n) and floor(valid*n), with the remainder as test, so
    the default 0.64/0.16/0.20 on n=100 gives exactly 64/16/20. Splitting is
    unstratified, and a part that ends up without one of the treatment arms is
    rejected rather than returned.
    """
    spec.validate()
    n = ds.n
    n_train = int(math.floor(spec.train * n))
    n_valid = int(math.floor(spec.valid * n))
    n_test = n - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise ValueError(f"n={n} too small for fractions {spec.train}/{spec.valid}/{spec.test}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    parts = (
        ds.subset(perm[:n_train]),
        ds.subset(perm[n_train : n_train + n_valid]),
        ds.subset(perm[n_train + n_valid :]),
    )
    for name, part in zip(("train", "valid", "test"), parts):
        arms = np.unique(part.treatment)
        if arms.shape[0] < 2:
            raise ValueError(
                f"{name} part holds only treatment arm {int(arms[0])}; "
                "use a different seed or rebalance the data"
            )
    return parts


def kfold(ds: Dataset, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold partition, returned as (train_idx, test_idx) pairs.

    Fold sizes differ by at most one row; every row lands in exactly one test
    fold across the k pairs.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > ds.n:
        raise ValueError(f"k={k} exceeds n={ds.n}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        test_idx = folds[i]
        train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
        out.append((train_idx, test_idx))
    return out


def estimate_propensity(ds: Dataset) -> float:
    """Treated fraction of the table; the design is randomized so this is exact.

    Raises if either arm is empty: a single-arm table cannot support effect
    estimation.
    """
    treated = int(np.sum(ds.treatment == 1))
    if treated == 0 or treated == ds.n:
        raise ValueError(f"dataset has a single treatment arm ({treated} of {ds.n} treated)")
    return treated / ds.n
