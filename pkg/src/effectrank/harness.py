"""Experiment orchestration: cross-validated grids of strategies and objectives.

A run takes one dataset and evaluates every (strategy, objective) cell under
k-fold cross validation. Within each fold the training part is split again into
train/valid (the valid share only steers hyperparameter search and early
stopping), a short random search picks hyperparameters by validation ranking
quality, the winning configuration refits, and the fold's held-out part is
scored. Cells are independent, own RNG streams derived from (seed, fold, cell),
write their results to disk as they finish, and are skipped on rerun, so an
interrupted run resumes where it stopped and results are identical no matter the
worker count.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    CsvSchema,
    Dataset,
    SplitSpec,
    SyntheticConfig,
    generate_synthetic,
    kfold,
    load_csv,
)
from .evaluation import auqc_normalized, qini_curve, ranking_metrics
from .gbdt import GbdtParams
from .metalearners import MetaKind, MetaModel, fit_meta, predict_tau
from .objectives import ObjectiveSpec, spec_from_dict, spec_to_dict

__all__ = [
    "SearchSpace",
    "ExperimentConfig",
    "RunResult",
    "load_config",
    "random_search",
    "run_experiment",
    "report",
]

_META_ORDER = [MetaKind.Z, MetaKind.S, MetaKind.T, MetaKind.X, MetaKind.DR, MetaKind.R]
_OBJ_ORDER = {"pointwise": 0, "pairwise": 1, "listwise": 2}


@dataclass(frozen=True)
class SearchSpace:
    """Random-search ranges; integer ranges are inclusive on both ends."""

    num_leaves: tuple[int, int] = (10, 50)
    learning_rate: tuple[float, float] = (0.01, 0.20)
    max_depth: tuple[int, int] = (3, 10)
    min_data_in_leaf: tuple[int, int] = (10, 30)

    def validate(self) -> None:
        for name in ("num_leaves", "learning_rate", "max_depth", "min_data_in_leaf"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"search range for {name} is empty: ({lo}, {hi})")
        if self.num_leaves[0] < 1 or self.min_data_in_leaf[0] < 1 or self.max_depth[0] < 1:
            raise ValueError("integer search ranges must start at 1 or above")
        if self.learning_rate[0] <= 0:
            raise ValueError("learning_rate range must be positive")

    def sample(self, rng: np.random.Generator, base: GbdtParams) -> GbdtParams:
        return replace(
            base,
            num_leaves=int(rng.integers(self.num_leaves[0], self.num_leaves[1] + 1)),
            learning_rate=float(rng.uniform(*self.learning_rate)),
            max_depth=int(rng.integers(self.max_depth[0], self.max_depth[1] + 1)),
            min_data_in_leaf=int(rng.integers(self.min_data_in_leaf[0], self.min_data_in_leaf[1] + 1)),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; fully serializable to/from the JSON config file."""

    synthetic: SyntheticConfig | None = None
    csv_path: str | None = None
    csv_schema: CsvSchema = CsvSchema()
    csv_delimiter: str = ","
    folds: int = 5
    metalearners: tuple[MetaKind, ...] = tuple(_META_ORDER)
    objectives: tuple[ObjectiveSpec, ...] = (
        ObjectiveSpec(kind="pointwise"),
        ObjectiveSpec(kind="pairwise"),
        ObjectiveSpec(kind="listwise"),
    )
    search_iterations: int = 10
    search_space: SearchSpace = SearchSpace()
    gbdt: GbdtParams = GbdtParams()
    split: SplitSpec = SplitSpec()
    seed: int = 0

    def validate(self) -> None:
        if (self.synthetic is None) == (self.csv_path is None):
            raise ValueError("config must specify exactly one of synthetic or csv dataset")
        if self.synthetic is not None:
            self.synthetic.validate()
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if not self.metalearners:
            raise ValueError("metalearners list is empty")
        if not self.objectives:
            raise ValueError("objectives list is empty")
        kinds = [o.kind for o in self.objectives]
        if len(kinds) != len(set(kinds)):
            raise ValueError(f"duplicate objective kinds in config: {kinds}")
        metas = list(self.metalearners)
        if len(metas) != len(set(metas)):
            raise ValueError("duplicate metalearners in config")
        if self.search_iterations < 1:
            raise ValueError(f"search_iterations must be >= 1, got {self.search_iterations}")
        self.search_space.validate()
        self.gbdt.validate()
        self.split.validate()

    def to_dict(self) -> dict:
        doc: dict = {"seed": self.seed, "folds": self.folds}
        if self.synthetic is not None:
            doc["dataset"] = {"synthetic": vars(self.synthetic).copy()}
        else:
            csv_doc = {"path": self.csv_path, "delimiter": self.csv_delimiter}
            csv_doc["treatment_col"] = self.csv_schema.treatment_col
            csv_doc["outcome_col"] = self.csv_schema.outcome_col
            if self.csv_schema.tau_col is not None:
                csv_doc["tau_col"] = self.csv_schema.tau_col
            if self.csv_schema.feature_cols is not None:
                csv_doc["feature_cols"] = list(self.csv_schema.feature_cols)
            doc["dataset"] = {"csv": csv_doc}
        doc["metalearners"] = [m.value for m in self.metalearners]
        doc["objectives"] = [spec_to_dict(o) for o in self.objectives]
        doc["search"] = {
            "iterations": self.search_iterations,
            "num_leaves": list(self.search_space.num_leaves),
            "learning_rate": list(self.search_space.learning_rate),
            "max_depth": list(self.search_space.max_depth),
            "min_data_in_leaf": list(self.search_space.min_data_in_leaf),
        }
        doc["gbdt"] = {
            "num_rounds": self.gbdt.num_rounds,
            "l2_reg": self.gbdt.l2_reg,
            "max_bins": self.gbdt.max_bins,
            "early_stopping_rounds": self.gbdt.early_stopping_rounds,
        }
        doc["split"] = {"train": self.split.train, "valid": self.split.valid, "test": self.split.test}
        return doc


def _require_keys(doc: dict, allowed: set[str], where: str) -> None:
    extra = set(doc) - allowed
    if extra:
        raise ValueError(f"unknown {where} fields {sorted(extra)}")


def load_config(doc: dict) -> ExperimentConfig:
    """Build a validated config from its JSON-file dictionary form."""
    _require_keys(
        doc,
        {"seed", "folds", "dataset", "metalearners", "objectives", "search", "gbdt", "split"},
        "config",
    )
    if "dataset" not in doc:
        raise ValueError("config is missing the dataset section")
    ds_doc = doc["dataset"]
    _require_keys(ds_doc, {"synthetic", "csv"}, "dataset")
    synthetic = None
    csv_path = None
    csv_schema = CsvSchema()
    csv_delimiter = ","
    if ("synthetic" in ds_doc) == ("csv" in ds_doc):
        raise ValueError("dataset must specify exactly one of synthetic or csv")
    if "synthetic" in ds_doc:
        syn = ds_doc["synthetic"]
        _require_keys(syn, {"n", "d", "noise_sd", "cost_rate", "treatment_lift", "seed"}, "synthetic")
        synthetic = SyntheticConfig(**syn)
    else:
        csv_doc = dict(ds_doc["csv"])
        _require_keys(
            csv_doc,
            {"path", "delimiter", "treatment_col", "outcome_col", "tau_col", "feature_cols"},
            "csv",
        )
        if "path" not in csv_doc:
            raise ValueError("csv dataset needs a path")
        csv_path = csv_doc["path"]
        csv_delimiter = csv_doc.get("delimiter", ",")
        feature_cols = csv_doc.get("feature_cols")
        csv_schema = CsvSchema(
            treatment_col=csv_doc.get("treatment_col", "t"),
            outcome_col=csv_doc.get("outcome_col", "y"),
            tau_col=csv_doc.get("tau_col"),
            feature_cols=None if feature_cols is None else tuple(feature_cols),
        )

    kwargs: dict = {
        "synthetic": synthetic,
        "csv_path": csv_path,
        "csv_schema": csv_schema,
        "csv_delimiter": csv_delimiter,
        "seed": int(doc.get("seed", 0)),
        "folds": int(doc.get("folds", 5)),
    }
    if "metalearners" in doc:
        kwargs["metalearners"] = tuple(MetaKind(m) for m in doc["metalearners"])
    if "objectives" in doc:
        kwargs["objectives"] = tuple(spec_from_dict(o) for o in doc["objectives"])
    if "search" in doc:
        s = dict(doc["search"])
        _require_keys(
            s, {"iterations", "num_leaves", "learning_rate", "max_depth", "min_data_in_leaf"}, "search"
        )
        kwargs["search_iterations"] = int(s.pop("iterations", 10))
        space = SearchSpace(
            num_leaves=tuple(s.get("num_leaves", SearchSpace.num_leaves)),
            learning_rate=tuple(s.get("learning_rate", SearchSpace.learning_rate)),
            max_depth=tuple(s.get("max_depth", SearchSpace.max_depth)),
            min_data_in_leaf=tuple(s.get("min_data_in_leaf", SearchSpace.min_data_in_leaf)),
        )
        kwargs["search_space"] = space
    if "gbdt" in doc:
        g = doc["gbdt"]
        _require_keys(g, {"num_rounds", "l2_reg", "max_bins", "early_stopping_rounds"}, "gbdt")
        kwargs["gbdt"] = replace(GbdtParams(), **g)
    if "split" in doc:
        sp = doc["split"]
        _require_keys(sp, {"train", "valid", "test", "seed"}, "split")
        kwargs["split"] = SplitSpec(**sp)
    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def _selection_value(scores: np.ndarray, ds: Dataset) -> float:
    """Model-selection criterion: true-effect curve area when known, else estimated."""
    if ds.true_tau is not None:
        return auqc_normalized(ds.true_tau, scores)
    return qini_curve(scores, ds.outcome, ds.treatment).normalized_area


def random_search(
    train: Dataset,
    valid: Dataset,
    kind: MetaKind,
    objective: ObjectiveSpec,
    space: SearchSpace = SearchSpace(),
    iterations: int = 10,
    seed: int = 0,
    base_params: GbdtParams = GbdtParams(),
) -> GbdtParams:
    """Pick hyperparameters by validation ranking quality over random draws.

    Candidates failing to fit are skipped; if every candidate fails the error
    lists each one's diagnostic. Ties keep the earliest candidate.
    """
    space.validate()
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    rng = np.random.default_rng(seed)
    best_value = -np.inf
    best_params = None
    failures = []
    for i in range(iterations):
        candidate = space.sample(rng, base_params)
        try:
            model = fit_meta(kind, objective, train, valid, candidate)
            value = _selection_value(predict_tau(model, valid.features), valid)
        except Exception as exc:
            failures.append(f"candidate {i + 1} ({candidate}): {exc}")
            continue
        if value > best_value:
            best_value = value
            best_params = candidate
    if best_params is None:
        detail = "; ".join(failures)
        raise RuntimeError(f"all {iterations} search candidates failed: {detail}")
    return best_params


@dataclass
class RunResult:
    """All cell records of one experiment run plus failure count."""

    config: dict
    cells: list[dict] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(1 for c in self.cells if c["status"] != "ok")

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "cells": self.cells}, indent=1)

    @classmethod
    def load(cls, run_dir: str) -> "RunResult":
        """Read back a persisted run (its results.json) for reporting."""
        path = os.path.join(run_dir, "results.json")
        if not os.path.exists(path):
            raise ValueError(f"{run_dir} holds no results.json; run an experiment first")
        with open(path) as fh:
            doc = json.load(fh)
        return cls(config=doc["config"], cells=doc["cells"])


def _load_dataset(config: ExperimentConfig) -> Dataset:
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic)
    return load_csv(config.csv_path, config.csv_schema, config.csv_delimiter)


def _inner_split(fold_train: Dataset, spec: SplitSpec, seed: int) -> tuple[Dataset, Dataset]:
    """Split a fold's training part train/valid by the spec's train:valid ratio."""
    ratio = spec.train / (spec.train + spec.valid)
    n = fold_train.n
    n_train = int(np.floor(ratio * n))
    perm = np.random.default_rng(seed).permutation(n)
    if n_train < 1 or n - n_train < 1:
        raise ValueError(f"fold too small to split train/valid: n={n}")
    return fold_train.subset(perm[:n_train]), fold_train.subset(perm[n_train:])


def _cell_id(fold: int, kind: MetaKind, objective: ObjectiveSpec) -> str:
    return f"fold{fold}_{kind.value}_{objective.kind}"


def _run_cell(payload: tuple) -> dict:
    (
        fold,
        kind,
        objective,
        inner_train,
        inner_valid,
        test,
        search_seed,
        objective_seed,
        config,
        qini_path,
    ) = payload
    started = time.monotonic()
    cell_objective = replace(objective, seed=objective_seed)
    try:
        params = random_search(
            inner_train,
            inner_valid,
            kind,
            cell_objective,
            config.search_space,
            config.search_iterations,
            search_seed,
            config.gbdt,
        )
        model = fit_meta(kind, cell_objective, inner_train, inner_valid, params)
        scores = predict_tau(model, test.features)
        metrics = ranking_metrics(scores, test)
        qini_curve(scores, test.outcome, test.treatment).to_csv(qini_path)
        record = {
            "cell": _cell_id(fold, kind, objective),
            "fold": fold,
            "metalearner": kind.value,
            "objective": spec_to_dict(objective),
            "status": "ok",
            "chosen_params": {
                "num_leaves": params.num_leaves,
                "learning_rate": params.learning_rate,
                "max_depth": params.max_depth,
                "min_data_in_leaf": params.min_data_in_leaf,
            },
            "metrics": metrics.to_dict(),
            "wall_time_s": time.monotonic() - started,
        }
    except Exception as exc:
        record = {
            "cell": _cell_id(fold, kind, objective),
            "fold": fold,
            "metalearner": kind.value,
            "objective": spec_to_dict(objective),
            "status": "failed",
            "error": f"{type(exc).__name__}: {exc}",
            "wall_time_s": time.monotonic() - started,
        }
    return record


def run_experiment(config: ExperimentConfig, out_dir: str, workers: int = 1) -> RunResult:
    """Run (or resume) the full cross-validated grid, persisting every cell.

    Existing cell files under out_dir/cells are trusted and skipped, so deleting
    a cell file re-runs exactly that cell. Returns the collected records; any
    failed cell is recorded rather than raised.
    """
    config.validate()
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    cells_dir = os.path.join(out_dir, "cells")
    qini_dir = os.path.join(out_dir, "qini")
    os.makedirs(cells_dir, exist_ok=True)
    os.makedirs(qini_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config.to_dict(), fh, indent=1, sort_keys=True)

    ds = _load_dataset(config)
    folds = kfold(ds, config.folds, seed=config.seed)

    pending = []
    records: dict[str, dict] = {}
    for fold, (train_idx, test_idx) in enumerate(folds):
        fold_train = ds.subset(train_idx)
        test = ds.subset(test_idx)
        split_seed = int(np.random.SeedSequence([config.seed, fold]).generate_state(1)[0])
        inner_train, inner_valid = _inner_split(fold_train, config.split, split_seed)
        for mi, kind in enumerate(config.metalearners):
            for oi, objective in enumerate(config.objectives):
                cid = _cell_id(fold, kind, objective)
                cell_path = os.path.join(cells_dir, f"{cid}.json")
                if os.path.exists(cell_path):
                    with open(cell_path) as fh:
                        records[cid] = json.load(fh)
                    continue
                seeds = np.random.SeedSequence([config.seed, fold, mi, oi]).generate_state(2)
                payload = (
                    fold,
                    kind,
                    objective,
                    inner_train,
                    inner_valid,
                    test,
                    int(seeds[0]),
                    int(seeds[1]),
                    config,
                    os.path.join(qini_dir, f"{cid}.csv"),
                )
                pending.append((cid, cell_path, payload))

    def finish(cid: str, cell_path: str, record: dict) -> None:
        with open(cell_path, "w") as fh:
            json.dump(record, fh, indent=1)
        records[cid] = record

    if workers == 1 or len(pending) <= 1:
        for cid, cell_path, payload in pending:
            finish(cid, cell_path, _run_cell(payload))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (cid, cell_path, _), record in zip(
                pending, pool.map(_run_cell, (p for _, _, p in pending))
            ):
                finish(cid, cell_path, record)

    ordered = sorted(
        records.values(),
        key=lambda r: (
            r["fold"],
            _META_ORDER.index(MetaKind(r["metalearner"])),
            _OBJ_ORDER[r["objective"]["kind"]],
        ),
    )
    result = RunResult(config=config.to_dict(), cells=ordered)
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        fh.write(result.to_json())
    return result


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def report(result: RunResult) -> dict:
    """Aggregate cell metrics to per-(strategy, objective) means and standard errors.

    The spread is the standard error of the fold mean; a single fold reports
    se=0.0 with single_fold set. Within each strategy the objective with the best
    mean ranking quality is flagged. Failed cells are listed, not averaged.
    """
    groups: dict[tuple[str, str], list[dict]] = {}
    failures = []
    for cell in result.cells:
        if cell["status"] != "ok":
            failures.append({"cell": cell["cell"], "error": cell.get("error", "")})
            continue
        groups.setdefault((cell["metalearner"], cell["objective"]["kind"]), []).append(cell)

    rows = []
    for (meta, obj_kind), cells in sorted(
        groups.items(), key=lambda kv: (_META_ORDER.index(MetaKind(kv[0][0])), _OBJ_ORDER[kv[0][1]])
    ):
        row: dict = {
            "metalearner": meta,
            "objective": obj_kind,
            "folds": len(cells),
            "single_fold": len(cells) == 1,
        }
        for metric in ("qini_norm", "auqc_norm", "kendall", "mse"):
            values = [c["metrics"][metric] for c in cells if c["metrics"][metric] is not None]
            if values:
                mean, se = _mean_se(values)
                row[f"{metric}_mean"] = mean
                row[f"{metric}_se"] = se
            else:
                row[f"{metric}_mean"] = None
                row[f"{metric}_se"] = None
        rows.append(row)

    ranking_key = "auqc_norm_mean" if any(r["auqc_norm_mean"] is not None for r in rows) else "qini_norm_mean"
    for meta in {r["metalearner"] for r in rows}:
        meta_rows = [r for r in rows if r["metalearner"] == meta and r[ranking_key] is not None]
        best = max(meta_rows, key=lambda r: r[ranking_key], default=None)
        for r in rows:
            if r["metalearner"] == meta:
                r["best_in_metalearner"] = r is best
    return {"rows": rows, "failures": failures, "ranking_metric": ranking_key}


def write_report(rep: dict, out_dir: str) -> None:
    """Persist a report as report.json and a flat report.csv."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(rep, fh, indent=1)
    columns = [
        "metalearner",
        "objective",
        "folds",
        "qini_norm_mean",
        "qini_norm_se",
        "auqc_norm_mean",
        "auqc_norm_se",
        "kendall_mean",
        "kendall_se",
        "mse_mean",
        "mse_se",
        "best_in_metalearner",
    ]
    lines = [",".join(columns)]
    for row in rep["rows"]:
        cells = []
        for col in columns:
            v = row.get(col)
            cells.append("" if v is None else str(v))
        lines.append(",".join(cells))
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
