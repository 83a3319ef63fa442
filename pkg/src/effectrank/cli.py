"""Command-line front end: generate, train, score, evaluate, experiment, report.

Exit codes: 0 on success, 1 when an experiment finished but some grid cells
failed, 2 on invalid input (bad flags, malformed config or data).
"""

from __future__ import annotations

import csv as _csv
import json
import os
import sys

import click
import numpy as np

from .data import CsvSchema, SplitSpec, SyntheticConfig, generate_synthetic, load_csv, save_csv
from .evaluation import qini_curve, ranking_metrics
from .gbdt import GbdtParams
from .harness import RunResult, load_config, report as build_report, run_experiment, write_report
from .metalearners import MetaKind, MetaModel, fit_meta, predict_tau
from .objectives import ObjectiveSpec

_META_CHOICES = [k.value for k in MetaKind]
_OBJ_CHOICES = ["pointwise", "pairwise", "listwise"]


def _schema_options(fn):
    fn = click.option("--treatment-col", default="t", show_default=True, help="Treatment column name.")(fn)
    fn = click.option("--outcome-col", default="y", show_default=True, help="Outcome column name.")(fn)
    fn = click.option("--tau-col", default=None, help="True-effect column name, if present.")(fn)
    fn = click.option(
        "--features",
        default=None,
        help="Comma-separated feature columns; default is every unmapped column.",
    )(fn)
    fn = click.option("--delimiter", default=",", show_default=True)(fn)
    return fn


def _schema_from(treatment_col, outcome_col, tau_col, features):
    feature_cols = None if features is None else tuple(s.strip() for s in features.split(","))
    return CsvSchema(
        treatment_col=treatment_col,
        outcome_col=outcome_col,
        tau_col=tau_col,
        feature_cols=feature_cols,
    )


def _fail_usage(exc: Exception) -> None:
    raise click.UsageError(str(exc))


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Global random seed.")
@click.option("--out", default="effectrank_out", show_default=True, help="Output directory.")
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel grid cells.")
@click.pass_context
def main(ctx, seed, out, workers):
    """Treatment-effect ranking models: data, training, evaluation, experiments."""
    ctx.obj = {"seed": seed, "out": out, "workers": workers}


@main.command()
@click.option("-n", "n", type=int, default=10000, show_default=True, help="Instances.")
@click.option("-d", "d", type=int, default=10, show_default=True, help="Features.")
@click.option("--noise-sd", type=float, default=0.1, show_default=True)
@click.option("--cost-rate", type=float, default=0.1, show_default=True)
@click.option("--treatment-lift", type=float, default=0.0, show_default=True)
@click.option("--output", default=None, help="CSV path (default <out>/synthetic.csv).")
@click.pass_context
def generate(ctx, n, d, noise_sd, cost_rate, treatment_lift, output):
    """Simulate a randomized trial and write it as CSV (with a tau column)."""
    try:
        cfg = SyntheticConfig(
            n=n,
            d=d,
            noise_sd=noise_sd,
            cost_rate=cost_rate,
            treatment_lift=treatment_lift,
            seed=ctx.obj["seed"],
        )
        ds = generate_synthetic(cfg)
    except ValueError as exc:
        _fail_usage(exc)
    path = output or os.path.join(ctx.obj["out"], "synthetic.csv")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_csv(ds, path)
    click.echo(f"wrote {ds.n} rows x {ds.d} features to {path}")


@main.command()
@click.option("--data", "data_path", required=True, help="Training CSV.")
@_schema_options
@click.option("--metalearner", type=click.Choice(_META_CHOICES), default="Z", show_default=True)
@click.option("--objective", type=click.Choice(_OBJ_CHOICES), default="pointwise", show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True, help="Pair sigmoid scale.")
@click.option("--pairs-per-instance", "k", type=int, default=1, show_default=True)
@click.option("--normalize-scores/--no-normalize-scores", default=True, show_default=True)
@click.option("--valid-fraction", type=float, default=0.2, show_default=True)
@click.option("--num-rounds", type=int, default=200, show_default=True)
@click.option("--learning-rate", type=float, default=0.1, show_default=True)
@click.option("--num-leaves", type=int, default=31, show_default=True)
@click.option("--max-depth", type=int, default=6, show_default=True)
@click.option("--min-data-in-leaf", type=int, default=20, show_default=True)
@click.option("--l2-reg", type=float, default=1.0, show_default=True)
@click.option("--max-bins", type=int, default=256, show_default=True)
@click.option(
    "--early-stopping-rounds",
    type=int,
    default=20,
    show_default=True,
    help="0 disables early stopping.",
)
@click.option("--output", default=None, help="Model path (default <out>/model.json).")
@click.pass_context
def train(
    ctx,
    data_path,
    treatment_col,
    outcome_col,
    tau_col,
    features,
    delimiter,
    metalearner,
    objective,
    sigma,
    k,
    normalize_scores,
    valid_fraction,
    num_rounds,
    learning_rate,
    num_leaves,
    max_depth,
    min_data_in_leaf,
    l2_reg,
    max_bins,
    early_stopping_rounds,
    output,
):
    """Fit one strategy on a CSV and save the model as JSON."""
    seed = ctx.obj["seed"]
    try:
        schema = _schema_from(treatment_col, outcome_col, tau_col, features)
        ds = load_csv(data_path, schema, delimiter)
        if not 0.0 < valid_fraction < 1.0:
            raise ValueError(f"valid-fraction must be in (0, 1), got {valid_fraction}")
        perm = np.random.default_rng(seed).permutation(ds.n)
        n_valid = max(1, int(np.floor(valid_fraction * ds.n)))
        if n_valid >= ds.n:
            raise ValueError("valid-fraction leaves no training rows")
        train_ds = ds.subset(perm[n_valid:])
        valid_ds = ds.subset(perm[:n_valid])
        spec = ObjectiveSpec(
            kind=objective, sigma=sigma, k=k, normalize_scores=normalize_scores, seed=seed
        )
        params = GbdtParams(
            num_rounds=num_rounds,
            learning_rate=learning_rate,
            num_leaves=num_leaves,
            max_depth=max_depth,
            min_data_in_leaf=min_data_in_leaf,
            l2_reg=l2_reg,
            max_bins=max_bins,
            early_stopping_rounds=early_stopping_rounds or None,
            seed=seed,
        )
        model = fit_meta(MetaKind(metalearner), spec, train_ds, valid_ds, params)
    except (ValueError, OSError) as exc:
        _fail_usage(exc)
    path = output or os.path.join(ctx.obj["out"], "model.json")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    model.save(path)
    click.echo(
        f"fitted {metalearner}/{objective} on {train_ds.n} rows "
        f"(components: {', '.join(model.components)}) -> {path}"
    )


@main.command()
@click.option("--model", "model_path", required=True, help="Saved model JSON.")
@click.option("--data", "data_path", required=True, help="CSV to score.")
@_schema_options
@click.option("--output", default=None, help="Scores CSV path (default <out>/scores.csv).")
@click.pass_context
def score(ctx, model_path, data_path, treatment_col, outcome_col, tau_col, features, delimiter, output):
    """Apply a saved model to a CSV, emitting one score per row."""
    try:
        model = MetaModel.load(model_path)
        schema = _schema_from(treatment_col, outcome_col, tau_col, features)
        ds = load_csv(data_path, schema, delimiter)
        scores = predict_tau(model, ds.features)
    except (ValueError, OSError) as exc:
        _fail_usage(exc)
    path = output or os.path.join(ctx.obj["out"], "scores.csv")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["score"])
        for s in scores:
            writer.writerow([repr(float(s))])
    click.echo(f"wrote {scores.shape[0]} scores to {path}")


@main.command()
@click.option("--data", "data_path", required=True, help="CSV with outcomes and treatment.")
@_schema_options
@click.option("--scores", "scores_path", required=True, help="Scores CSV from `score`.")
@click.pass_context
def evaluate(ctx, data_path, treatment_col, outcome_col, tau_col, features, delimiter, scores_path):
    """Compute ranking metrics (and the incremental-outcome curve) for saved scores."""
    try:
        schema = _schema_from(treatment_col, outcome_col, tau_col, features)
        ds = load_csv(data_path, schema, delimiter)
        with open(scores_path, newline="") as fh:
            reader = _csv.reader(fh)
            header = next(reader, None)
            if header is None or header[0].strip() != "score":
                raise ValueError(f"{scores_path}: expected a 'score' column header")
            scores = np.asarray([float(row[0]) for row in reader], dtype=np.float64)
        if scores.shape[0] != ds.n:
            raise ValueError(f"{scores.shape[0]} scores for {ds.n} rows")
        metrics = ranking_metrics(scores, ds)
        curve = qini_curve(scores, ds.outcome, ds.treatment)
    except (ValueError, OSError) as exc:
        _fail_usage(exc)
    out = ctx.obj["out"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(metrics.to_dict(), fh, indent=1)
    curve.to_csv(os.path.join(out, "qini.csv"))
    click.echo(json.dumps(metrics.to_dict(), indent=1))


@main.command()
@click.option("--config", "config_path", required=True, help="Experiment config JSON.")
@click.pass_context
def experiment(ctx, config_path):
    """Run (or resume) the cross-validated strategy/objective grid."""
    try:
        with open(config_path) as fh:
            doc = json.load(fh)
        config = load_config(doc)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        _fail_usage(exc)
    result = run_experiment(config, ctx.obj["out"], ctx.obj["workers"])
    ok = len(result.cells) - result.n_failed
    click.echo(f"{ok}/{len(result.cells)} cells ok -> {ctx.obj['out']}")
    if result.n_failed:
        for cell in result.cells:
            if cell["status"] != "ok":
                click.echo(f"  failed {cell['cell']}: {cell['error']}", err=True)
        sys.exit(1)


@main.command(name="report")
@click.option("--run", "run_dir", default=None, help="Run directory (default <out>).")
@click.pass_context
def report_cmd(ctx, run_dir):
    """Aggregate a run's cells into mean/standard-error tables."""
    run_dir = run_dir or ctx.obj["out"]
    try:
        result = RunResult.load(run_dir)
    except ValueError as exc:
        _fail_usage(exc)
    rep = build_report(result)
    write_report(rep, run_dir)
    header = f"{'strategy':<10}{'objective':<12}{'qini_norm':<22}{'auqc_norm':<22}{'kendall':<22}{'mse':<22}"
    click.echo(header)
    for row in rep["rows"]:
        cells = [f"{row['metalearner']:<10}", f"{row['objective']:<12}"]
        for metric in ("qini_norm", "auqc_norm", "kendall", "mse"):
            mean, se = row[f"{metric}_mean"], row[f"{metric}_se"]
            if mean is None:
                cells.append(f"{'n/a':<22}")
            else:
                mark = "*" if metric in ("qini_norm", "auqc_norm") and row["best_in_metalearner"] else " "
                cells.append(f"{mean:+.4f} ({se:.4f}){mark:<5}")
        click.echo("".join(cells))
    if rep["failures"]:
        click.echo(f"{len(rep['failures'])} failed cells:", err=True)
        for f in rep["failures"]:
            click.echo(f"  {f['cell']}: {f['error']}", err=True)


if __name__ == "__main__":
    main()
