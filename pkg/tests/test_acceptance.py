"""Acceptance suite: one test per release criterion, tolerances pinned inline.

Criteria and their bars:
 1. the ranking-quality area equals a linear-discount cumulative gain, exactly,
    over every permutation for n in 2..7;
 2. pairwise and listwise analytic gradients match central finite differences
    (step 1e-5) of the sampled loss on 100 random instances (n <= 50), for
    sigma in {0.1, 1, 10} and both score-normalization settings, max relative
    error < 1e-4;
 3. the mean of 10^4 sampled (k=1) pairwise gradients matches the full
    ordered-pair gradient scaled by 1/n on n=50 within 2% relative L2 error;
 4. scoring by the true effect gives normalized area 1.0 exactly; random
    scores average inside [-0.02, 0.02] over 1000 trials at n=1000; the
    reverse-perfect ranking matches an exhaustive permutation oracle;
 5. one Newton round with a single leaf on squared error reproduces
    learning_rate * mean(residual) within 1e-9, and 200 training rounds never
    increase the training loss;
 6. on the benchmark generator (n=10000, d=10, 5 folds, 10-draw search), the
    Z strategy's listwise objective beats its pointwise objective on mean
    normalized curve area, both means land in [0.08, 0.35], and the listwise
    rank correlation is higher;
 7. in the same run, listwise sacrifices pointwise accuracy: its effect MSE
    exceeds the pointwise objective's;
 8. every strategy builds exactly its declared component models, and the Z
    strategy with a pointwise objective is bit-identical to a plain boosted
    model on the propensity-scaled transform;
 9. the experiment pipeline completes on the public retail e-mail dataset
    (skipped unless the raw CSV is present; see scripts/prepare_hillstrom.py)
    with finite estimated curve areas for all 18 strategy/objective pairs;
10. rerunning the criterion-6 experiment reproduces every metric bit for bit.

Criteria 6, 7 and 10 share one cross-validated run (a few minutes of compute);
everything else is seconds.
"""

import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from effectrank.data import (
    SplitSpec,
    SyntheticConfig,
    estimate_propensity,
    generate_synthetic,
    split,
)
from effectrank.evaluation import auqc_normalized, auqc_true
from effectrank.gbdt import GbdtParams, ValidationData
from effectrank.gbdt import fit as gbdt_fit
from effectrank.harness import ExperimentConfig, report, run_experiment
from effectrank.metalearners import MetaKind, fit_meta, z_transform
from effectrank.objectives import (
    ObjectiveSpec,
    PairSample,
    ideal_gain_norm,
    pair_grad_hess,
    pair_loss,
    rank_positions,
    sample_pairs,
)

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Criterion 6/7/10 experiment. The boosting base configuration mirrors the
# reference stack the benchmark numbers come from: no L2 leaf penalty and no
# early stopping (the listwise objective's tiny normalized gradients are
# otherwise drowned by the penalty term, and stopping on sampled pair loss
# truncates ranking runs long before ranking quality peaks).
REPLICATION_CONFIG = ExperimentConfig(
    synthetic=SyntheticConfig(n=10_000, d=10, seed=0),
    folds=5,
    metalearners=(MetaKind.Z,),
    objectives=(ObjectiveSpec(kind="pointwise"), ObjectiveSpec(kind="listwise")),
    search_iterations=10,
    gbdt=GbdtParams(l2_reg=0.0, early_stopping_rounds=None),
    seed=0,
)

RAW_HILLSTROM = os.environ.get(
    "HILLSTROM_CSV", os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "hillstrom.csv")
)


def double_sum_area(tau, perm):
    """Cumulative-gain area: sum over prefixes of the prefix's total effect."""
    total = 0.0
    for i in range(1, len(perm) + 1):
        total += sum(tau[p] for p in perm[:i])
    return total


def linear_discount_gain(tau, perm):
    """The same area written as one discounted pass: weight n-j+1 at position j."""
    n = len(perm)
    return sum(tau[p] * (n - j) for j, p in enumerate(perm))


def test_criterion_01_curve_area_is_linear_discount_gain():
    rng = np.random.default_rng(1)
    for n in range(2, 8):
        tau = rng.integers(-5, 6, size=n).astype(np.float64)
        for perm in itertools.permutations(range(n)):
            a = double_sum_area(tau, perm)
            b = linear_discount_gain(tau, perm)
            assert a == b
            # the library computes the same number when scores encode the order
            scores = np.empty(n)
            scores[list(perm)] = -np.arange(n, dtype=np.float64)
            assert auqc_true(tau, scores) == a


def test_criterion_02_analytic_gradients_match_finite_differences():
    rng = np.random.default_rng(2024)
    step = 1e-5
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(5, 51))
        sigma = (0.1, 1.0, 10.0)[i % 3]
        normalize = bool((i // 3) % 2)
        labels = rng.normal(size=n)
        # keep pair logits inside the smooth region of the clamped cross
        # entropy: past the clamp the loss is flat by design and central
        # differences no longer see the curve the gradient differentiates
        scores = rng.normal(size=n) * min(1.0, 3.0 / sigma)
        pairs = sample_pairs(n, 1, rng)
        ranks = rank_positions(scores)
        deltas = (
            np.abs(labels[pairs.left] - labels[pairs.right])
            * np.abs(ranks[pairs.left] - ranks[pairs.right]).astype(np.float64)
            / ideal_gain_norm(labels)
        )
        for kind, weights in (("pairwise", None), ("listwise", deltas)):
            spec = ObjectiveSpec(kind=kind, sigma=sigma, normalize_scores=normalize)
            grad, _ = pair_grad_hess(labels, scores, pairs, spec, pair_weights=weights)
            fd = np.empty(n)
            for j in range(n):
                up, dn = scores.copy(), scores.copy()
                up[j] += step
                dn[j] -= step
                fd[j] = (
                    pair_loss(labels, up, pairs, spec, pair_weights=weights)
                    - pair_loss(labels, dn, pairs, spec, pair_weights=weights)
                ) / (2.0 * step)
            scale = max(float(np.max(np.abs(fd))), 1e-8)
            worst = max(worst, float(np.max(np.abs(grad - fd))) / scale)
    assert worst < 1e-4, f"max relative gradient error {worst:.3e}"


def test_criterion_03_sampled_gradient_unbiased():
    n, resamples = 50, 10_000
    rng = np.random.default_rng(3)
    labels = rng.normal(size=n)
    scores = rng.normal(size=n)
    spec = ObjectiveSpec(kind="pairwise")
    full = PairSample(left=np.repeat(np.arange(n), n), right=np.tile(np.arange(n), n))
    full_grad, _ = pair_grad_hess(labels, scores, full, spec)

    acc = np.zeros(n)
    for _ in range(resamples):
        g, _ = pair_grad_hess(labels, scores, sample_pairs(n, 1, rng), spec)
        acc += g
    mean = acc / resamples
    target = full_grad / n
    rel = float(np.linalg.norm(mean - target) / np.linalg.norm(target))
    assert rel < 0.02, f"relative error {rel:.4f}"


def test_criterion_04_evaluation_sanity():
    rng = np.random.default_rng(4)

    # scoring by the true effect is a perfect ranking: exactly 1.0
    tau = rng.normal(size=500)
    assert auqc_normalized(tau, tau) == 1.0
    tau_int = rng.integers(-3, 4, size=200).astype(np.float64)
    assert auqc_normalized(tau_int, tau_int) == 1.0

    # uninformed scores average to ~0 normalized area on generator effects
    synth = generate_synthetic(SyntheticConfig(n=1000, d=10, seed=0))
    values = [
        auqc_normalized(synth.true_tau, rng.normal(size=1000)) for _ in range(1000)
    ]
    mean = float(np.mean(values))
    assert -0.02 <= mean <= 0.02, f"mean normalized area {mean:.5f}"

    # worst-case ranking agrees with the exhaustive permutation oracle
    for n in range(2, 8):
        t = rng.normal(size=n)
        areas = [linear_discount_gain(t, p) for p in itertools.permutations(range(n))]
        oracle = (min(areas) - float(np.mean(areas))) / (max(areas) - float(np.mean(areas)))
        got = auqc_normalized(t, -t)
        assert got == pytest.approx(oracle, rel=1e-10, abs=1e-12)


class _ZeroInitMse:
    resamples = False
    seed = 0

    def init_score(self, labels, weights):
        return 0.0

    def grad_hess(self, labels, scores, weights, round_index, rng):
        return scores - labels, np.ones_like(scores)

    def loss(self, labels, scores, weights, rng):
        return float(np.mean((scores - labels) ** 2))


def test_criterion_05_newton_step_exact_and_loss_monotone(rng):
    # one round, one leaf, no penalty: the Newton step from a zero base score
    # is exactly learning_rate * mean(residual) = learning_rate * mean(y)
    x = rng.normal(size=(80, 3))
    y = rng.normal(size=80) + 1.7
    params = GbdtParams(num_rounds=1, num_leaves=1, learning_rate=0.1, l2_reg=0.0)
    model = gbdt_fit(x, y, _ZeroInitMse(), params)
    leaf = model.predict(x)[0]
    assert abs(leaf - 0.1 * float(y.mean())) < 1e-9

    x = rng.normal(size=(600, 5))
    y = np.sin(x[:, 0]) + 0.5 * x[:, 1] - x[:, 3] ** 2 + 0.2 * rng.normal(size=600)
    params = GbdtParams(num_rounds=200, early_stopping_rounds=None)
    model = gbdt_fit(x, y, ObjectiveSpec(kind="pointwise"), params)
    hist = np.asarray(model.train_history_)
    assert hist.size > 0
    assert np.all(np.diff(hist) <= 1e-12)


@pytest.fixture(scope="module")
def replication(tmp_path_factory):
    out = tmp_path_factory.mktemp("replication")
    result = run_experiment(REPLICATION_CONFIG, str(out))
    assert result.n_failed == 0, [c.get("error") for c in result.cells if c["status"] != "ok"]
    return result


def _objective_rows(result):
    rows = report(result)["rows"]
    assert all(r["metalearner"] == "Z" for r in rows)
    return {r["objective"]: r for r in rows}


def test_criterion_06_listwise_beats_pointwise_on_ranking(replication):
    rows = _objective_rows(replication)
    lw, pw = rows["listwise"], rows["pointwise"]
    assert lw["auqc_norm_mean"] > pw["auqc_norm_mean"], (
        f"listwise {lw['auqc_norm_mean']:.4f} <= pointwise {pw['auqc_norm_mean']:.4f}"
    )
    for name, row in (("listwise", lw), ("pointwise", pw)):
        assert 0.08 <= row["auqc_norm_mean"] <= 0.35, (
            f"{name} mean normalized area {row['auqc_norm_mean']:.4f} outside [0.08, 0.35]"
        )
    assert lw["kendall_mean"] > pw["kendall_mean"], (
        f"listwise kendall {lw['kendall_mean']:.4f} <= pointwise {pw['kendall_mean']:.4f}"
    )


def test_criterion_07_ranking_gain_costs_pointwise_accuracy(replication):
    rows = _objective_rows(replication)
    assert rows["listwise"]["mse_mean"] > rows["pointwise"]["mse_mean"], (
        f"listwise mse {rows['listwise']['mse_mean']:.4f} <= "
        f"pointwise mse {rows['pointwise']['mse_mean']:.4f}"
    )


def test_criterion_08_strategy_component_structure():
    expected = {
        MetaKind.Z: {"f_z"},
        MetaKind.S: {"f_s"},
        MetaKind.T: {"f_t1", "f_t0"},
        MetaKind.X: {"f_t1", "f_t0", "f_x0", "f_x1"},
        MetaKind.DR: {"f_t1", "f_t0", "f_dr"},
        MetaKind.R: {"m_hat", "f_r"},
    }
    ds = generate_synthetic(SyntheticConfig(n=900, d=5, seed=7))
    train, valid, test = split(ds, SplitSpec(seed=3))
    spec = ObjectiveSpec(kind="pointwise", seed=11)
    params = GbdtParams(num_rounds=10)
    for kind, names in expected.items():
        model = fit_meta(kind, spec, train, valid, params)
        assert set(model.components) == names, f"{kind.value}: {set(model.components)}"

    # Z + pointwise collapses to one boosted model on the scaled transform
    meta = fit_meta(MetaKind.Z, spec, train, valid, params)
    e = estimate_propensity(train)
    direct = gbdt_fit(
        train.features,
        z_transform(train.outcome, train.treatment, e),
        spec,
        params,
        valid=ValidationData(valid.features, z_transform(valid.outcome, valid.treatment, e)),
    )
    assert meta.components["f_z"].to_json() == direct.to_json()
    np.testing.assert_array_equal(meta.predict_tau(test.features), direct.predict(test.features))


@pytest.mark.skipif(
    not os.path.exists(RAW_HILLSTROM),
    reason=(
        "public retail e-mail CSV not present; download it and place it at "
        "tests/data/hillstrom.csv (or point HILLSTROM_CSV at it) — "
        "see scripts/prepare_hillstrom.py for the source URL"
    ),
)
def test_criterion_09_real_data_smoke(tmp_path):
    subprocess.run(
        [
            sys.executable,
            os.path.join(REPO_ROOT, "scripts", "prepare_hillstrom.py"),
            RAW_HILLSTROM,
            str(tmp_path),
        ],
        check=True,
    )
    arm_csv = tmp_path / "womens.csv"
    assert arm_csv.exists()
    config = ExperimentConfig(
        csv_path=str(arm_csv),
        folds=2,
        search_iterations=3,
        gbdt=GbdtParams(num_rounds=100),
        seed=0,
    )
    result = run_experiment(config, str(tmp_path / "run"))
    assert result.n_failed == 0, [c.get("error") for c in result.cells if c["status"] != "ok"]
    assert len(result.cells) == 36  # 6 strategies x 3 objectives x 2 folds
    rows = report(result)["rows"]
    assert len(rows) == 18
    for row in rows:
        assert row["qini_norm_mean"] is not None
        assert np.isfinite(row["qini_norm_mean"])


def test_criterion_10_replication_run_is_deterministic(replication, tmp_path):
    again = run_experiment(REPLICATION_CONFIG, str(tmp_path / "again"))

    def strip(cells):
        return [{k: v for k, v in c.items() if k != "wall_time_s"} for c in cells]

    assert strip(again.cells) == strip(replication.cells)
