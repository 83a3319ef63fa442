"""effectrank: uplift models trained to rank.

Estimating who benefits most from a treatment is a ranking problem more often
than a regression problem: campaigns target the top of a priority list. This
package trains gradient-boosted effect models whose final stage can optimize
pairwise or listwise ranking objectives instead of squared error, evaluates the
resulting orderings with cumulative-effect curves, and wraps the whole protocol
(strategy grid, cross validation, random search) behind one experiment runner
and CLI.
"""

from .data import (
    CsvSchema,
    Dataset,
    SplitSpec,
    SyntheticConfig,
    estimate_propensity,
    generate_synthetic,
    kfold,
    load_csv,
    sample_coefficients,
    save_csv,
    split,
)
from .evaluation import (
    QiniCurve,
    RankingMetrics,
    auqc_normalized,
    auqc_true,
    kendall_tau,
    mse,
    qini_curve,
    ranking_metrics,
)
from .gbdt import BinMapper, GbdtModel, GbdtParams, Tree, ValidationData
from .gbdt import fit as fit_gbdt
from .harness import (
    ExperimentConfig,
    RunResult,
    SearchSpace,
    load_config,
    random_search,
    report,
    run_experiment,
)
from .metalearners import MetaKind, MetaModel, fit_meta, predict_tau, z_transform
from .objectives import (
    ObjectiveSpec,
    PairSample,
    build_objective,
    delta_auqc,
    grad_listwise,
    grad_pairwise,
    grad_pointwise,
    ideal_gain_norm,
    pair_grad_hess,
    pair_loss,
    pairwise_label,
    pairwise_prob,
    r_labels_weights,
    rank_positions,
    realized_loss,
    sample_pairs,
)

__version__ = "0.1.0"
