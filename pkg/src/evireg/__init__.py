"""Evidential regression with a slope-capped auxiliary MSE and gradient-conflict tooling."""

from .losses import (
    AuxLossKind,
    LossBundle,
    LossPartials,
    ThresholdPair,
    evidence_regularizer,
    lipschitz_mse_batch,
    nll_loss,
    nll_partials,
    plain_mse,
    thresholds,
    total_objective,
)
from .nig import (
    EvidentialOutput,
    PredictiveSummary,
    StudentTParams,
    log_marginal_pdf,
    marginal_cdf,
    marginal_params,
    marginal_quantile,
    predictive_summary,
)

__version__ = "0.1.0"
