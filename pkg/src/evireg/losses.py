"""Evidential regression losses and their analytic partial derivatives.

Sign convention: ``lam = gamma - y`` everywhere. Per-item functions
broadcast over arrays; batch functions reduce by the arithmetic mean.
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from .nig import EvidentialOutput
from .special import digamma, gammaln

_LOG_PI = math.log(math.pi)


class AuxLossKind(str, Enum):
    """Auxiliary loss added to the NLL.

    ``none`` is the plain evidential network, ``plain_mse`` adds the
    unmodified squared error, ``lipschitz_mse`` adds the slope-capped one.
    """

    NONE = "none"
    PLAIN_MSE = "plain_mse"
    LIPSCHITZ_MSE = "lipschitz_mse"


@dataclass(frozen=True)
class LossPartials:
    d_gamma: np.ndarray | float
    d_nu: np.ndarray | float
    d_alpha: np.ndarray | float
    d_beta: np.ndarray | float

    @classmethod
    def zeros_like(cls, values):
        z = np.zeros_like(np.asarray(values, dtype=float))
        return cls(z, z, z, z)

    def __add__(self, other):
        return LossPartials(
            self.d_gamma + other.d_gamma,
            self.d_nu + other.d_nu,
            self.d_alpha + other.d_alpha,
            self.d_beta + other.d_beta,
        )

    def scale(self, k):
        return LossPartials(self.d_gamma * k, self.d_nu * k, self.d_alpha * k, self.d_beta * k)

    def as_array(self):
        """Stack as an ``(N, 4)`` array in (gamma, nu, alpha, beta) column order."""
        cols = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float))
                                     for v in (self.d_gamma, self.d_nu, self.d_alpha, self.d_beta)))
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ThresholdPair:
    u_nu: np.ndarray | float
    u_alpha: np.ndarray | float


def _split(y, m):
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(m.gamma, dtype=float)
    nu = np.asarray(m.nu, dtype=float)
    alpha = np.asarray(m.alpha, dtype=float)
    beta = np.asarray(m.beta, dtype=float)
    return gamma - y, nu, alpha, beta


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def nll_loss(y, m: EvidentialOutput):
    """Negative log marginal likelihood of ``y`` under the NIG output ``m``."""
    lam, nu, alpha, beta = _split(y, m)
    big_lambda = 2.0 * beta * (1.0 + nu)
    loss = (
        0.5 * (_LOG_PI - np.log(nu))
        - alpha * np.log(big_lambda)
        + (alpha + 0.5) * np.log(lam * lam * nu + big_lambda)
        + gammaln(alpha) - gammaln(alpha + 0.5)
    )
    return _out(loss)


def nll_partials(y, m: EvidentialOutput) -> LossPartials:
    lam, nu, alpha, beta = _split(y, m)
    lam2 = lam * lam
    denom = lam2 * nu + 2.0 * beta * (1.0 + nu)
    d_gamma = (2.0 * alpha + 1.0) * lam * nu / denom
    d_nu = -0.5 / nu - alpha / (nu + 1.0) + (alpha + 0.5) * (lam2 + 2.0 * beta) / denom
    d_alpha = (
        np.log1p(lam2 * nu / (2.0 * beta * (nu + 1.0)))
        + digamma(alpha) - digamma(alpha + 0.5)
    )
    d_beta = -alpha / beta + (alpha + 0.5) * 2.0 * (1.0 + nu) / denom
    return LossPartials(_out(d_gamma), _out(d_nu), _out(d_alpha), _out(d_beta))


def thresholds(m: EvidentialOutput) -> ThresholdPair:
    """Squared-error levels above which the NLL pushes nu (resp. alpha) down."""
    nu = np.asarray(m.nu, dtype=float)
    alpha = np.asarray(m.alpha, dtype=float)
    beta = np.asarray(m.beta, dtype=float)
    u_nu = beta * (nu + 1.0) / (alpha * nu)
    u_alpha = 2.0 * beta * (1.0 + nu) / nu * np.expm1(digamma(alpha + 0.5) - digamma(alpha))
    return ThresholdPair(_out(u_nu), _out(u_alpha))


def batch_threshold(ms: EvidentialOutput) -> float:
    """Batch-wide minimum of ``min(u_nu, u_alpha)``; enters the loss as a constant."""
    th = thresholds(ms)
    return float(np.min(np.minimum(th.u_nu, th.u_alpha)))


def lipschitz_mse_items(ys, gammas, u):
    """Per-item slope-capped squared error for a fixed threshold ``u``.

    Returns ``(losses, d_gamma)``. Quadratic below ``u``, linear with slope
    ``2 sqrt(u)`` at and above it.
    """
    lam = np.asarray(gammas, dtype=float) - np.asarray(ys, dtype=float)
    lam2 = lam * lam
    root = math.sqrt(u)
    quad = lam2 < u
    losses = np.where(quad, lam2, 2.0 * root * np.abs(lam) - u)
    d_gamma = np.where(quad, 2.0 * lam, 2.0 * root * np.sign(lam))
    return losses, d_gamma


def lipschitz_mse_batch(ys, ms: EvidentialOutput, u=None):
    """Mean slope-capped squared error over a batch.

    ``u`` defaults to :func:`batch_threshold` of ``ms``. The threshold is
    treated as a constant, so only ``gamma`` receives a gradient. The
    returned ``d_gamma`` entries are per item, before the 1/N of the mean.
    """
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if ys.size == 0:
        raise ValueError("empty batch")
    if u is None:
        u = batch_threshold(ms)
    losses, d_gamma = lipschitz_mse_items(ys, np.atleast_1d(ms.gamma), u)
    return float(np.mean(losses)), d_gamma


def plain_mse(y, m: EvidentialOutput):
    lam = np.asarray(m.gamma, dtype=float) - np.asarray(y, dtype=float)
    return _out(lam * lam), _out(2.0 * lam)


def evidence_regularizer(y, m: EvidentialOutput):
    """``|y - gamma| (2 nu + alpha)`` and its partials; zero subgradient at an exact fit."""
    lam, nu, alpha, _ = _split(y, m)
    err = np.abs(lam)
    evidence = 2.0 * nu + alpha
    # lam = gamma - y, so y - gamma < 0 <=> lam > 0
    d_gamma = np.sign(lam) * evidence
    zeros = np.zeros_like(err)
    partials = LossPartials(_out(d_gamma), _out(2.0 * err), _out(err), _out(zeros))
    return _out(err * evidence), partials


@dataclass(frozen=True)
class LossBundle:
    """Batch losses and the per-item partials of each source.

    ``reg`` is the unweighted mean regularizer; ``total`` already includes
    the coefficient. ``partials`` maps ``"nll"``, ``"aux"`` and ``"reg"`` to
    each source's per-item contribution to the total (regularizer partials
    are multiplied by the coefficient), before the 1/N of the batch mean.
    """

    nll: float
    aux: float
    reg: float
    total: float
    partials: dict = field(default_factory=dict)

    def total_partials(self) -> LossPartials:
        return self.partials["nll"] + self.partials["aux"] + self.partials["reg"]


def total_objective(ys, ms: EvidentialOutput, kind=AuxLossKind.LIPSCHITZ_MSE, c=0.0) -> LossBundle:
    kind = AuxLossKind(kind)
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if ys.size == 0:
        raise ValueError("empty batch")
    if c < 0:
        raise ValueError("regularizer coefficient must be nonnegative")
    ms = EvidentialOutput(*(np.atleast_1d(np.asarray(v, dtype=float))
                            for v in (ms.gamma, ms.nu, ms.alpha, ms.beta)))

    nll = np.asarray(nll_loss(ys, ms))
    nll_p = nll_partials(ys, ms)
    reg, reg_p = evidence_regularizer(ys, ms)
    zero = np.zeros_like(ys)

    if kind is AuxLossKind.NONE:
        aux = 0.0
        aux_p = LossPartials(zero, zero, zero, zero)
    elif kind is AuxLossKind.PLAIN_MSE:
        items, d_gamma = plain_mse(ys, ms)
        aux = float(np.mean(items))
        aux_p = LossPartials(np.asarray(d_gamma), zero, zero, zero)
    else:
        aux, d_gamma = lipschitz_mse_batch(ys, ms)
        aux_p = LossPartials(d_gamma, zero, zero, zero)

    nll_mean = float(np.mean(nll))
    reg_mean = float(np.mean(reg))
    return LossBundle(
        nll=nll_mean,
        aux=aux,
        reg=reg_mean,
        total=nll_mean + aux + c * reg_mean,
        partials={"nll": nll_p, "aux": aux_p, "reg": reg_p.scale(c)},
    )
