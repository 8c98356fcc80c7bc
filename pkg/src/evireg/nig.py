"""Normal-Inverse-Gamma outputs and their student-t marginal.

Every function broadcasts: an ``EvidentialOutput`` may hold scalars (one
prediction) or equal-shape arrays (a batch of predictions).
"""

from dataclasses import dataclass
import math

import numpy as np

from .special import betainc, gammaln

ALPHA_FLOOR = 1.0 + 1e-12
_LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class EvidentialOutput:
    """NIG parameters ``(gamma, nu, alpha, beta)`` emitted by the evidential head."""

    gamma: np.ndarray | float
    nu: np.ndarray | float
    alpha: np.ndarray | float
    beta: np.ndarray | float

    def __post_init__(self):
        if not np.all(np.isfinite(self.gamma)):
            raise ValueError("gamma must be finite")
        if not np.all(np.asarray(self.nu) > 0):
            raise ValueError("nu must be > 0")
        if not np.all(np.asarray(self.alpha) > ALPHA_FLOOR):
            raise ValueError("alpha must be > 1 + 1e-12")
        if not np.all(np.asarray(self.beta) > 0):
            raise ValueError("beta must be > 0")

    def __len__(self):
        return int(np.size(self.gamma))

    def __getitem__(self, idx):
        return EvidentialOutput(
            np.asarray(self.gamma)[idx],
            np.asarray(self.nu)[idx],
            np.asarray(self.alpha)[idx],
            np.asarray(self.beta)[idx],
        )

    @classmethod
    def stack(cls, outputs):
        outputs = list(outputs)
        return cls(
            np.array([float(o.gamma) for o in outputs]),
            np.array([float(o.nu) for o in outputs]),
            np.array([float(o.alpha) for o in outputs]),
            np.array([float(o.beta) for o in outputs]),
        )

    def denormalize(self, mean, std):
        """Map an output trained on z-scored targets back to raw target units."""
        return EvidentialOutput(
            np.asarray(self.gamma) * std + mean,
            self.nu,
            self.alpha,
            np.asarray(self.beta) * std * std,
        )


@dataclass(frozen=True)
class PredictiveSummary:
    mean: np.ndarray | float
    aleatoric: np.ndarray | float
    epistemic: np.ndarray | float


@dataclass(frozen=True)
class StudentTParams:
    """Location / scale / degrees of freedom of the marginal likelihood.

    ``scale`` is the variance-like parameter: the density is
    ``t((y - location) / sqrt(scale); dof) / sqrt(scale)``.
    """

    location: np.ndarray | float
    scale: np.ndarray | float
    dof: np.ndarray | float


def predictive_summary(m: EvidentialOutput) -> PredictiveSummary:
    alpha = np.asarray(m.alpha, dtype=float)
    if np.any(alpha <= 1):
        raise ValueError("alpha must exceed 1 for a finite aleatoric variance")
    aleatoric = m.beta / (alpha - 1.0)
    return PredictiveSummary(mean=m.gamma, aleatoric=aleatoric, epistemic=aleatoric / m.nu)


def marginal_params(m: EvidentialOutput) -> StudentTParams:
    return StudentTParams(
        location=m.gamma,
        scale=m.beta * (1.0 + m.nu) / (m.nu * m.alpha),
        dof=2.0 * np.asarray(m.alpha),
    )


def log_marginal_pdf(y, m: EvidentialOutput):
    """Log density of the student-t marginal at ``y``.

    Written in the textbook location/scale/dof form; the NLL loss uses the
    NIG parameterization directly, so the two are independent routes.
    """
    t = marginal_params(m)
    n = t.dof
    z2 = (np.asarray(y, dtype=float) - t.location) ** 2 / t.scale
    out = (
        gammaln((n + 1.0) / 2.0) - gammaln(n / 2.0)
        - 0.5 * (np.log(n) + _LOG_PI + np.log(t.scale))
        - (n + 1.0) / 2.0 * np.log1p(z2 / n)
    )
    return float(out) if np.ndim(out) == 0 else out


def _t_cdf(z, n):
    z = np.asarray(z, dtype=float)
    z2 = z * z
    near = z2 < n
    tail = np.empty_like(z)
    # Near the centre n / (n + z^2) rounds to 1; use the complementary argument.
    if np.any(near):
        inner = np.asarray(betainc(0.5, n[near] / 2.0, z2[near] / (n[near] + z2[near])))
        tail[near] = 0.5 - 0.5 * inner
    if np.any(~near):
        tail[~near] = 0.5 * np.asarray(betainc(n[~near] / 2.0, 0.5, n[~near] / (n[~near] + z2[~near])))
    return np.where(z > 0, 1.0 - tail, tail)


def marginal_cdf(y, m: EvidentialOutput):
    t = marginal_params(m)
    z = (np.asarray(y, dtype=float) - t.location) / np.sqrt(t.scale)
    z, n = np.broadcast_arrays(z, np.asarray(t.dof, dtype=float))
    # +-inf handled explicitly; betainc would see x = 0.
    out = np.where(np.isposinf(z), 1.0, np.where(np.isneginf(z), 0.0, 0.0))
    finite = np.isfinite(z)
    if np.any(finite):
        out = out.astype(float)
        out[finite] = _t_cdf(z[finite], n[finite])
    return float(out) if out.ndim == 0 else out


def marginal_quantile(p, m: EvidentialOutput, tol=1e-12, max_iter=200):
    """Inverse of :func:`marginal_cdf` by bracketing bisection.

    The bracket is ``location +- 1e6 * sqrt(scale)``.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any(np.isnan(p)):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    t = marginal_params(m)
    loc, sd, p = np.broadcast_arrays(
        np.asarray(t.location, dtype=float), np.sqrt(t.scale), p
    )
    shape = p.shape
    loc, sd, p = loc.ravel(), sd.ravel(), p.ravel()
    flat = EvidentialOutput(
        *(np.broadcast_to(np.asarray(v, dtype=float), shape).ravel()
          for v in (m.gamma, m.nu, m.alpha, m.beta))
    )
    lo = loc - 1e6 * sd
    hi = loc + 1e6 * sd
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        # stop once every bracket is tight or has run out of representable midpoints
        if np.all((hi - lo <= tol) | (mid == lo) | (mid == hi)):
            break
        below = np.asarray(marginal_cdf(mid, flat)) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = (0.5 * (lo + hi)).reshape(shape)
    return float(out) if out.ndim == 0 else out
