"""Numerical audits of the NLL gradient and its proven properties.

Each suite returns a plain dict with a ``passed`` flag, the worst observed
deviation and, on failure, a witnessing sample. ``run_all`` bundles them
into the JSON report written by ``evireg grad-audit``.
"""

import math

import numpy as np

from .losses import LossPartials, nll_loss, nll_partials, plain_mse, thresholds
from .net import GAMMA_HEAD, EvidentialMLP, NetConfig, cosine
from .nig import EvidentialOutput

PARTIAL_NAMES = ("d_gamma", "d_nu", "d_alpha", "d_beta")
FD_TOLERANCE = 1e-5
COSINE_TOLERANCE = 1e-6


def sample_points(rng, n, lam_range=5.0):
    """Random valid ``(y, m)`` with nu, beta log-uniform on [1e-3, 10], alpha uniform on [1.01, 10]."""
    nu = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), n))
    beta = np.exp(rng.uniform(math.log(1e-3), math.log(10.0), n))
    alpha = rng.uniform(1.01, 10.0, n)
    gamma = rng.uniform(-3.0, 3.0, n)
    lam = rng.uniform(-lam_range, lam_range, n)
    return gamma - lam, EvidentialOutput(gamma, nu, alpha, beta)


def _witness(y, m, i):
    return {
        "y": float(y[i]), "gamma": float(m.gamma[i]), "nu": float(m.nu[i]),
        "alpha": float(m.alpha[i]), "beta": float(m.beta[i]),
    }


def finite_difference_audit(n=1000, seed=0, partials_fn=nll_partials, tol=FD_TOLERANCE):
    """Compare analytic NLL partials with central differences.

    Step is ``1e-6 * max(1, |value|)`` on a five-point central stencil; the
    error of each entry is ``|analytic - fd| / max(1, |fd|)``.
    """
    rng = np.random.default_rng(seed)
    y, m = sample_points(rng, n)
    analytic = partials_fn(y, m)
    fields = ("gamma", "nu", "alpha", "beta")
    worst = {"error": 0.0}
    errors = {}
    for name, field in zip(PARTIAL_NAMES, fields):
        base = np.asarray(getattr(m, field), dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(base))
        fd = _central_difference(y, m, field, base, h)
        err = np.abs(np.asarray(getattr(analytic, name)) - fd) / np.maximum(1.0, np.abs(fd))
        errors[name] = float(err.max())
        i = int(np.argmax(err))
        if err[i] > worst["error"]:
            worst = {"error": float(err[i]), "partial": name, "sample": _witness(y, m, i)}
    return {
        "suite": "finite_difference",
        "passed": bool(worst["error"] <= tol),
        "samples": n,
        "tolerance": tol,
        "max_error_by_partial": errors,
        "worst": worst,
    }


def _fields(m):
    return {"gamma": m.gamma, "nu": m.nu, "alpha": m.alpha, "beta": m.beta}


def _central_difference(y, m, field, base, h):
    # Fourth-order stencil: the three-point rule's O(h^2 / nu^3) truncation
    # error alone reaches ~1e-4 relative at nu = 1e-3.
    def loss_at(k):
        shifted = EvidentialOutput(**{**_fields(m), field: base + k * h})
        return np.asarray(nll_loss(y, shifted))

    return (loss_at(-2) - 8.0 * loss_at(-1) + 8.0 * loss_at(1) - loss_at(2)) / (12.0 * h)


def sign_fuzz(n=100_000, seed=1, margin=1e-9):
    """Check that the NLL pushes nu / alpha down once the squared error exceeds its threshold.

    Half the samples draw the error uniformly on [-5, 5]; the other half
    place the squared error just above one of the two thresholds.
    """
    rng = np.random.default_rng(seed)
    y, m = sample_points(rng, n)
    th = thresholds(m)
    half = n // 2
    lam = np.asarray(m.gamma) - y
    # stress half: lam^2 = U * (1 + margin) * (1 + s), s log-uniform on [1e-6, 1]
    stretch = (1.0 + margin) * (1.0 + np.exp(rng.uniform(math.log(1e-6), 0.0, n - half)))
    use_nu = rng.random(n - half) < 0.5
    target = np.where(use_nu, np.asarray(th.u_nu)[half:], np.asarray(th.u_alpha)[half:])
    sign = np.where(rng.random(n - half) < 0.5, -1.0, 1.0)
    lam[half:] = sign * np.sqrt(target * stretch)
    y = np.asarray(m.gamma) - lam
    p = nll_partials(y, m)
    lam2 = lam * lam
    checks = {
        "alpha": (lam2 > np.asarray(th.u_alpha) * (1.0 + margin), np.asarray(p.d_alpha)),
        "nu": (lam2 > np.asarray(th.u_nu) * (1.0 + margin), np.asarray(p.d_nu)),
    }
    result = {"suite": "sign_fuzz", "samples": n, "passed": True, "violations": {}, "checked": {}}
    for name, (active, deriv) in checks.items():
        bad = np.flatnonzero(active & ~(deriv > 0))
        result["checked"][name] = int(active.sum())
        result["violations"][name] = int(bad.size)
        if bad.size:
            result["passed"] = False
            result.setdefault("witness", {})[name] = _witness(y, m, int(bad[0]))
    return result


def random_small_net(rng):
    config = NetConfig(
        input_dim=int(rng.integers(1, 4)),
        hidden_sizes=tuple(int(h) for h in rng.integers(2, 9, size=int(rng.integers(1, 3)))),
        activation=str(rng.choice(["tanh", "relu"])),
        seed=int(rng.integers(0, 2**31)),
    )
    return config


def cosine_check(n=200, seed=2, tol=COSINE_TOLERANCE):
    """Gamma-head gradients of plain MSE and NLL must point the same way."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    evaluated = 0
    witness = None
    attempts = 0
    while evaluated < n:
        attempts += 1
        if attempts > 20 * n:
            break
        model = EvidentialMLP(random_small_net(rng))
        params = model.init() + rng.normal(0.0, 0.1, model.n_params)
        x = rng.normal(0.0, 1.0, model.config.input_dim)
        out = model.forward(params, x)
        y = float(out.gamma) + rng.uniform(-3.0, 3.0)
        if y == float(out.gamma):
            continue
        nll_p = nll_partials(y, out)
        _, mse_d = plain_mse(y, out)
        g_nll = model.head_gradient(params, x, nll_p, GAMMA_HEAD)
        g_mse = model.head_gradient(params, x, LossPartials(mse_d, 0.0, 0.0, 0.0), GAMMA_HEAD)
        s = cosine(g_mse, g_nll)
        if s is None:
            continue
        evaluated += 1
        dev = abs(s - 1.0)
        if dev > worst:
            worst = dev
            witness = {"config": repr(model.config), "cosine": s}
    return {
        "suite": "cosine",
        "passed": bool(evaluated == n and worst <= tol),
        "samples": evaluated,
        "tolerance": tol,
        "max_deviation": worst,
        "worst": witness,
    }


def shrinkage_curve(lam2=1.0, alpha=2.0, beta=1.0, exponents=range(1, 9)):
    """``|dL/dgamma|`` for nu = 10^-1 ... 10^-8 at fixed error, alpha and beta."""
    nus = np.array([10.0 ** -k for k in exponents])
    lam = math.sqrt(lam2)
    m = EvidentialOutput(np.full(nus.size, lam), nus, np.full(nus.size, alpha), np.full(nus.size, beta))
    d = np.abs(np.asarray(nll_partials(np.zeros(nus.size), m).d_gamma))
    decreasing = bool(np.all(np.diff(d) < 0))
    return {
        "suite": "shrinkage",
        "passed": bool(decreasing and d[-1] < 1e-6),
        "nu": nus.tolist(),
        "abs_d_gamma": d.tolist(),
        "strictly_decreasing": decreasing,
    }


def run_all(seed=0, partials_fn=nll_partials):
    suites = [
        finite_difference_audit(seed=seed, partials_fn=partials_fn),
        sign_fuzz(seed=seed + 1),
        cosine_check(seed=seed + 2),
        shrinkage_curve(),
    ]
    return {"passed": bool(all(s["passed"] for s in suites)), "suites": suites}
