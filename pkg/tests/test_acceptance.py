"""Acceptance criteria 1-10.

Criteria 7-9 train the three objectives (plain NLL, NLL + MSE, NLL +
slope-capped MSE) on the synthetic benchmark for seeds 0-4 at full size;
that shared fixture takes a few minutes on one CPU.
"""

import math
import time

import numpy as np
import pytest

from evireg import audit
from evireg.experiment import run_synthetic
from evireg.losses import AuxLossKind, batch_threshold, lipschitz_mse_batch, nll_loss
from evireg.metrics import concordance_index, ece
from evireg.nig import EvidentialOutput, log_marginal_pdf, marginal_params

SEEDS = range(5)


def test_c01_gradient_audit(criterion):
    start = time.perf_counter()
    res = audit.finite_difference_audit(n=1000, seed=0)
    elapsed = time.perf_counter() - start
    ok = res["passed"] and elapsed < 5.0
    criterion(1, "gradient audit", ok, f"worst={res['worst']['error']:.2e} time={elapsed:.2f}s")
    assert ok


def test_c02_sign_fuzz(criterion):
    start = time.perf_counter()
    res = audit.sign_fuzz(n=100_000, seed=1)
    elapsed = time.perf_counter() - start
    ok = res["passed"] and elapsed < 10.0
    criterion(2, "sign fuzz", ok, f"violations={res['violations']} checked={res['checked']} time={elapsed:.2f}s")
    assert ok


def test_c03_shrinkage(criterion):
    res = audit.shrinkage_curve(lam2=1.0, alpha=2.0, beta=1.0)
    last = res["abs_d_gamma"][-1]
    ok = res["strictly_decreasing"] and last < 1e-6
    criterion(3, "shrinking gamma gradient", ok, f"|d_gamma|(nu=1e-8)={last:.3e}")
    assert ok
    assert last == pytest.approx(2.5e-8, rel=1e-6)


def test_c04_mse_nll_cosine(criterion):
    res = audit.cosine_check(n=200, seed=2)
    ok = res["passed"] and res["samples"] == 200
    criterion(4, "gamma-head cosine", ok, f"max|s-1|={res['max_deviation']:.2e} samples={res['samples']}")
    assert ok


def test_c05_lipschitz_bound(criterion):
    rng = np.random.default_rng(5)
    worst_excess = -math.inf
    worst_gap = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 33))
        y, m = audit.sample_points(rng, n)
        u = batch_threshold(m)
        _, d = lipschitz_mse_batch(y, m)
        worst_excess = max(worst_excess, float(np.max(np.abs(d))) - 2 * math.sqrt(u))
        # both branch formulas at the knee lam^2 = U
        lam = math.sqrt(u)
        worst_gap = max(worst_gap, abs(lam * lam - (2 * math.sqrt(u) * lam - u)))
    ok = worst_excess <= 1e-12 and worst_gap < 1e-12
    criterion(5, "Lipschitz bound", ok, f"max(|d|-2sqrt(U))={worst_excess:.2e} knee gap={worst_gap:.2e}")
    assert ok


def test_c06_marginal_consistency(criterion):
    from scipy import integrate

    rng = np.random.default_rng(6)
    y, m = audit.sample_points(rng, 1000)
    gap = float(np.max(np.abs(np.asarray(log_marginal_pdf(y, m)) + np.asarray(nll_loss(y, m)))))
    worst_mass = 0.0
    for i in range(20):
        mi = m[i]
        t = marginal_params(mi)
        sd = math.sqrt(t.scale)
        mass, _ = integrate.quad(lambda v: math.exp(log_marginal_pdf(v, mi)),
                                 t.location - 50 * sd, t.location + 50 * sd, points=[t.location], limit=500)
        worst_mass = max(worst_mass, abs(mass - 1.0))
    ok = gap < 1e-10 and worst_mass < 1e-3
    criterion(6, "marginal consistency", ok, f"max|logpdf+nll|={gap:.1e} max|mass-1|={worst_mass:.1e}")
    assert ok


@pytest.fixture(scope="module")
def runs():
    return {
        kind: [run_synthetic(kind, seed) for seed in SEEDS]
        for kind in (AuxLossKind.NONE, AuxLossKind.PLAIN_MSE, AuxLossKind.LIPSCHITZ_MSE)
    }


def _mean(values):
    return float(np.mean(list(values)))


@pytest.mark.slow
def test_c07_sparse_region_fit(runs, criterion):
    enet, mt = runs[AuxLossKind.NONE], runs[AuxLossKind.LIPSCHITZ_MSE]
    sparse_enet, sparse_mt = _mean(r.sparse_rmse for r in enet), _mean(r.sparse_rmse for r in mt)
    dense_enet, dense_mt = _mean(r.dense_rmse for r in enet), _mean(r.dense_rmse for r in mt)
    ok = sparse_mt < sparse_enet and abs(dense_mt - dense_enet) <= 0.1 * dense_enet
    criterion(7, "sparse-region RMSE", ok,
              f"sparse {sparse_mt:.3f} vs {sparse_enet:.3f}; dense {dense_mt:.3f} vs {dense_enet:.3f} (MT vs ENet)")
    assert ok


@pytest.mark.slow
def test_c08_conflict_trace(runs, criterion):
    mt = _mean(r.result.trace.tail_mean(0.25) for r in runs[AuxLossKind.LIPSCHITZ_MSE])
    mse = _mean(r.result.trace.tail_mean(0.25) for r in runs[AuxLossKind.PLAIN_MSE])
    ok = mt > mse
    criterion(8, "conflict cosine", ok, f"tail moving-average cosine MT {mt:.3f} vs MSE {mse:.3f}")
    assert ok


@pytest.mark.slow
def test_c09_ood_separation(runs, criterion):
    mt = runs[AuxLossKind.LIPSCHITZ_MSE]
    epi = _mean(r.ood.epistemic_auroc for r in mt)
    ale = _mean(r.ood.aleatoric_auroc for r in mt)
    per_seed = ", ".join(f"{r.ood.epistemic_auroc:.2f}/{r.ood.aleatoric_auroc:.2f}" for r in mt)
    ok = epi > 0.9 and ale < epi
    criterion(9, "OOD epistemic AUROC", ok, f"epistemic {epi:.3f} aleatoric {ale:.3f} (per seed epi/ale: {per_seed})")
    assert ok


@pytest.mark.slow
def test_nll_parity(runs):
    # the capped auxiliary loss should not cost calibration of the likelihood
    enet = _mean(r.metrics.mean_nll for r in runs[AuxLossKind.NONE])
    mt = _mean(r.metrics.mean_nll for r in runs[AuxLossKind.LIPSCHITZ_MSE])
    assert abs(enet - mt) < 0.5


def test_c10_metric_units(criterion):
    ci_perfect = concordance_index([1, 2, 3], [1, 2, 3])
    ci_const = concordance_index([1, 2, 3, 4], [7, 7, 7, 7])
    rng = np.random.default_rng(10)
    n = 100
    exact = EvidentialOutput(rng.normal(size=n), np.full(n, 0.7), np.full(n, 2.5), np.full(n, 1.3))
    ece_exact = ece(exact.gamma, exact)
    n = 10_000
    m = EvidentialOutput(np.full(n, -0.5), np.full(n, 2.0), np.full(n, 4.0), np.full(n, 0.8))
    t = marginal_params(m)
    y = -0.5 + np.sqrt(t.scale) * rng.standard_t(t.dof)
    ece_mc = ece(y, m)
    ok = ci_perfect == 1.0 and ci_const == 0.5 and abs(ece_exact - 0.495) < 1e-12 and ece_mc < 0.02
    criterion(10, "metric units", ok,
              f"CI={ci_perfect} constCI={ci_const} exactECE={ece_exact:.6f} mcECE={ece_mc:.4f}")
    assert ok
