"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from ivrepr import (CallSpec, CevVol, ConstantVol, SpaceTimeGrid, SwitchSpec, TimeDependentVol,
                    bs_gamma, bs_theta_identity_residual, bs_vega, extract_path, mlp_implied_variance,
                    price_switched_call, solve_forward_density, verify_representation)
from ivrepr.cli import main
from ivrepr.switching import switch_sample

from conftest import S0, record_criterion

SWEEP = 10_000
CEV_STRIKES = (80.0, 100.0, 120.0)


def random_tuples(n=SWEEP, seed=20240601):
    rng = np.random.default_rng(seed)
    s = np.exp(rng.uniform(np.log(1.0), np.log(1000.0), n))
    k = s * np.exp(rng.uniform(-1.5, 1.5, n))
    tau = rng.uniform(0.01, 5.0, n)
    sigma = rng.uniform(0.01, 2.0, n)
    return s, tau, sigma, k


def pipeline(surface, strikes, factor=1):
    grid = SpaceTimeGrid.for_surface(surface, S0, 1.0)
    if factor > 1:
        grid = grid.refined(factor)
    density = solve_forward_density(surface, S0, grid)
    return {k: verify_representation(surface, S0, CallSpec(k, 1.0), density=density) for k in strikes}


@pytest.fixture(scope="module")
def cev_runs():
    cev = CevVol(2.0, 0.5)
    start = time.perf_counter()
    coarse = pipeline(cev, CEV_STRIKES)
    fine = pipeline(cev, CEV_STRIKES, factor=2)
    return coarse, fine, time.perf_counter() - start


@pytest.fixture(scope="module")
def constant_run():
    start = time.perf_counter()
    rep = pipeline(ConstantVol(0.2), [100.0])[100.0]
    return rep, time.perf_counter() - start


@pytest.fixture(scope="module")
def piecewise_run():
    surface = TimeDependentVol((0.0, 0.5), (0.1, 0.3))
    start = time.perf_counter()
    rep = pipeline(surface, [100.0])[100.0]
    return surface, rep, time.perf_counter() - start


def test_criterion_01_gamma_vega_identity():
    s, tau, sigma, k = random_tuples()
    start = time.perf_counter()
    vega = bs_vega(s, tau, sigma, k)
    gap = np.abs(vega - sigma * s * s * tau * bs_gamma(s, tau, sigma, k)) / np.maximum(1.0, vega)
    elapsed = time.perf_counter() - start
    ok = gap.max() <= 1e-12 and elapsed < 1.0
    assert record_criterion(1, "Gamma-Vega identity", ok,
                            f"max scaled gap {gap.max():.2e} (tol 1e-12) over {SWEEP} tuples "
                            f"in {elapsed:.3f} s")


def test_criterion_02_valuation_identity():
    s, tau, sigma, k = random_tuples()
    start = time.perf_counter()
    res = np.abs(bs_theta_identity_residual(s, tau, sigma, k)) / s
    elapsed = time.perf_counter() - start
    ok = res.max() <= 1e-10 and elapsed < 1.0
    assert record_criterion(2, "Black-Scholes valuation identity", ok,
                            f"max |residual|/S {res.max():.2e} (tol 1e-10) over {SWEEP} tuples "
                            f"in {elapsed:.3f} s")


def test_criterion_03_constant_vol_fixed_point(constant_run):
    rep, elapsed = constant_run
    sig_err = np.abs(rep.sigma_bar - 0.2).max()
    v_err = np.abs(rep.v_fd - 0.04).max()
    resid = rep.representation_residual
    ok = sig_err <= 1e-5 and v_err <= 1e-6 and resid <= 1e-5 and rep.passed
    assert record_criterion(3, "constant-vol fixed point", ok,
                            f"max|sigma_bar-0.2| {sig_err:.2e}, max|v-0.04| {v_err:.2e}, "
                            f"representation residual {resid:.2e}, {elapsed:.2f} s")


def test_criterion_04_deterministic_closed_form(piecewise_run):
    surface, rep, elapsed = piecewise_run
    exact = np.array([surface.integrated_variance(t, 1.0) for t in rep.times])
    tv_err = np.abs(rep.curve.total_variance - exact).max()
    recovered = rep.variance.time_average()
    ok = tv_err <= 2e-4 and abs(recovered - 0.05) <= 1e-4
    assert record_criterion(4, "deterministic time-dependent closed form", ok,
                            f"max total-variance error {tv_err:.2e} (tol 2e-4), "
                            f"(1/T) int v dt = {recovered:.8f} (0.05 +/- 1e-4), {elapsed:.2f} s")


def test_criterion_05_cev_representation(cev_runs):
    coarse, fine, elapsed = cev_runs
    parts, ok = [], elapsed < 60.0
    for k in CEV_STRIKES:
        rel = coarse[k].summary["representation_rel"]
        ratio = fine[k].representation_residual / coarse[k].representation_residual
        ok &= rel <= 1e-2 and ratio <= 0.5
        parts.append(f"K={k:g} rel {rel:.2e} ratio {ratio:.2f}")
    assert record_criterion(5, "exact representation on CEV", ok,
                            "; ".join(parts) + f" (tol 1e-2, ratio <= 0.5), {elapsed:.1f} s")


def test_criterion_06_nodewise_identity(cev_runs):
    coarse, fine, _ = cev_runs

    def worst(rep):
        inner = slice(1, -1)
        return float((np.abs(rep.v_fd[inner] - rep.v_gt[inner]) / rep.v_gt[inner]).max())

    c = max(worst(coarse[k]) for k in CEV_STRIKES)
    f = max(worst(fine[k]) for k in CEV_STRIKES)
    ok = c <= 1e-2 and f <= 2e-3
    assert record_criterion(6, "node-wise forward-variance identity", ok,
                            f"max rel gap default grid {c:.2e} (tol 1e-2), doubled {f:.2e} (tol 2e-3)")


@pytest.mark.slow
def test_criterion_07_switching_consistency(cev_runs):
    coarse, _, _ = cev_runs
    rep = coarse[100.0]
    cev = rep.density.surface
    taus = [0.25, 0.5, 0.75]
    start = time.perf_counter()
    sample = switch_sample(cev, S0, taus, 1_000_000, 500, seed=11)
    parts, ok = [], True
    for tau in taus:
        m = rep.density.grid.time_index(tau)
        price, se = price_switched_call(SwitchSpec(tau, float(rep.sigma_bar[m]), cev), S0,
                                        rep.call, sample=sample)
        z = (price - rep.call_price) / se
        ok &= abs(z) <= 3.0
        parts.append(f"tau={tau} z={z:+.2f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    assert record_criterion(7, "switching-model consistency", ok,
                            "; ".join(parts) + f" (|z| <= 3, P=1e6), {elapsed:.1f} s")


def test_criterion_08_bracketing(cev_runs, constant_run, piecewise_run):
    coarse, _, _ = cev_runs
    reports = [constant_run[0], piecewise_run[1], *coarse.values()]
    worst_low = worst_up = -np.inf
    monotone = True
    for rep in reports:
        worst_low = max(worst_low, float(np.max(rep.curve.lower_brackets - rep.call_price)))
        worst_up = max(worst_up, float(np.max(rep.call_price - rep.curve.upper_brackets)))
        d, k = rep.density, rep.call.strike
        payoff = np.maximum(d.spots - k, 0.0)
        calendar = d.masses @ payoff
        monotone &= bool(np.all(np.diff(calendar) >= -1e-12))
    ok = worst_low <= 0.0 and worst_up <= 1e-6 * S0 and monotone
    assert record_criterion(8, "bracketing inequalities", ok,
                            f"max E[(S_t-K)+]-C {worst_low:.2e} (<= 0), max C-E[S_t] {worst_up:.2e} "
                            f"(<= 1e-6 S0), calendar monotone {monotone}, {len(reports)} curves")


def test_criterion_09_mlp(constant_run, piecewise_run, cev_runs):
    cases = [("constant", constant_run[0]), ("time-dependent", piecewise_run[1])]
    parts, ok = [], True
    for name, rep in cases:
        err = abs(mlp_implied_variance(extract_path(rep.weights), rep.density.surface) - rep.sigma2_imp)
        ok &= err <= 1e-5
        parts.append(f"{name} |err| {err:.1e}")
    for k, rep in cev_runs[0].items():
        s2 = mlp_implied_variance(extract_path(rep.weights), rep.density.surface)
        parts.append(f"CEV K={k:g} rel err {(s2 - rep.sigma2_imp) / rep.sigma2_imp:+.3%} (reported)")
    assert record_criterion(9, "most-likely-path exactness", ok, "; ".join(parts) + " (tol 1e-5)")


def test_criterion_10_reproducibility(tmp_path):
    cfg = {"model": {"family": "cev", "alpha": 2.0, "beta": 0.5}, "spot": S0,
           "calls": [{"strike": k, "maturity": 1.0} for k in CEV_STRIKES], "mc": {"seed": 7}}
    path = tmp_path / "cev.json"
    path.write_text(json.dumps(cfg))
    codes = [main(["verify", "--config", str(path), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = codes == [0, 0] and len(files) == 2 * len(CEV_STRIKES) and same
    assert record_criterion(10, "reproducibility", ok,
                            f"verify exit codes {codes}, {len(files)} files byte-identical: {same}")
