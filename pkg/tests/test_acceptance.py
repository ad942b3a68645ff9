"""Acceptance checks.  Each test prints one PASS/FAIL line, repeated in the
terminal summary."""
import time
from decimal import Decimal

import numpy as np
import pytest

from mdpsense import (
    bellman,
    d_hoelder,
    d_kolm,
    d_tv,
    d_wass1,
    DiscreteMeasure,
    enumerate_optimal_strategies,
    fd_quotient,
    fd_quotient_fixed,
    frechet_fixed,
    frechet_fixed_direct,
    hadamard_optimal,
    remainder_bound,
)
from mdpsense.finance import (
    FinanceModel,
    figure_sweeps,
    finance_fd_quotient,
    finance_remainder_bound,
    gamma_bsm,
    gamma_crr,
    hadamard_finance,
    jump_direction,
    quantile_table,
    solve_gamma_numeric,
)
from mdpsense.inventory import build_inventory_mdm, builtin_spec, demand_direction, order_table
from mdpsense.io import rounded
from mdpsense.random_models import random_direction, random_mdm

from conftest import record

STARTS = [0, 5, 10, 15, 20]  # (y, 0) for y = 0..4
EPS_GRID = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
BSM = dict(mu=0.05, sigma=0.2, x0=1.0, N=12)


def decimal_gap(values, table) -> float:
    """Largest |value - table entry| in exact decimal arithmetic.

    Table entries are 4-decimal strings; float subtraction would add
    representation noise at the 5e-5 boundary.
    """
    return float(max(abs(Decimal(repr(float(v))) - Decimal(t)) for v, t in zip(values, table)))


def builtin_bsm(nu=0.04, alpha=0.5, N=12):
    return FinanceModel.bsm(BSM["mu"], BSM["sigma"], nu, alpha, N, BSM["x0"])


@pytest.fixture(scope="module")
def corpus():
    """50 random models (at most 4 states, 3 epochs, 3 actions), 5 directions each."""
    out = []
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        N, S = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        mdm = random_mdm(rng, N, S, 3, integer_rewards=seed % 2 == 0, sparsity=0.25 * (seed % 3 == 0))
        out.append((rng, mdm, [random_direction(rng, mdm, sparsity=0.25 * (k % 2)) for k in range(5)]))
    return out


def test_criterion_1_inventory_values():
    t0 = time.perf_counter()
    V, _ = bellman(build_inventory_mdm(builtin_spec()))
    elapsed = time.perf_counter() - t0
    err = decimal_gap(V[0, STARTS], ["16.5313", "18.5313", "23.1250", "26.1094", "28.5313"])
    ok = err <= 5e-5 and elapsed < 1.0
    record("1", ok, f"V0={rounded(V[0, STARTS])} max|err|={err:.2e} in {elapsed:.3f}s")
    assert ok


def test_criterion_2_inventory_derivatives():
    t0 = time.perf_counter()
    spec = builtin_spec()
    mdm = build_inventory_mdm(spec)
    found = enumerate_optimal_strategies(mdm, prefilter=True)
    d0 = hadamard_optimal(mdm, demand_direction(spec, 0), found).derivative[STARTS]
    d4 = hadamard_optimal(mdm, demand_direction(spec, 4), found).derivative[STARTS]
    elapsed = time.perf_counter() - t0
    e0 = decimal_gap(d0, ["-34.0938", "-34.0938", "-39.8125", "-37.3906", "-34.0938"])
    e4 = decimal_gap(d4, ["16.0313", "16.0313", "14.0000", "15.6094", "16.0313"])
    ok = max(e0, e4) <= 5e-5 and elapsed < 1.0
    record("2", ok, f"q0={rounded(d0)} q4={rounded(d4)} max|err|={max(e0, e4):.2e} in {elapsed:.3f}s")
    assert ok


def test_criterion_3_inventory_strategy():
    t0 = time.perf_counter()
    mdm = build_inventory_mdm(builtin_spec())
    found = enumerate_optimal_strategies(mdm, "exact", prefilter=True)
    elapsed = time.perf_counter() - t0
    expected = np.zeros((3, 5, 5), dtype=int)
    expected[0:2, 0, :] = 4  # order up to 4 from level 0
    expected[0:2, 1, :] = 3  # and from level 1
    expected[2, 0, :] = 2  # last period: order up to 2 from level 0
    ok = len(found) == 1 and np.array_equal(order_table(mdm, found.strategies[0]), expected) and elapsed < 10
    record("3", ok, f"|Exact|={len(found)} table match={ok} in {elapsed:.3f}s")
    assert ok


def test_criterion_4_quantile_table():
    lower_ref = [0.5172, 0.6944, 0.8088, 0.8290, 0.8639, 0.8765, 0.8952, 0.9116]
    upper_ref = [1.9433, 1.4474, 1.2426, 1.2126, 1.1632, 1.1466, 1.1226, 1.1024]
    t0 = time.perf_counter()
    levels, lower, upper = quantile_table(BSM["mu"], BSM["sigma"], BSM["N"])
    elapsed = time.perf_counter() - t0
    got = rounded(lower) + rounded(upper)
    ref = lower_ref + upper_ref
    names = [f"F^-1({t})" for t in levels] + [f"F^-1(1-{t})" for t in levels]
    misses = [f"{n}: {g:.4f} vs {r:.4f} (exact {x:.6f})"
              for n, g, r, x in zip(names, got, ref, lower + upper) if abs(g - r) > 1e-12]
    ok = not misses and elapsed < 0.1
    record("4", ok, f"{16 - len(misses)}/16 entries at 4 d.p. in {elapsed:.4f}s" +
           (f"; mismatches: {'; '.join(misses)}" if misses else ""))
    assert ok, misses


def test_criterion_5_fd_consistency(corpus):
    t0 = time.perf_counter()
    worst_fixed = worst_opt = 0.0
    fitted = []
    failures = []
    for rng, mdm, directions in corpus:
        exact = enumerate_optimal_strategies(mdm)
        strategies = [exact.strategies[0], mdm.strategy_from_choice(
            (rng.random((mdm.horizon, mdm.n_states)) * mdm.compiled.counts).astype(int))]
        scale = 1.0 + float(np.max(np.abs(bellman(mdm)[0])))
        for Q in directions:
            bound = remainder_bound(mdm, Q)
            deriv = hadamard_optimal(mdm, Q, exact, breakdown=False).derivative
            c_fit = 0.0
            for s in strategies:
                d_fixed = frechet_fixed(mdm, s, Q)[0]
                for eps in EPS_GRID:
                    err = float(np.max(np.abs(fd_quotient_fixed(mdm, s, Q, eps) - d_fixed)))
                    c_fit = max(c_fit, err / eps)
                    worst_fixed = max(worst_fixed, err / (bound.fixed * eps + 1e-9 * scale))
            for eps in EPS_GRID:
                err = np.abs(fd_quotient(mdm, Q, eps) - deriv)
                c_fit = max(c_fit, float(np.max(err)) / eps)
                worst_opt = max(worst_opt, float(np.max(err / (bound.optimal * eps + 1e-9 * scale))))
            fitted.append(c_fit)
            if not np.all(np.isfinite(bound.optimal)):
                failures.append("infinite bound")
    elapsed = time.perf_counter() - t0
    ok = worst_fixed <= 1.0 and worst_opt <= 1.0 and not failures and elapsed < 60
    record("5", ok, f"250 instances; max err/(C*eps) fixed={worst_fixed:.3f} optimal={worst_opt:.3f}; "
                    f"fitted C median={np.median(fitted):.3g} max={max(fitted):.3g}; {elapsed:.1f}s")
    assert ok


def test_criterion_6_representations_agree(corpus):
    worst = 0.0
    count = 0
    for rng, mdm, directions in corpus:
        exact = enumerate_optimal_strategies(mdm)
        for Q in directions:
            picks = [exact.strategies[0]] + [mdm.strategy_from_choice(
                (rng.random((mdm.horizon, mdm.n_states)) * mdm.compiled.counts).astype(int)) for _ in range(2)]
            for s in picks:
                table = frechet_fixed(mdm, s, Q)[0]
                for x in range(mdm.n_states):
                    direct = frechet_fixed_direct(mdm, s, Q, x)
                    worst = max(worst, abs(table[x] - direct) / max(1.0, abs(direct)))
                    count += 1
    ok = worst <= 1e-10
    record("6", ok, f"{count} comparisons, max relative gap {worst:.2e}")
    assert ok


def crr_thresholds(u, d, r, alpha):
    """Probabilities below / above which the optimal fraction is 0 / 1."""
    up = u ** (1.0 - alpha) * (r - d)
    return (r - d) / (u - d), up / (up + d ** (1.0 - alpha) * (u - r))


def test_criterion_7_crr_closed_form():
    d, r = 0.8, 1.0
    worst = 0.0
    for u in np.linspace(1.05, 1.6, 10):
        for alpha in np.linspace(0.1, 0.9, 10):
            p0, p1 = crr_thresholds(u, d, r, alpha)
            for lam in np.linspace(0.05, 0.95, 10):
                p = p0 + lam * (p1 - p0)
                g = gamma_crr(p, u, d, r, alpha)
                num = solve_gamma_numeric(FinanceModel.crr(p, u, d, r, alpha, 1), 0)[0]
                worst = max(worst, abs(g - num))
    corner_ok = True
    for u in (1.1, 1.5):
        for alpha in (0.25, 0.75):
            p0, p1 = crr_thresholds(u, d, r, alpha)
            for p, want in ((p0 - 0.01, 0.0), (p0, 0.0), (min(p1 + 0.01, 1.0), 1.0)):
                num = solve_gamma_numeric(FinanceModel.crr(p, u, d, r, alpha, 1), 0)[0]
                corner_ok &= gamma_crr(p, u, d, r, alpha) == want and abs(num - want) <= 1e-6
    ok = worst <= 1e-6 and corner_ok
    record("7 (CRR)", ok, f"1000 interior points, max|closed - numeric|={worst:.2e}; corners exact={corner_ok}")
    assert ok


def test_criterion_7_bsm_closed_form():
    mu = 0.05
    worst, where = 0.0, None
    for alpha in np.linspace(0.1, 0.9, 10):
        for sigma in np.linspace(0.1, 0.4, 10):
            lo = max(0.0, mu - (1 - alpha) * sigma**2)
            for lam in np.linspace(0.05, 0.95, 10):
                nu = lo + lam * (mu - lo)
                g = gamma_bsm(mu, sigma, alpha, nu)
                num = solve_gamma_numeric(FinanceModel.bsm(mu, sigma, nu, alpha, 12), 0)[0]
                if abs(g - num) > worst:
                    worst, where = abs(g - num), (alpha, sigma, nu)
    corner_ok = True
    for alpha in (0.25, 0.5, 0.75):
        lo = mu - (1 - alpha) * 0.04
        for nu, want in ((0.06, 0.0), (max(lo - 0.005, 0.0), 1.0)):
            model = FinanceModel.bsm(mu, 0.2, nu, alpha, 12)
            corner_ok &= gamma_bsm(mu, 0.2, alpha, nu) == want == solve_gamma_numeric(model, 0)[0]
    ok = worst <= 1e-6 and corner_ok
    record("7 (BSM)", ok, f"interior max|Merton ratio - discrete optimum|={worst:.2e} at "
                          f"alpha={where[0]:.3f} sigma={where[1]:.3f} nu={where[2]:.4f}; corners exact={corner_ok}")
    assert ok


def test_criterion_8_tau_independence_and_nullity():
    spread = 0.0
    for nu in (0.01, 0.04):
        model = builtin_bsm(nu)
        for delta in (0.5, 0.8, 1.5):
            ds = np.array([hadamard_finance(model, jump_direction(model, delta, [t])) for t in range(12)])
            spread = max(spread, float((ds.max() - ds.min()) / abs(ds[0])))
    zeros = [hadamard_finance(builtin_bsm(nu), jump_direction(builtin_bsm(nu), delta, [t]))
             for nu in (0.05, 0.06) for delta in (0.5, 0.8, 1.5) for t in (0, 6, 11)]
    ok = spread <= 1e-12 and all(z == 0.0 for z in zeros)
    record("8", ok, f"relative spread over tau={spread:.2e}; nu>=mu derivatives all exactly 0: {all(z == 0.0 for z in zeros)}")
    assert ok


def test_criterion_9_finance_fd():
    model = builtin_bsm()
    Q = jump_direction(model, 0.5, [0])
    deriv = hadamard_finance(model, Q)
    C = finance_remainder_bound(model, Q)
    errs = []
    for eps in (1e-2, 1e-3, 1e-4, 1e-5):
        errs.append(finance_fd_quotient(model, Q, eps) - deriv)
    ratios = [e / eps for e, eps in zip(errs, (1e-2, 1e-3, 1e-4, 1e-5))]
    ok = all(abs(e) <= C * eps for e, eps in zip(errs, (1e-2, 1e-3, 1e-4, 1e-5)))
    record("9", ok, f"derivative={deriv:.6f}; errors={[f'{e:.3g}' for e in errs]}; "
                    f"fitted C={max(np.abs(ratios)):.3g} <= a priori C={C:.4g}")
    assert ok


def test_criterion_10_figure_properties():
    alphas = [0.25, 0.5, 0.75]
    rows = figure_sweeps(BSM, {"alpha": alphas, "nu": [0.01], "delta": [0.5, 1.5], "mode": "tau", "values": [0]})
    by = {(a, d): v for a, _, d, _, _, v in rows}
    a_ok = all(by[(a, 0.5)] < 0 < by[(a, 1.5)] and abs(by[(a, 0.5)]) > by[(a, 1.5)] for a in alphas)

    nus = [0.0, 0.01, 0.02, 0.03, 0.035, 0.04, 0.045, 0.05]
    rows = figure_sweeps(BSM, {"alpha": alphas, "nu": nus, "delta": [0.5, 0.8], "mode": "tau", "values": [0]})
    b_ok = True
    for a in alphas:
        for d in (0.5, 0.8):
            mags = [abs(v) for al, nu, de, _, _, v in rows if al == a and de == d]
            b_ok &= all(x >= y for x, y in zip(mags, mags[1:])) and mags[0] > mags[-1]

    rows = figure_sweeps(BSM, {"alpha": alphas, "nu": [0.01], "delta": [0.5], "mode": "ell",
                               "values": list(range(1, 13))})
    c_ok = True
    for a in alphas:
        mags = [abs(v) for al, *_, v in rows if al == a]
        c_ok &= all(y >= x for x, y in zip(mags, mags[1:]))
    ok = a_ok and b_ok and c_ok
    record("10", ok, f"(a) sign and size at nu=0.01: {a_ok}; (b) |derivative| non-increasing in nu: {b_ok}; "
                     f"(c) non-decreasing in ell: {c_ok}")
    assert ok


def test_criterion_11_metrics():
    rng = np.random.default_rng(11)
    worst_w = 0.0
    for _ in range(100):
        a = DiscreteMeasure(rng.normal(size=5), rng.dirichlet(np.ones(5)))
        b = DiscreteMeasure(rng.normal(size=5), rng.dirichlet(np.ones(5)))
        worst_w = max(worst_w, abs(d_hoelder(a, b, 1.0) - d_wass1(a, b)))
    metrics = {"tv": d_tv, "kolm": d_kolm, "wass1": d_wass1, "hoelder(0.6)": lambda a, b: d_hoelder(a, b, 0.6)}
    worst_sym = worst_tri = 0.0
    for _ in range(100):
        ms = [DiscreteMeasure(rng.integers(-3, 4, 5).astype(float), rng.dirichlet(np.ones(5))) for _ in range(3)]
        for f in metrics.values():
            x, y, z = ms
            worst_sym = max(worst_sym, abs(f(x, y) - f(y, x)))
            worst_tri = max(worst_tri, f(x, z) - f(x, y) - f(y, z))
    ok = worst_w <= 1e-8 and worst_sym <= 1e-9 and worst_tri <= 1e-9
    record("11", ok, f"max|hoelder_1 - wass1|={worst_w:.1e}; symmetry gap={worst_sym:.1e}; "
                     f"triangle excess={max(worst_tri, 0.0):.1e}")
    assert ok
