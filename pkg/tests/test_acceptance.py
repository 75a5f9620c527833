"""End-to-end acceptance checks, one per headline claim.

Each test prints a single PASS/FAIL line with the measured numbers before
asserting, so a full run reads as a scorecard. Seeds are fixed; every
tolerance matches the stated claim, not the observed luck of a draw.
"""

import json

import numpy as np
import pytest
import scipy.stats

from narrowtube import (
    ExampleFamilySpec,
    build_ctmc,
    build_domain_test_function,
    build_example_family,
    ctmc_marginal_batch,
    exit_stats_linear_solve,
    fd_strip_exit_time,
    gluing_parameters,
    green_bvp_solve,
    hat_exit_batch,
    ks_statistic,
    limiting_scale_speed,
    make_ctmc_grid,
    mc_exit_statistics,
    resolvent_check,
    sample_marginal,
)
from narrowtube.cli import main

SEED = 20260817

SKEW = ExampleFamilySpec(v1=(1.0,), beta=1.0, mu=0.0)
STICKY = ExampleFamilySpec(v1=(1.0,), beta=0.0, mu=0.5)
MIXED = ExampleFamilySpec(v1=(1.0,), beta=1.0, mu=0.3)
SMOOTH = ExampleFamilySpec(v1=(1.0, 0.0, 0.5))

LIMIT_GRID = np.linspace(-1.0, 1.0, 41)


def _report(num, name, ok, detail):
    print(f"criterion {num} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_1_skew_exit_probability():
    # two-thirds right-exit probability across the width step
    fam = build_example_family(SKEW, 0.02)
    y_mid = 0.5 * fam.upper(0.0)[0]
    prob, _ = mc_exit_statistics(fam, (0.0, y_mid), (-0.2, 0.2), 1e-6,
                                 20000, SEED)
    target = 2.0 / 3.0
    band = max(0.02, 3.0 * prob.std_error)
    ok = abs(prob.mean - target) <= band
    _report(1, "skew exit probability", ok,
            f"p_hat={prob.mean:.5f} target={target:.5f} band={band:.5f}")
    assert ok


def test_criterion_2_sticky_exit_time():
    table = limiting_scale_speed(STICKY, LIMIT_GRID)
    oracle = green_bvp_solve(table, -0.1, 0.1, 0.0)
    assert oracle == pytest.approx(0.06, rel=1e-9)

    eps = 0.01
    fam = build_example_family(STICKY, eps)
    # paths start on the channel midline; a needle-interior start would
    # measure the descent transient instead of the glued limit
    _, mean_time = mc_exit_statistics(fam, (0.0, eps / 2.0), (-0.1, 0.1),
                                      1e-6, 2000, SEED + 1)
    rel_2d = abs(mean_time.mean - oracle) / oracle

    model = build_ctmc(table, make_ctmc_grid(table, 4001))
    sol = exit_stats_linear_solve(model, (-0.1, 0.1))
    chain = float(sol.mean_time[int(np.argmin(np.abs(sol.states)))])
    rel_chain = abs(chain - oracle) / oracle

    ok = rel_2d <= 0.10 and rel_chain <= 0.02
    _report(2, "sticky exit time", ok,
            f"oracle={oracle:.4f} mc={mean_time.mean:.5f} "
            f"rel={rel_2d:.4f} chain={chain:.6f} rel={rel_chain:.2e}")
    assert ok


def test_criterion_3_theta_extraction():
    table = limiting_scale_speed(STICKY, LIMIT_GRID)
    kappas = np.array([0.2, 0.1, 0.05])
    taus = []
    for k in kappas:
        model = build_ctmc(table, make_ctmc_grid(table, 4001, bounds=(-k, k)))
        sol = exit_stats_linear_solve(model, (-k, k))
        taus.append(float(sol.mean_time[model.state_index(0.0)]))
    coef, *_ = np.linalg.lstsq(np.stack([kappas, kappas**2], axis=1),
                               np.array(taus), rcond=None)
    theta_hat = float(coef[0])
    ok = abs(theta_hat - 0.5) <= 0.05
    _report(3, "theta extraction", ok,
            f"theta_hat={theta_hat:.5f} target=0.5 "
            f"taus={[round(t, 5) for t in taus]}")
    assert ok


def test_criterion_4_smooth_case_regression():
    table = limiting_scale_speed(SMOOTH, np.linspace(-1.0, 1.0, 81))
    model = build_ctmc(table, make_ctmc_grid(table, 2001,
                                             bounds=(-0.2, 0.2)))
    sol = exit_stats_linear_solve(model, (-0.2, 0.2))
    chain = float(sol.mean_time[model.state_index(0.0)])

    eps = 0.02
    fam = build_example_family(SMOOTH, eps)
    _, t2d = mc_exit_statistics(fam, (0.0, eps / 2.0), (-0.2, 0.2), 1e-6,
                                2000, SEED + 4)
    _, that = hat_exit_batch(fam, 0.0, (-0.2, 0.2), 1e-6, 2000, SEED + 5)

    allow = 0.05 * chain
    pairs = [
        ("2d-chain", abs(t2d.mean - chain), 3.0 * t2d.std_error + allow),
        ("hat-chain", abs(that.mean - chain), 3.0 * that.std_error + allow),
        ("2d-hat", abs(t2d.mean - that.mean),
         3.0 * (t2d.std_error + that.std_error) + allow),
    ]
    ok = all(diff <= tol for _, diff, tol in pairs)
    _report(4, "smooth-case regression", ok,
            f"chain={chain:.5f} 2d={t2d.mean:.5f} hat={that.mean:.5f} "
            + " ".join(f"{n}:{d:.5f}<={t:.5f}" for n, d, t in pairs))
    assert ok


def test_criterion_5_flat_tube_exactness():
    eps = 0.05
    fam = build_example_family(ExampleFamilySpec(v1=(1.0,)), eps)

    _, mean_time = mc_exit_statistics(fam, (0.0, eps / 2.0), (-0.1, 0.1),
                                      1e-6, 4000, SEED + 6)
    rel_time = abs(mean_time.mean - 0.01) / 0.01

    _, ys = sample_marginal(fam, (0.0, eps / 2.0), 0.02, 1e-6, 10000,
                            SEED + 7, return_y=True)
    ks_y = scipy.stats.kstest(ys / eps, "uniform").statistic

    field = fd_strip_exit_time(fam, 0.1, 257, 33)
    exact = 0.01 - field.x_nodes**2
    fd_err = float(np.max(np.abs(field.values - exact[:, None])))

    ok = rel_time <= 0.05 and ks_y < 0.02 and field.validity_ok \
        and fd_err <= 1e-3
    _report(5, "flat-tube exactness", ok,
            f"mc={mean_time.mean:.6f} rel={rel_time:.4f} ks_y={ks_y:.4f} "
            f"fd_err={fd_err:.2e}")
    assert ok


def test_criterion_6_marginal_weak_convergence():
    # the mixed family needs a wide window: paths started at 0.5 must not
    # feel the domain edge over T=0.05, and the chain atom at 0 smears over
    # the needle width in 2d, so both sides share the (-2, 2) domain
    table = limiting_scale_speed(MIXED, np.linspace(-2.0, 2.0, 81))
    model = build_ctmc(table, make_ctmc_grid(table, 4001,
                                             bounds=(-2.0, 2.0)))
    limit_xs = ctmc_marginal_batch(model, 0.5, 0.05, 5000, SEED + 2)

    ks_rows = []
    for eps in (0.04, 0.02, 0.01):
        fam = build_example_family(MIXED, eps, domain_halfwidth=2.0)
        # common seed across rows: the eps-dependence is then isolated from
        # the Monte Carlo draw, keeping the sweep comparison sharp
        xs = sample_marginal(fam, (0.5, eps), 0.05, 1e-6, 5000, SEED + 3)
        ks_rows.append(ks_statistic(xs, limit_xs))

    ok = ks_rows[-1] <= 0.05 and all(
        k2 <= k1 + 0.01 for k1, k2 in zip(ks_rows, ks_rows[1:]))
    _report(6, "marginal weak convergence", ok,
            "ks=" + "/".join(f"{k:.4f}" for k in ks_rows))
    assert ok


def test_criterion_7_resolvent_identity():
    table = limiting_scale_speed(MIXED, LIMIT_GRID)
    params = gluing_parameters(table)
    model = build_ctmc(table, make_ctmc_grid(table, 1001))
    fs = [build_domain_test_function(params, SEED + 1000 * k,
                                     limit_spec=MIXED) for k in range(3)]

    sigmas = []
    for k, f in enumerate(fs):
        res = resolvent_check("ctmc", f, 5.0, 0.0, 0.0, 400, SEED + 10 + k,
                              model=model)
        sigmas.append(abs(res.mean) / res.std_error)
    self_ok = all(s <= 3.0 for s in sigmas)

    # negative control: breaking the junction slope condition must light up.
    # dt=1e-5 would inflate even valid-f residuals (step bias), so the
    # detection runs at dt=1e-6 where the signal is the gluing defect alone
    fam = build_example_family(MIXED, 0.01)
    bad = fs[0].perturbed(0.5)
    res = resolvent_check("hat", bad, 10.0, 0.0, 1e-6, 2000, SEED + 30,
                          family=fam)
    sigma_bad = abs(res.mean) / res.std_error
    neg_ok = sigma_bad > 5.0

    ok = self_ok and neg_ok
    _report(7, "resolvent identity", ok,
            "self_sigma=" + "/".join(f"{s:.2f}" for s in sigmas)
            + f" violating_sigma={sigma_bad:.2f}")
    assert ok


def test_criterion_8_structural_invariants():
    table = limiting_scale_speed(MIXED, LIMIT_GRID)
    model = build_ctmc(table, make_ctmc_grid(table, 1001))

    row_sum = float(np.max(np.abs(model.rate_up + model.rate_down
                                  - model.hold_rate)))
    flux_r = model.dv[1:-2] * model.rate_up[1:-2]
    flux_l = model.dv[2:-1] * model.rate_down[2:-1]
    balance = float(np.max(np.abs(flux_r - flux_l) / flux_r))
    scaled = build_ctmc(table.rescaled(3.0), model.grid)
    gauge = float(np.max(np.abs(scaled.hold_rate[1:-1]
                                / model.hold_rate[1:-1] - 1.0)))
    prob_sum_exact = bool(np.all(model.up_prob[1:-1]
                                 + model.down_prob[1:-1] == 1.0))
    params = gluing_parameters(table)
    p_sum_exact = params.p_plus + params.p_minus == 1.0

    fam = build_example_family(MIXED, 0.02)
    m1 = sample_marginal(fam, (0.0, 0.01), 2e-4, 1e-6, 400, SEED + 8,
                         workers=1)
    m4 = sample_marginal(fam, (0.0, 0.01), 2e-4, 1e-6, 400, SEED + 8,
                         workers=4)
    c1 = ctmc_marginal_batch(model, 0.0, 0.01, 400, SEED + 9, workers=1)
    c3 = ctmc_marginal_batch(model, 0.0, 0.01, 400, SEED + 9, workers=3)
    deterministic = np.array_equal(m1, m4) and np.array_equal(c1, c3)

    ok = row_sum <= 1e-12 and balance <= 1e-12 and gauge <= 1e-12 \
        and prob_sum_exact and p_sum_exact and deterministic
    _report(8, "structural invariants", ok,
            f"row_sum={row_sum:.1e} balance={balance:.1e} gauge={gauge:.1e} "
            f"prob_sums_exact={prob_sum_exact and p_sum_exact} "
            f"worker_identical={deterministic}")
    assert ok


CHECK_TEMPLATE = """
[family]
v1 = const:1.0
beta = 1.0
mu = 0.3
delta_exponent = {r}

[run]
eps_list = 0.04, 0.02, 0.01
"""


def test_criterion_9_assumption_checker(tmp_path):
    results = {}
    for r in (0.3, 0.5):
        cfg = tmp_path / f"r{r}.ini"
        cfg.write_text(CHECK_TEMPLATE.format(r=r))
        out = tmp_path / f"out{r}"
        code = main(["check-assumptions", "--config", str(cfg),
                     "--out", str(out)])
        rows = json.loads(
            (out / "check_assumptions_summary.json").read_text())["rows"]
        results[r] = (code, [row["xi_eps"] for row in rows])

    code_ok, xi_ok = results[0.3]
    code_bad, xi_bad = results[0.5]
    decreasing = xi_ok[0] > xi_ok[1] > xi_ok[2]
    increasing = xi_bad[0] < xi_bad[1] < xi_bad[2]
    ok = code_ok == 0 and decreasing and code_bad == 2 and increasing
    _report(9, "assumption checker", ok,
            f"r=0.3 exit={code_ok} xi={[f'{x:.3f}' for x in xi_ok]} "
            f"r=0.5 exit={code_bad} xi={[f'{x:.3f}' for x in xi_bad]}")
    assert ok
