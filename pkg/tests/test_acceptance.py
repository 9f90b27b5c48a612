"""Acceptance suite: one test per criterion, each printing a PASS line.

Run as ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the
per-criterion value lines).  The vehicle scenario involves one large conic
solve and takes a few minutes on its own; everything else is fast.
"""

import math
import time

import numpy as np
import pytest

import covsteer as cs
from covsteer.scenario import bundled_scenario, parse_scenario, run

from conftest import random_causal_gain
from test_meansteer import kkt_oracle


@pytest.fixture(scope="module")
def di_scenario():
    return parse_scenario(bundled_scenario("di"))


@pytest.fixture(scope="module")
def vehicle_scenario():
    return parse_scenario(bundled_scenario("vehicle"))


@pytest.fixture(scope="module")
def vehicle_chance_bundle(vehicle_scenario):
    spec, options = vehicle_scenario
    return run(spec, "chance", options, simulate=False)


def _report(criterion, detail):
    print(f"PASS criterion {criterion}: {detail}")


def test_criterion_1_mean_only_cost(di_scenario):
    spec, options = di_scenario
    t0 = time.perf_counter()
    bundle = run(spec, "mean-only", options)
    elapsed = time.perf_counter() - t0
    assert bundle.cost == pytest.approx(23.90, abs=0.15)
    assert elapsed < 1.0, f"mean-only run took {elapsed:.2f}s"
    _report(1, f"mean-only cost {bundle.cost:.4f} (23.90 +/- 0.15), {elapsed:.2f}s")


def test_criterion_2_covariance_steering(di_scenario):
    spec, options = di_scenario
    t0 = time.perf_counter()
    bundle = run(spec, "cov", options, simulate=False)
    elapsed = time.perf_counter() - t0
    r = bundle.solve_report
    assert r.status == "optimal"
    assert r.objective == pytest.approx(24.05, abs=0.15)
    assert r.terminal_cov_slack >= -1e-6
    assert elapsed < 30.0, f"cov solve took {elapsed:.2f}s"
    _report(2, f"cov cost {r.objective:.4f} (24.05 +/- 0.15), "
               f"terminal slack {r.terminal_cov_slack:.2e}, {elapsed:.2f}s")


def test_criterion_3_chance_constrained(di_scenario, di_chance_solution,
                                        di_cov_solution):
    spec, options = di_scenario
    _, report = di_chance_solution
    assert report.status == "optimal"
    assert report.objective == pytest.approx(24.16, abs=0.15)
    assert report.chance_residuals.size == 11
    assert report.max_chance_residual <= 1e-6
    assert np.abs(report.chance_residuals).min() <= 1e-3
    mean_cost_val = cs.solve_mean(
        cs.build_lifted(spec), spec.mu0, spec.muN
    ).cost
    j_cov = di_cov_solution[1].objective
    assert mean_cost_val < j_cov < report.objective
    _report(3, f"chance cost {report.objective:.4f} (24.16 +/- 0.15), "
               f"max row residual {report.max_chance_residual:.2e}, "
               f"ordering {mean_cost_val:.2f} < {j_cov:.2f} < {report.objective:.2f}")


def test_criterion_4_monte_carlo_validation(di_scenario, di_chance_solution,
                                            di_lifted):
    spec, _ = di_scenario
    K, _ = di_chance_solution
    policy = cs.recover_L(K, di_lifted)
    n = 100_000
    sim = cs.monte_carlo(policy, spec, n, seed=0, lifted=di_lifted)
    row_bound = 0.001 + 3 * math.sqrt(0.001 * 0.999 / n)
    union_bound = 0.011 + 3 * math.sqrt(0.011 * 0.989 / n)
    assert np.all(sim.row_freqs <= row_bound)
    assert sim.union_freq <= union_bound
    _report(4, f"n=1e5: max row violation {sim.row_freqs.max():.5f} "
               f"<= {row_bound:.5f}, union {sim.union_freq:.5f} <= {union_bound:.5f}")


def test_criterion_5_vehicle_scenario(vehicle_scenario, vehicle_chance_bundle):
    spec, options = vehicle_scenario
    r = vehicle_chance_bundle.solve_report
    assert r.status == "optimal"
    assert r.chance_residuals.size == 42
    assert r.max_chance_residual <= 1e-6
    assert r.terminal_cov_slack >= -1e-6  # terminal cov within 0.5 Sigma0
    mean_bundle = run(spec, "mean-only", options, simulate=False)
    assert mean_bundle.chance_check is not None
    assert not mean_bundle.chance_check.feasible
    _report(5, f"vehicle chance optimal, max row residual "
               f"{r.max_chance_residual:.2e}, terminal slack "
               f"{r.terminal_cov_slack:.2e}; mean-only chance check infeasible "
               f"(worst {mean_bundle.chance_check.worst_residual:.3f})")


def test_criterion_6_separation(di_scenario, di_lifted):
    spec, _ = di_scenario
    plan = cs.solve_mean(di_lifted, spec.mu0, spec.muN)

    # independent oracle for the unconstrained covariance share: least
    # squares on the quadratic in the causal entries, noise moments only
    pattern = cs.GainPattern.for_lifted(di_lifted)
    S = di_lifted.S_half @ di_lifted.S_half
    H = di_lifted.boldB.T @ di_lifted.boldQ @ di_lifted.boldB + di_lifted.Rbar
    P = S[np.ix_(pattern.cols, pattern.cols)] * H[np.ix_(pattern.rows, pattern.rows)]
    q = 2.0 * (di_lifted.boldB.T @ di_lifted.boldQ @ S)[pattern.rows, pattern.cols]
    r0 = float(np.sum(di_lifted.boldQ * S))
    z_star = -0.5 * np.linalg.lstsq(P, q, rcond=None)[0]
    j_sigma = float(z_star @ P @ z_star + q @ z_star + r0)

    program = cs.assemble(di_lifted, spec.muN, 1e3 * np.eye(2))
    K, report = cs.solve(program)
    expected = plan.cost + j_sigma
    assert abs(report.objective - expected) <= 1e-4 * max(1.0, abs(expected))
    mean, _ = cs.closed_moments(K, di_lifted)
    assert np.abs(mean[2:] - plan.Xbar).max() <= 1e-5
    _report(6, f"joint J {report.objective:.8f} vs mean {plan.cost:.8f} + "
               f"cov {j_sigma:.2e}; mean trajectory matches to "
               f"{np.abs(mean[2:] - plan.Xbar).max():.2e}")


def test_criterion_7_oracle_equivalence():
    # (a) closed-form mean steering vs dense KKT factorization
    spec = cs.ProblemSpec.constant(
        A=[[1.0]], B=[[1.0]], D=[[0.1]], Q=[[1.0]], R=[[1.0]], horizon=2,
        mu0=[1.0], Sigma0=[[0.5]], muN=[0.0], SigmaN=[[1.0]],
    )
    lifted = cs.build_lifted(spec)
    plan = cs.solve_mean(lifted, spec.mu0, spec.muN)
    err_mean = np.abs(plan.Ubar - kkt_oracle(lifted, spec.mu0, spec.muN)).max()
    assert err_mean <= 1e-9

    # (b) trace objective vs 1e6 simulated rollouts of U = K(boldA X0 + boldD W)
    rng = np.random.default_rng(17)
    pattern = cs.GainPattern.for_lifted(lifted)
    K = random_causal_gain(pattern, rng)
    n = 1_000_000
    x0 = spec.mu0[0] + math.sqrt(0.5) * rng.normal(size=n)
    W = rng.normal(size=(n, 2))
    driver = np.column_stack([np.ones(n), x0]) @ lifted.boldA.T + W @ lifted.boldD.T
    U = driver @ K.T
    costs = np.zeros(n)
    x = x0
    for k in range(2):
        costs += x * x + U[:, k] * U[:, k]
        x = x + U[:, k] + 0.1 * W[:, k]
    se = costs.std(ddof=1) / math.sqrt(n)
    err_obj = abs(costs.mean() - cs.objective_value(K, lifted))
    assert err_obj < 3 * se

    # (c) PSD block form vs squared-spectral-norm form on 10 random gains
    block = cs.terminal_cov_block(lifted, spec.SigmaN)
    SigN_inv_half = np.linalg.inv(cs.psd_sqrt(spec.SigmaN))
    agree = 0
    for _ in range(10):
        Kr = random_causal_gain(pattern, rng, scale=rng.uniform(0.1, 2.0))
        IBK = np.eye(lifted.m) + lifted.boldB @ Kr
        margin_norm = 1.0 - np.linalg.norm(
            lifted.S_half @ IBK.T @ lifted.boldEN.T @ SigN_inv_half, 2) ** 2
        margin_block = float(np.linalg.eigvalsh(block.evaluate(Kr)).min())
        assert (margin_block >= -1e-9) == (margin_norm >= -1e-9)
        agree += 1
    assert agree == 10
    _report(7, f"mean-steer vs KKT {err_mean:.1e}; objective vs 1e6-rollout "
               f"MC {err_obj:.2e} (< 3se = {3 * se:.2e}); LMI/norm forms agree 10/10")


def test_criterion_8_numeric_kernel_suite(di_lifted):
    t0 = time.perf_counter()

    # quantile round trip on a log grid
    grid = np.concatenate([
        np.logspace(-6, np.log10(0.5), 40),
        1.0 - np.logspace(-6, np.log10(0.5), 40),
    ])
    rt = max(abs(cs.norm_cdf(cs.inv_norm_cdf(p)) - p) for p in grid)
    assert rt <= 1e-12

    # psd_sqrt reconstruction
    rng = np.random.default_rng(23)
    worst_sqrt = 0.0
    for _ in range(20):
        G = rng.normal(size=(6, 6))
        M = G @ G.T
        S = cs.psd_sqrt(M)
        worst_sqrt = max(
            worst_sqrt, np.abs(S @ S - M).max() / (1 + np.abs(M).max())
        )
    assert worst_sqrt <= 1e-10

    # gain <-> feedback round trip
    pattern = cs.GainPattern.for_lifted(di_lifted)
    worst_rt = 0.0
    for _ in range(20):
        K = random_causal_gain(pattern, rng)
        L = cs.recover_L(K, di_lifted).L
        K_back = cs.feedback_to_gain(L, di_lifted)
        worst_rt = max(worst_rt, np.abs(K - K_back).max() / (1 + np.abs(K).max()))
    assert worst_rt <= 1e-9

    # stacked vs step-wise dynamics over 100 random draws
    from conftest import make_random_ltv_spec
    from test_lifting import stepwise_states
    spec = make_random_ltv_spec(seed=31, horizon=5, n_x=3, n_u=2, n_w=2)
    lifted = cs.build_lifted(spec)
    worst_dyn = 0.0
    for _ in range(100):
        x0 = rng.normal(size=spec.n_x)
        U = rng.normal(size=5 * spec.n_u)
        W = rng.normal(size=5 * spec.n_w)
        stacked = lifted.boldA @ np.concatenate([np.ones(3), x0]) \
            + lifted.boldB @ U + lifted.boldD @ W
        direct = np.concatenate([np.ones(3), stepwise_states(spec, x0, U, W)])
        worst_dyn = max(worst_dyn, np.abs(stacked - direct).max())
    assert worst_dyn <= 1e-10

    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    _report(8, f"quantile round trip {rt:.1e}; psd_sqrt {worst_sqrt:.1e}; "
               f"K<->L {worst_rt:.1e}; dynamics {worst_dyn:.1e}; "
               f"suite {elapsed:.1f}s < 300s")
