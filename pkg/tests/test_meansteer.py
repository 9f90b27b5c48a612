import numpy as np
import pytest

import covsteer as cs

from conftest import make_di_spec, make_random_ltv_spec


def kkt_oracle(lifted, mu0, muN):
    """Dense KKT factorization of the equality-constrained QP (oracle)."""
    calR = lifted.calB.T @ lifted.Qbar @ lifted.calB + lifted.Rbar
    c = lifted.calB.T @ lifted.Qbar @ (lifted.calA @ mu0)
    BbarN = lifted.BbarN
    n_u_tot = calR.shape[0]
    n_x = BbarN.shape[0]
    KKT = np.block([
        [2.0 * calR, -BbarN.T],
        [BbarN, np.zeros((n_x, n_x))],
    ])
    rhs = np.concatenate([-2.0 * c, muN - lifted.Abar[lifted.N] @ mu0])
    sol = np.linalg.solve(KKT, rhs)
    return sol[:n_u_tot]


def test_drift_already_on_target_needs_no_effort():
    spec = make_di_spec()
    lifted = cs.build_lifted(spec)
    muN = lifted.Abar[10] @ spec.mu0
    plan = cs.solve_mean(lifted, spec.mu0, muN)
    assert np.abs(plan.Ubar).max() < 1e-9
    assert plan.cost == pytest.approx(0.0, abs=1e-12)


def test_minimum_effort_equals_pseudoinverse_controller(di_spec, di_lifted):
    # Q = 0, R = I: the solution is the minimum-norm input reaching the target.
    plan = cs.solve_mean(di_lifted, di_spec.mu0, di_spec.muN)
    BbarN = di_lifted.BbarN
    rhs = di_spec.muN - di_lifted.Abar[10] @ di_spec.mu0
    u_minnorm = BbarN.T @ np.linalg.solve(BbarN @ BbarN.T, rhs)
    assert np.abs(plan.Ubar - u_minnorm).max() < 1e-9


def test_scalar_n2_matches_kkt_oracle():
    spec = cs.ProblemSpec.constant(
        A=[[1.0]], B=[[1.0]], D=[[0.1]], Q=[[1.0]], R=[[1.0]], horizon=2,
        mu0=[1.0], Sigma0=[[0.5]], muN=[0.0], SigmaN=[[1.0]],
    )
    lifted = cs.build_lifted(spec)
    plan = cs.solve_mean(lifted, spec.mu0, spec.muN)
    u_oracle = kkt_oracle(lifted, spec.mu0, spec.muN)
    assert np.abs(plan.Ubar - u_oracle).max() < 1e-9


def test_random_ltv_matches_kkt_oracle():
    for seed in range(4):
        spec = make_random_ltv_spec(seed=seed, horizon=5, n_x=3, n_u=2)
        lifted = cs.build_lifted(spec)
        plan = cs.solve_mean(lifted, spec.mu0, spec.muN)
        u_oracle = kkt_oracle(lifted, spec.mu0, spec.muN)
        scale = 1.0 + np.abs(u_oracle).max()
        assert np.abs(plan.Ubar - u_oracle).max() < 1e-9 * scale


def test_stationarity_and_feasibility():
    spec = make_random_ltv_spec(seed=9, horizon=6, n_x=2, n_u=2)
    lifted = cs.build_lifted(spec)
    plan = cs.solve_mean(lifted, spec.mu0, spec.muN)
    scale = 1.0 + float(np.abs(plan.Ubar).max())
    assert plan.kkt_residual <= 1e-8 * scale
    assert np.allclose(lifted.E0 @ plan.Xbar, spec.mu0)
    err = np.abs(lifted.EN @ plan.Xbar - spec.muN).max()
    assert err <= 1e-8 * (1.0 + np.abs(spec.muN).max())


def test_feasible_perturbations_never_improve():
    spec = make_random_ltv_spec(seed=2, horizon=5, n_x=2, n_u=2)
    lifted = cs.build_lifted(spec)
    plan = cs.solve_mean(lifted, spec.mu0, spec.muN)
    BbarN = lifted.BbarN
    # projector onto the nullspace of the terminal map
    P = np.eye(BbarN.shape[1]) - BbarN.T @ np.linalg.solve(BbarN @ BbarN.T, BbarN)
    rng = np.random.default_rng(4)
    for _ in range(20):
        delta = P @ rng.normal(size=BbarN.shape[1])
        J = cs.mean_cost(lifted, plan.Ubar + delta, spec.mu0)
        assert J >= plan.cost - 1e-9


def test_mean_cost_trivial_cases(di_lifted):
    assert cs.mean_cost(di_lifted, np.zeros(10), np.zeros(2)) == 0.0
    # Q = 0 on this system, so the cost is exactly the input energy
    rng = np.random.default_rng(0)
    U = rng.normal(size=10)
    assert cs.mean_cost(di_lifted, U, [0.0, 8.0]) == pytest.approx(U @ U)


def test_mean_cost_defaults_to_lifted_mu0(di_spec, di_lifted):
    U = np.linspace(-1, 1, 10)
    assert cs.mean_cost(di_lifted, U) == cs.mean_cost(di_lifted, U, di_spec.mu0)


def test_mean_cost_monte_carlo_separation():
    # E[full cost] under an open-loop input splits into the mean share plus
    # tr(Qbar Sigma_X) of the uncontrolled covariance; check by simulation.
    spec = make_random_ltv_spec(seed=12, horizon=4, n_x=2, n_u=1, n_w=2)
    lifted = cs.build_lifted(spec)
    rng = np.random.default_rng(5)
    Ubar = rng.normal(size=4 * spec.n_u)

    n = 100_000
    sq0 = cs.psd_sqrt(spec.Sigma0)
    x = spec.mu0 + rng.normal(size=(n, spec.n_x)) @ sq0
    costs = np.zeros(n)
    for k in range(spec.horizon):
        A, B, D = spec.systems[k]
        Q, R = spec.weights[k]
        u = Ubar[k * spec.n_u:(k + 1) * spec.n_u]
        costs += np.einsum("ij,jk,ik->i", x, Q, x) + u @ R @ u
        w = rng.normal(size=(n, spec.n_w))
        x = x @ A.T + u @ B.T + w @ D.T

    Sx = lifted.calA @ spec.Sigma0 @ lifted.calA.T + lifted.calD @ lifted.calD.T
    cov_share = float(np.sum(lifted.Qbar * Sx))
    se = costs.std(ddof=1) / np.sqrt(n)
    assert abs(costs.mean() - cov_share - cs.mean_cost(lifted, Ubar, spec.mu0)) < 3 * se


def test_uncontrollable_system_raises_singular_terminal_map():
    spec = cs.ProblemSpec.constant(
        A=np.zeros((2, 2)), B=np.zeros((2, 1)), D=np.eye(2),
        Q=np.zeros((2, 2)), R=[[1.0]], horizon=3,
        mu0=[0, 0], Sigma0=np.eye(2), muN=[1, 0], SigmaN=np.eye(2),
    )
    lifted = cs.build_lifted(spec)
    with pytest.raises(cs.SingularTerminalMap):
        cs.solve_mean(lifted, spec.mu0, spec.muN)


def test_open_loop_gain_reproduces_plan_and_uncontrolled_cov(di_spec, di_lifted):
    plan = cs.solve_mean(di_lifted, di_spec.mu0, di_spec.muN)
    K = cs.open_loop_gain(di_lifted, plan.Ubar)
    mean, cov = cs.closed_moments(K, di_lifted)
    assert np.allclose(mean[:2], 1.0)
    assert np.abs(mean[2:] - plan.Xbar).max() < 1e-9
    S = di_lifted.boldA @ di_lifted.Sigma0_aug @ di_lifted.boldA.T \
        + di_lifted.boldD @ di_lifted.boldD.T
    assert np.abs(cov - S).max() < 1e-9
