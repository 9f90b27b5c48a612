import numpy as np
import pytest

import covsteer as cs


def make_di_spec() -> cs.ProblemSpec:
    """Double integrator: minimum-effort steering with one halfspace."""
    return cs.ProblemSpec.constant(
        A=[[1.0, 1.0], [0.0, 1.0]],
        B=[[0.0], [1.0]],
        D=0.01 * np.eye(2),
        Q=np.zeros((2, 2)),
        R=[[1.0]],
        horizon=10,
        mu0=[0.0, 8.0],
        Sigma0=np.diag([1.0, 0.5]),
        muN=[6.0, 0.0],
        SigmaN=0.5 * np.eye(2),
        chance_set=[
            cs.HalfspaceConstraint(a=[1.0, 1.0], b=20.0, steps=range(11), p_fail=0.001)
        ],
        total_risk=0.011,
        name="double-integrator",
    )


def make_random_ltv_spec(seed=0, horizon=4, n_x=2, n_u=1, n_w=2,
                         with_state_cost=True) -> cs.ProblemSpec:
    """Well-conditioned random time-varying system for property tests."""
    rng = np.random.default_rng(seed)
    systems = []
    weights = []
    for _ in range(horizon):
        A = 0.8 * rng.normal(size=(n_x, n_x)) / np.sqrt(n_x)
        A += np.eye(n_x)
        B = rng.normal(size=(n_x, n_u))
        D = 0.1 * rng.normal(size=(n_x, n_w))
        G = rng.normal(size=(n_x, n_x))
        Q = G @ G.T / n_x if with_state_cost else np.zeros((n_x, n_x))
        R = np.eye(n_u) * rng.uniform(0.5, 2.0)
        systems.append((A, B, D))
        weights.append((Q, R))
    Sig0 = rng.normal(size=(n_x, n_x))
    Sig0 = Sig0 @ Sig0.T / n_x
    return cs.ProblemSpec(
        horizon=horizon,
        systems=tuple(systems),
        weights=tuple(weights),
        mu0=rng.normal(size=n_x),
        Sigma0=Sig0,
        muN=rng.normal(size=n_x),
        SigmaN=np.eye(n_x),
        name=f"random-ltv-{seed}",
    )


def random_causal_gain(pattern: cs.GainPattern, rng, scale=0.5) -> np.ndarray:
    return pattern.to_matrix(scale * rng.normal(size=pattern.n_dec))


@pytest.fixture(scope="session")
def di_spec():
    return make_di_spec()


@pytest.fixture(scope="session")
def di_lifted(di_spec):
    return cs.build_lifted(di_spec)


@pytest.fixture(scope="session")
def di_rows(di_spec, di_lifted):
    return cs.make_rows(cs.lift_halfspaces(di_spec, di_lifted), di_lifted)


@pytest.fixture(scope="session")
def di_cov_solution(di_spec, di_lifted):
    program = cs.assemble(di_lifted, di_spec.muN, di_spec.SigmaN)
    return cs.solve(program)


@pytest.fixture(scope="session")
def di_chance_solution(di_spec, di_lifted, di_rows):
    program = cs.assemble(di_lifted, di_spec.muN, di_spec.SigmaN, rows=di_rows)
    return cs.solve(program)
