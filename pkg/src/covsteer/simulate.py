"""Closed-loop policies, exact moments, and Monte-Carlo validation.

The conic program optimizes the gain K acting on the disturbance-driven
part of the trajectory; the implementable controller is the history
feedback L with U = L [1; x_0; ...; x_N].  The two are related by

    L = K (I + boldB K)^{-1},        K = L (I - boldB L)^{-1},

both well-defined because boldB K and boldB L are strictly lower block
triangular.  Rollouts apply the per-step slices of L causally, so a
simulated trajectory never touches future states by construction.

Randomness: draws come from numpy's PCG64 via SeedSequence.  Sample i of a
Monte-Carlo run uses SeedSequence((seed, i)) and consumes, in order, n_x
standard normals for the initial state followed by N*n_w for the noise, so
any single sample can be regenerated with ``rollout(policy, spec, (seed,
i))``.  Rollouts are embarrassingly parallel over samples; aggregation is
order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lifting import LiftedSystem, build_lifted, lift_halfspaces, psd_sqrt
from .problem import ProblemSpec

__all__ = [
    "FeedbackPolicy",
    "Trajectory",
    "SimReport",
    "recover_L",
    "feedback_to_gain",
    "closed_moments",
    "step_moments",
    "rollout",
    "monte_carlo",
]

RNG_NAME = "numpy PCG64 / SeedSequence((seed, sample))"


@dataclass(frozen=True)
class FeedbackPolicy:
    """Causal history-feedback controller.

    ``step_gains[k]`` is the (n_u, n_x*(k+2)) slice of L computing
    u_k = l_k . [1; x_0; ...; x_k].
    """

    K: np.ndarray
    L: np.ndarray
    step_gains: tuple[np.ndarray, ...]
    n_x: int
    n_u: int
    horizon: int


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray   # (N+1, n_x)
    inputs: np.ndarray   # (N, n_u)
    cost: float


@dataclass(frozen=True)
class SimReport:
    """Aggregate statistics over seeded Monte-Carlo rollouts."""

    n: int
    seed: int
    rng: str
    mean_traj: np.ndarray        # (N+1, n_x)
    cov_traj: np.ndarray         # (N+1, n_x, n_x)
    cost_mean: float
    cost_stderr: float
    row_labels: tuple[str, ...]
    row_risks: np.ndarray
    row_freqs: np.ndarray        # empirical Pr(alpha . X > beta) per row
    union_freq: float            # empirical Pr(any row violated)
    terminal_states: np.ndarray | None = None


def _step_gain_slices(L: np.ndarray, lifted: LiftedSystem) -> tuple[np.ndarray, ...]:
    n_x, n_u = lifted.n_x, lifted.n_u
    gains = []
    for k in range(lifted.N):
        gains.append(L[k * n_u:(k + 1) * n_u, : n_x * (k + 2)].copy())
    return tuple(gains)


def _causal_mask(lifted: LiftedSystem) -> np.ndarray:
    n_x, n_u = lifted.n_x, lifted.n_u
    mask = np.zeros((lifted.N * n_u, lifted.m), dtype=bool)
    for k in range(lifted.N):
        mask[k * n_u:(k + 1) * n_u, : n_x * (k + 2)] = True
    return mask


def recover_L(K: np.ndarray, lifted: LiftedSystem) -> FeedbackPolicy:
    """Causal feedback law from a solved gain: L = K (I + boldB K)^{-1}.

    One linear solve against the unit lower-triangular (I + boldB K);
    entries outside the causal pattern are pure roundoff and are zeroed.
    """
    K = np.asarray(K, dtype=float)
    IBK = np.eye(lifted.m) + lifted.boldB @ K
    L = np.linalg.solve(IBK.T, K.T).T
    L[~_causal_mask(lifted)] = 0.0
    return FeedbackPolicy(
        K=K,
        L=L,
        step_gains=_step_gain_slices(L, lifted),
        n_x=lifted.n_x,
        n_u=lifted.n_u,
        horizon=lifted.N,
    )


def feedback_to_gain(L: np.ndarray, lifted: LiftedSystem) -> np.ndarray:
    """Inverse map K = L (I - boldB L)^{-1}; round-trips with recover_L."""
    L = np.asarray(L, dtype=float)
    IBL = np.eye(lifted.m) - lifted.boldB @ L
    return np.linalg.solve(IBL.T, L.T).T


def closed_moments(K: np.ndarray, lifted: LiftedSystem) -> tuple[np.ndarray, np.ndarray]:
    """Exact first and second central moments of the augmented stacked state.

    mean = (I + boldB K) boldA mu0_aug and cov = (I + boldB K) S
    (I + boldB K)' with S = S_half^2; the leading ones block has zero
    covariance.
    """
    IBK = np.eye(lifted.m) + lifted.boldB @ np.asarray(K, dtype=float)
    mean = IBK @ (lifted.boldA @ lifted.mu0_aug)
    S = lifted.S_half @ lifted.S_half
    cov = IBK @ S @ IBK.T
    return mean, (cov + cov.T) / 2.0


def step_moments(
    mean: np.ndarray, cov: np.ndarray, lifted: LiftedSystem
) -> tuple[np.ndarray, np.ndarray]:
    """Split stacked moments into per-step (mu_k, Sigma_k), k = 0..N."""
    n_x = lifted.n_x
    means = np.empty((lifted.N + 1, n_x))
    covs = np.empty((lifted.N + 1, n_x, n_x))
    for k in range(lifted.N + 1):
        sl = lifted.state_slice(k)
        means[k] = mean[sl]
        covs[k] = cov[sl, sl]
    return means, covs


def _draws(spec: ProblemSpec, seed) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return rng.standard_normal(spec.n_x + spec.horizon * spec.n_w)


def _simulate_batch(
    policy: FeedbackPolicy, spec: ProblemSpec, draws: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Step-wise closed-loop simulation for a batch of draw vectors.

    Returns (history, states, inputs, costs); ``history`` is the augmented
    stacked state [1; x_0; ...; x_N] per sample.
    """
    n = draws.shape[0]
    N, n_x, n_u, n_w = spec.horizon, spec.n_x, spec.n_u, spec.n_w
    sq0 = psd_sqrt(spec.Sigma0)
    x0 = spec.mu0 + draws[:, :n_x] @ sq0
    noise = draws[:, n_x:]

    hist = np.empty((n, (N + 2) * n_x))
    hist[:, :n_x] = 1.0
    hist[:, n_x:2 * n_x] = x0
    states = np.empty((n, N + 1, n_x))
    states[:, 0] = x0
    inputs = np.empty((n, N, n_u))
    costs = np.zeros(n)
    x = x0
    for k in range(N):
        lk = policy.step_gains[k]
        u = hist[:, : n_x * (k + 2)] @ lk.T
        inputs[:, k] = u
        A, B, D = spec.systems[k]
        Q, R = spec.weights[k]
        costs += np.einsum("ij,jk,ik->i", x, Q, x)
        costs += np.einsum("ij,jk,ik->i", u, R, u)
        w = noise[:, k * n_w:(k + 1) * n_w]
        x = x @ A.T + u @ B.T + w @ D.T
        states[:, k + 1] = x
        hist[:, n_x * (k + 2): n_x * (k + 3)] = x
    return hist, states, inputs, costs


def rollout(policy: FeedbackPolicy, spec: ProblemSpec, rng_seed) -> Trajectory:
    """One closed-loop trajectory; deterministic for a given seed.

    ``rng_seed`` may be an int or a tuple (any SeedSequence entropy);
    sample i of :func:`monte_carlo` is reproduced with ``(seed, i)``.
    """
    draws = _draws(spec, rng_seed)[None, :]
    _, states, inputs, costs = _simulate_batch(policy, spec, draws)
    return Trajectory(states=states[0], inputs=inputs[0], cost=float(costs[0]))


def monte_carlo(
    policy: FeedbackPolicy,
    spec: ProblemSpec,
    n: int,
    seed: int = 0,
    lifted: LiftedSystem | None = None,
    keep_samples: bool = False,
) -> SimReport:
    """Aggregate n seeded rollouts into moment and violation statistics.

    Per-row violation frequency counts samples with alpha . X > beta for
    each lifted constraint row; the union frequency counts samples
    violating any row.
    """
    n = int(n)
    if n < 1:
        raise ValueError("need at least one sample")
    if lifted is None:
        lifted = build_lifted(spec)
    rows = lift_halfspaces(spec, lifted)

    draws = np.empty((n, spec.n_x + spec.horizon * spec.n_w))
    for i in range(n):
        draws[i] = _draws(spec, (seed, i))
    hist, states, _, costs = _simulate_batch(policy, spec, draws)

    mean_traj = states.mean(axis=0)
    devs = states - mean_traj
    cov_traj = np.einsum("nki,nkj->kij", devs, devs) / max(n - 1, 1)

    if rows:
        alphas = np.stack([r.alpha for r in rows])
        betas = np.array([r.beta for r in rows])
        viol = hist @ alphas.T > betas  # (n, n_rows)
        row_freqs = viol.mean(axis=0)
        union_freq = float(viol.any(axis=1).mean())
    else:
        row_freqs = np.zeros(0)
        union_freq = 0.0

    stderr = float(costs.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return SimReport(
        n=n,
        seed=int(seed),
        rng=RNG_NAME,
        mean_traj=mean_traj,
        cov_traj=cov_traj,
        cost_mean=float(costs.mean()),
        cost_stderr=stderr,
        row_labels=tuple(r.label for r in rows),
        row_risks=np.array([r.p_fail for r in rows]),
        row_freqs=row_freqs,
        union_freq=union_freq,
        terminal_states=states[:, -1].copy() if keep_samples else None,
    )
