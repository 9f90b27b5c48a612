"""Closed-form optimal mean steering (no chance constraints).

Steering only the mean is an equality-constrained quadratic program over
the open-loop mean input Ubar:

    minimize   Xbar' Qbar Xbar + Ubar' Rbar Ubar
    subject to Xbar = calA mu0 + calB Ubar,   EN Xbar = muN.

Its KKT system has the closed-form solution implemented here, using two
Cholesky solves (with calR = calB' Qbar calB + Rbar, and with the terminal
map BbarN calR^{-1} BbarN') and never an explicit inverse.  This is the
baseline controller that ignores covariance growth; under chance
constraints it is typically infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .lifting import LiftedSystem

__all__ = ["MeanPlan", "SingularTerminalMap", "solve_mean", "mean_cost", "open_loop_gain"]


class SingularTerminalMap(RuntimeError):
    """BbarN calR^{-1} BbarN' is numerically singular.

    This contradicts controllability of the system; the smallest singular
    value is reported in the message.
    """


@dataclass(frozen=True)
class MeanPlan:
    """Optimal open-loop mean input with its induced mean trajectory.

    ``cost`` is the mean share of the objective, Xbar' Qbar Xbar +
    Ubar' Rbar Ubar.  ``multiplier`` is the terminal-equality multiplier,
    and ``kkt_residual`` the norm of the stationarity residual
    2 calR Ubar + 2 calB' Qbar calA mu0 - BbarN' multiplier.
    """

    Ubar: np.ndarray
    Xbar: np.ndarray
    cost: float
    multiplier: np.ndarray
    kkt_residual: float


def solve_mean(lifted: LiftedSystem, mu0: np.ndarray, muN: np.ndarray) -> MeanPlan:
    """Solve the mean-steering program in closed form."""
    mu0 = np.asarray(mu0, dtype=float).reshape(-1)
    muN = np.asarray(muN, dtype=float).reshape(-1)
    calA, calB = lifted.calA, lifted.calB
    Qbar, Rbar = lifted.Qbar, lifted.Rbar
    BbarN = lifted.BbarN
    AbarN = lifted.Abar[lifted.N]

    calR = calB.T @ Qbar @ calB + Rbar
    calR = (calR + calR.T) / 2.0
    calR_fac = cho_factor(calR)
    c = calB.T @ Qbar @ (calA @ mu0)

    Rinv_c = cho_solve(calR_fac, c)
    Rinv_BT = cho_solve(calR_fac, BbarN.T)
    G = BbarN @ Rinv_BT
    G = (G + G.T) / 2.0
    try:
        G_fac = cho_factor(G)
    except LinAlgError as exc:
        smin = float(np.linalg.svd(G, compute_uv=False)[-1])
        raise SingularTerminalMap(
            f"terminal map is singular (sigma_min={smin:.3e}); "
            "the system does not appear controllable"
        ) from exc

    lam = 2.0 * cho_solve(G_fac, muN - AbarN @ mu0 + BbarN @ Rinv_c)
    Ubar = -Rinv_c + 0.5 * (Rinv_BT @ lam)
    Xbar = calA @ mu0 + calB @ Ubar
    cost = float(Xbar @ Qbar @ Xbar + Ubar @ Rbar @ Ubar)
    kkt = 2.0 * calR @ Ubar + 2.0 * c - BbarN.T @ lam
    return MeanPlan(
        Ubar=Ubar,
        Xbar=Xbar,
        cost=cost,
        multiplier=lam,
        kkt_residual=float(np.linalg.norm(kkt)),
    )


def mean_cost(lifted: LiftedSystem, Ubar: np.ndarray, mu0: np.ndarray | None = None) -> float:
    """Mean share of the objective for an arbitrary open-loop input.

    ``mu0`` defaults to the initial mean baked into the lifted system.
    """
    Ubar = np.asarray(Ubar, dtype=float).reshape(-1)
    if mu0 is None:
        mu0 = lifted.mu0_aug[lifted.n_x:]
    Xbar = lifted.calA @ np.asarray(mu0, dtype=float) + lifted.calB @ Ubar
    return float(Xbar @ lifted.Qbar @ Xbar + Ubar @ lifted.Rbar @ Ubar)


def open_loop_gain(lifted: LiftedSystem, Ubar: np.ndarray) -> np.ndarray:
    """Embed an open-loop input into the trajectory-gain parameterization.

    The gain acts on the augmented history [1_{n_x}; x_0; ...; x_N]; routing
    Ubar through the constant ones block (each input row spreads its value
    uniformly over the n_x ones) leaves all state feedback zero, so the
    closed-loop covariance equals the uncontrolled one.
    """
    Ubar = np.asarray(Ubar, dtype=float).reshape(-1)
    K = np.zeros((lifted.N * lifted.n_u, lifted.m))
    K[:, :lifted.n_x] = np.outer(Ubar, np.ones(lifted.n_x) / lifted.n_x)
    return K
