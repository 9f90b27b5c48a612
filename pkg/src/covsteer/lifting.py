"""Stacked trajectory-level form of the per-step dynamics and cost.

The whole state history X = [x_0; ...; x_N] of the linear recursion is an
affine function of (x_0, U, W):

    X = calA x_0 + calB U + calD W

with calB, calD strictly lower block triangular.  On top of this sits an
augmented form that prepends a constant ones block to the state history,
bold_X = [1_{n_x}; X], so affine state feedback over the whole history can
be written as a single linear gain.  This module builds all of those block
matrices, the stacked cost weights, and the lifted constraint rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ProblemSpec, resolve_risks

__all__ = [
    "NotPSDError",
    "SqrtFailure",
    "psd_sqrt",
    "TransitionProducts",
    "transition_products",
    "LiftedSystem",
    "build_lifted",
    "LiftedRow",
    "lift_halfspaces",
]


class NotPSDError(ValueError):
    """Matrix handed to psd_sqrt has a significantly negative eigenvalue."""


class SqrtFailure(RuntimeError):
    """Eigen-decomposition inside psd_sqrt failed to converge."""


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigen-decomposition.

    Returns S = S' >= 0 with S @ S = M up to roundoff.  Eigenvalues within
    -1e-9 * (1 + scale) of zero are clamped to zero, so singular inputs
    (e.g. a semidefinite initial covariance) are fine; Cholesky would not
    be.  Raises :class:`NotPSDError` for genuinely indefinite input.
    """
    M = np.asarray(M, dtype=float)
    sym = (M + M.T) / 2.0
    try:
        w, V = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise SqrtFailure(f"eigen-decomposition failed: {exc}") from exc
    scale = float(np.abs(w).max()) if w.size else 0.0
    if w.size and w.min() < -1e-9 * (1.0 + scale):
        raise NotPSDError(
            f"matrix has negative eigenvalue {w.min():.3e} "
            f"(scale {scale:.3e})"
        )
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class TransitionProducts:
    """Per-step transition maps: x_k = Abar[k] x_0 + Bbar[k] U_{k-1} + Dbar[k] W_{k-1}."""

    Abar: tuple[np.ndarray, ...]  # (n_x, n_x), Abar[0] = I
    Bbar: tuple[np.ndarray, ...]  # (n_x, k*n_u); Bbar[0] is empty
    Dbar: tuple[np.ndarray, ...]  # (n_x, k*n_w)


def transition_products(spec: ProblemSpec) -> TransitionProducts:
    """Accumulate the state/input/noise transition products step by step."""
    n_x, n_u, n_w = spec.n_x, spec.n_u, spec.n_w
    Abar = [np.eye(n_x)]
    Bbar = [np.zeros((n_x, 0))]
    Dbar = [np.zeros((n_x, 0))]
    for k, (A, B, D) in enumerate(spec.systems):
        Abar.append(A @ Abar[k])
        Bbar.append(np.hstack([A @ Bbar[k], B]))
        Dbar.append(np.hstack([A @ Dbar[k], D]))
    return TransitionProducts(tuple(Abar), tuple(Bbar), tuple(Dbar))


@dataclass(frozen=True)
class LiftedSystem:
    """All stacked and augmented block matrices for one problem spec.

    Shapes (m = (N+2) n_x is the augmented stacked dimension):

    ==========  =========================  =====================================
    field       shape                      meaning
    ==========  =========================  =====================================
    calA        ((N+1) n_x, n_x)           stacked free response, X from x_0
    calB        ((N+1) n_x, N n_u)         stacked input map, strictly lower
    calD        ((N+1) n_x, N n_w)         stacked noise map, strictly lower
    Qbar        ((N+1) n_x)^2              blkdiag(Q_0..Q_{N-1}, 0)
    Rbar        (N n_u)^2                  blkdiag(R_0..R_{N-1})
    E0, EN      (n_x, (N+1) n_x)           selectors of x_0 / x_N within X
    boldA       (m, 2 n_x)                 blkdiag(I, calA) on [1; x_0]
    boldB       (m, N n_u)                 [0; calB]
    boldD       (m, N n_w)                 [0; calD]
    boldQ       (m, m)                     blkdiag(0, Qbar)
    boldEN      (n_x, m)                   selector of x_N within [1; X]
    mu0_aug     (2 n_x,)                   [1; mu0]
    Sigma0_aug  (2 n_x)^2                  blkdiag(0, Sigma0)
    S_half      (m, m)                     psd_sqrt(boldA Sigma0_aug boldA'
                                           + boldD boldD')
    ==========  =========================  =====================================

    Construction is pure; instances are immutable and shareable.
    """

    N: int
    n_x: int
    n_u: int
    n_w: int
    Abar: tuple[np.ndarray, ...]
    Bbar: tuple[np.ndarray, ...]
    Dbar: tuple[np.ndarray, ...]
    calA: np.ndarray
    calB: np.ndarray
    calD: np.ndarray
    Qbar: np.ndarray
    Rbar: np.ndarray
    E0: np.ndarray
    EN: np.ndarray
    boldA: np.ndarray
    boldB: np.ndarray
    boldD: np.ndarray
    boldQ: np.ndarray
    boldEN: np.ndarray
    mu0_aug: np.ndarray
    Sigma0_aug: np.ndarray
    S_half: np.ndarray

    @property
    def m(self) -> int:
        """Augmented stacked dimension (N+2) n_x."""
        return (self.N + 2) * self.n_x

    @property
    def BbarN(self) -> np.ndarray:
        """Final row block of calB; full row rank for controllable systems."""
        return self.Bbar[self.N]

    def state_slice(self, k: int) -> slice:
        """Columns/rows of x_k inside the augmented stacked vector [1; X]."""
        if not 0 <= k <= self.N:
            raise IndexError(f"step {k} outside 0..{self.N}")
        return slice(self.n_x + k * self.n_x, self.n_x + (k + 1) * self.n_x)


def build_lifted(spec: ProblemSpec) -> LiftedSystem:
    """Assemble every stacked/augmented matrix from a validated spec."""
    N, n_x, n_u, n_w = spec.horizon, spec.n_x, spec.n_u, spec.n_w
    tp = transition_products(spec)

    calA = np.vstack(tp.Abar)
    calB = np.zeros(((N + 1) * n_x, N * n_u))
    calD = np.zeros(((N + 1) * n_x, N * n_w))
    for k in range(1, N + 1):
        calB[k * n_x:(k + 1) * n_x, :k * n_u] = tp.Bbar[k]
        calD[k * n_x:(k + 1) * n_x, :k * n_w] = tp.Dbar[k]

    Qbar = np.zeros(((N + 1) * n_x, (N + 1) * n_x))
    Rbar = np.zeros((N * n_u, N * n_u))
    for k, (Q, R) in enumerate(spec.weights):
        Qbar[k * n_x:(k + 1) * n_x, k * n_x:(k + 1) * n_x] = (Q + Q.T) / 2.0
        Rbar[k * n_u:(k + 1) * n_u, k * n_u:(k + 1) * n_u] = (R + R.T) / 2.0

    E0 = np.zeros((n_x, (N + 1) * n_x))
    E0[:, :n_x] = np.eye(n_x)
    EN = np.zeros((n_x, (N + 1) * n_x))
    EN[:, -n_x:] = np.eye(n_x)

    m = (N + 2) * n_x
    boldA = np.zeros((m, 2 * n_x))
    boldA[:n_x, :n_x] = np.eye(n_x)
    boldA[n_x:, n_x:] = calA
    boldB = np.vstack([np.zeros((n_x, N * n_u)), calB])
    boldD = np.vstack([np.zeros((n_x, N * n_w)), calD])
    boldQ = np.zeros((m, m))
    boldQ[n_x:, n_x:] = Qbar
    boldEN = np.hstack([np.zeros((n_x, n_x)), EN])

    mu0_aug = np.concatenate([np.ones(n_x), spec.mu0])
    Sigma0_aug = np.zeros((2 * n_x, 2 * n_x))
    Sigma0_aug[n_x:, n_x:] = (spec.Sigma0 + spec.Sigma0.T) / 2.0

    S_half = psd_sqrt(boldA @ Sigma0_aug @ boldA.T + boldD @ boldD.T)

    return LiftedSystem(
        N=N,
        n_x=n_x,
        n_u=n_u,
        n_w=n_w,
        Abar=tp.Abar,
        Bbar=tp.Bbar,
        Dbar=tp.Dbar,
        calA=calA,
        calB=calB,
        calD=calD,
        Qbar=Qbar,
        Rbar=Rbar,
        E0=E0,
        EN=EN,
        boldA=boldA,
        boldB=boldB,
        boldD=boldD,
        boldQ=boldQ,
        boldEN=boldEN,
        mu0_aug=mu0_aug,
        Sigma0_aug=Sigma0_aug,
        S_half=S_half,
    )


@dataclass(frozen=True)
class LiftedRow:
    """One stacked halfspace row alpha . bold_X <= beta with risk share p_fail.

    ``alpha`` lives in the augmented stacked space [1; x_0; ...; x_N]; the
    leading ones block always carries zeros (constants go through beta).
    """

    alpha: np.ndarray
    beta: float
    p_fail: float
    label: str


def lift_halfspaces(spec: ProblemSpec, lifted: LiftedSystem) -> tuple[LiftedRow, ...]:
    """Expand per-step halfspaces into stacked rows, one per (constraint, step).

    Stacked trajectory-level halfspaces from ``spec.stacked_set`` follow, in
    order.  Risk shares come from :func:`covsteer.problem.resolve_risks`.
    """
    m = lifted.m
    n_x = lifted.n_x
    risks = resolve_risks(spec) if (spec.chance_set or spec.stacked_set) else []
    rows: list[LiftedRow] = []
    idx = 0
    for j, c in enumerate(spec.chance_set):
        for k in c.steps:
            alpha = np.zeros(m)
            alpha[lifted.state_slice(k)] = c.a
            rows.append(
                LiftedRow(
                    alpha=alpha,
                    beta=c.b,
                    p_fail=risks[idx],
                    label=f"halfspace[{j}]@k={k}",
                )
            )
            idx += 1
    for j, s in enumerate(spec.stacked_set):
        alpha = np.zeros(m)
        alpha[n_x:] = s.alpha
        rows.append(
            LiftedRow(
                alpha=alpha,
                beta=s.b,
                p_fail=risks[idx],
                label=f"stacked[{j}]",
            )
        )
        idx += 1
    return tuple(rows)
