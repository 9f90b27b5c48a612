"""Convex program over the causal trajectory gain, and its solution.

The decision variable is the gain K = [K_1 | K_X] acting on the augmented
history [1; x_0; ...; x_N]: K_1 is dense, K_X is lower block triangular so
that input k only sees states 0..k.  Structural zeros are eliminated up
front: the program's decision vector holds only the causal entries, which
makes causality exact rather than a constraint the solver must satisfy.

The program pieces are

  * objective: the closed-loop expected cost, a convex quadratic in K,
    handled through an epigraph with a square-root factor of its PSD
    coefficient matrix;
  * terminal mean: linear equalities;
  * terminal covariance: one PSD block
    [[SigmaN, T(K)], [T(K)', I]] >= 0 with T(K) = EN (I + boldB K) S_half,
    the Schur-complement form of EN Sigma_X EN' <= SigmaN;
  * chance rows: one second-order-cone row each,
    lin.z + offset + quantile * ||F z + g|| <= 0.

Solving is delegated to a pluggable conic backend (see
:mod:`covsteer.backends`).  Assembly is pure; concurrent solves on
distinct programs are safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .chance import DeterministicRow, row_residual
from .lifting import LiftedSystem

__all__ = [
    "GainPattern",
    "SocRow",
    "TerminalCovBlock",
    "ConicProgram",
    "SolveReport",
    "InfeasibleError",
    "NumericalFailure",
    "second_moment_matrix",
    "objective_value",
    "terminal_mean_rows",
    "terminal_cov_block",
    "assemble",
    "solve",
    "dump_program",
]


class InfeasibleError(RuntimeError):
    """The conic program admits no feasible gain."""

    def __init__(self, report: "SolveReport"):
        self.report = report
        super().__init__(f"conic program infeasible ({report.message or report.backend})")


class NumericalFailure(RuntimeError):
    """The backend failed to converge to a usable status."""

    def __init__(self, report: "SolveReport"):
        self.report = report
        super().__init__(f"conic backend failed ({report.message or report.backend})")


@dataclass(frozen=True)
class GainPattern:
    """Index map between the causal entries of K and a flat decision vector.

    ``rows[l], cols[l]`` give the matrix position of decision entry l.  The
    pattern contains the dense ones-block K_1 and, for each input block k,
    the state blocks 0..k of K_X; everything above the block diagonal stays
    an exact structural zero.
    """

    horizon: int
    n_x: int
    n_u: int
    rows: np.ndarray
    cols: np.ndarray

    @classmethod
    def build(cls, horizon: int, n_x: int, n_u: int) -> "GainPattern":
        rows, cols = [], []
        for k in range(horizon):
            for i in range(k * n_u, (k + 1) * n_u):
                for j in range(n_x):  # ones block K_1
                    rows.append(i)
                    cols.append(j)
                for jb in range(k + 1):  # state blocks 0..k of K_X
                    base = n_x + jb * n_x
                    for j in range(base, base + n_x):
                        rows.append(i)
                        cols.append(j)
        return cls(
            horizon=horizon,
            n_x=n_x,
            n_u=n_u,
            rows=np.asarray(rows, dtype=np.intp),
            cols=np.asarray(cols, dtype=np.intp),
        )

    @classmethod
    def for_lifted(cls, lifted: LiftedSystem) -> "GainPattern":
        return cls.build(lifted.N, lifted.n_x, lifted.n_u)

    @property
    def n_dec(self) -> int:
        return self.rows.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.horizon * self.n_u, (self.horizon + 2) * self.n_x)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def to_matrix(self, z: np.ndarray) -> np.ndarray:
        K = np.zeros(self.shape)
        K[self.rows, self.cols] = z
        return K

    def to_vector(self, K: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
        """Extract the causal entries; reject K with off-pattern content."""
        K = np.asarray(K, dtype=float)
        if K.shape != self.shape:
            raise ValueError(f"gain shape {K.shape}, expected {self.shape}")
        z = K[self.rows, self.cols]
        off = K.copy()
        off[self.rows, self.cols] = 0.0
        scale = max(1.0, float(np.abs(K).max()))
        if np.abs(off).max() > rtol * scale:
            raise ValueError("gain has entries outside the causal pattern")
        return z

    def scatter(self) -> sp.csc_matrix:
        """Sparse map from the decision vector to row-major vec(K)."""
        n_rows, n_cols = self.shape
        flat = self.rows * n_cols + self.cols
        return sp.csc_matrix(
            (np.ones(self.n_dec), (flat, np.arange(self.n_dec))),
            shape=(n_rows * n_cols, self.n_dec),
        )


@dataclass(frozen=True)
class SocRow:
    """One chance row in decision coordinates.

    Residual at z: ``lin . z + offset + quantile * ||norm_mat z +
    norm_offset||``; the backend encodes it as the cone
    ``||norm_mat z + norm_offset|| <= -(lin . z + offset)/quantile``.
    """

    lin: np.ndarray
    offset: float
    quantile: float
    norm_mat: np.ndarray
    norm_offset: np.ndarray
    label: str = ""


@dataclass(frozen=True)
class TerminalCovBlock:
    """Terminal-covariance PSD block [[sigma, T(K)], [T(K)', I]].

    T(K) = t_offset + left @ K @ right is affine in the gain; the block is
    PSD exactly when EN Sigma_X EN' <= sigma.
    """

    sigma: np.ndarray    # (n_x, n_x) terminal covariance bound
    left: np.ndarray     # (n_x, N n_u) = boldEN @ boldB
    t_offset: np.ndarray # (n_x, m)    = boldEN @ S_half
    right: np.ndarray    # (m, m)      = S_half

    @property
    def size(self) -> int:
        return self.sigma.shape[0] + self.right.shape[0]

    def top_right(self, K: np.ndarray) -> np.ndarray:
        return self.t_offset + self.left @ K @ self.right

    def evaluate(self, K: np.ndarray) -> np.ndarray:
        T = self.top_right(K)
        m = self.right.shape[0]
        return np.block([[self.sigma, T], [T.T, np.eye(m)]])


@dataclass
class ConicProgram:
    """Assembled solver-agnostic program data.

    Objective in decision coordinates:
    ``||obj_factor z||^2 + obj_lin . z + obj_const`` (minimized through an
    epigraph by the backend).  ``rows`` keeps the original deterministic
    rows for reporting; the SOC data may be rescaled to unit row normals.
    """

    pattern: GainPattern
    lifted: LiftedSystem
    mean_target: np.ndarray
    cov_target: np.ndarray
    obj_factor: np.ndarray
    obj_lin: np.ndarray
    obj_const: float
    eq_lhs: np.ndarray
    eq_rhs: np.ndarray
    soc: tuple[SocRow, ...]
    lmi: TerminalCovBlock
    rows: tuple[DeterministicRow, ...] = ()

    @property
    def n_dec(self) -> int:
        return self.pattern.n_dec


@dataclass(frozen=True)
class SolveReport:
    """Solution quality summary for one conic solve."""

    status: str                       # optimal | infeasible | numerical-failure
    objective: float
    chance_residuals: np.ndarray      # per original row, feasible iff <= 0
    max_chance_residual: float
    terminal_mean_residual: float
    terminal_cov_slack: float         # min eig of SigmaN - EN Sigma_X EN'
    iterations: int | None
    solve_time: float | None
    backend: str
    message: str = ""


def second_moment_matrix(lifted: LiftedSystem) -> np.ndarray:
    """boldA (mu0_aug mu0_aug' + Sigma0_aug) boldA' + boldD boldD'.

    Second moment of the uncontrolled augmented stacked state; the constant
    matrix the quadratic objective traces against.
    """
    mu = lifted.mu0_aug
    core = np.outer(mu, mu) + lifted.Sigma0_aug
    M = lifted.boldA @ core @ lifted.boldA.T + lifted.boldD @ lifted.boldD.T
    return (M + M.T) / 2.0


def objective_value(K: np.ndarray, lifted: LiftedSystem) -> float:
    """Closed-loop expected cost at a gain.

    tr(((I + boldB K)' boldQ (I + boldB K) + K' Rbar K) M) with M the
    uncontrolled second moment; equals the sample mean of the realized
    quadratic cost under the policy.
    """
    K = np.asarray(K, dtype=float)
    M = second_moment_matrix(lifted)
    IBK = np.eye(lifted.m) + lifted.boldB @ K
    W = IBK.T @ lifted.boldQ @ IBK + K.T @ lifted.Rbar @ K
    return float(np.sum(W * M))


def terminal_mean_rows(
    lifted: LiftedSystem, muN: np.ndarray, pattern: GainPattern
) -> tuple[np.ndarray, np.ndarray]:
    """Linear equalities pinning the closed-loop terminal mean.

    EN (I + boldB K) boldA mu0_aug = muN, affine in K; returns (A_eq, b_eq)
    with one row per state dimension, in decision coordinates.
    """
    muN = np.asarray(muN, dtype=float).reshape(-1)
    Amu = lifted.boldA @ lifted.mu0_aug
    ENB = lifted.boldEN @ lifted.boldB
    A_eq = ENB[:, pattern.rows] * Amu[pattern.cols]
    b_eq = muN - lifted.boldEN @ Amu
    return A_eq, b_eq


def terminal_cov_block(lifted: LiftedSystem, SigmaN: np.ndarray) -> TerminalCovBlock:
    """PSD-block data for the relaxed terminal covariance bound."""
    SigmaN = np.asarray(SigmaN, dtype=float)
    return TerminalCovBlock(
        sigma=(SigmaN + SigmaN.T) / 2.0,
        left=lifted.boldEN @ lifted.boldB,
        t_offset=lifted.boldEN @ lifted.S_half,
        right=lifted.S_half,
    )


def _objective_data(
    lifted: LiftedSystem, pattern: GainPattern
) -> tuple[np.ndarray, np.ndarray, float]:
    """Quadratic objective restricted to the causal entries.

    With H = boldB' boldQ boldB + Rbar and M the uncontrolled second
    moment, J = z' P z + q . z + r where P[(i,j),(i',j')] = H[i,i'] M[j,j'].
    Returns a square-root factor of P (rows with negligible weight
    dropped), the linear term, and the constant.
    """
    M = second_moment_matrix(lifted)
    H = lifted.boldB.T @ lifted.boldQ @ lifted.boldB + lifted.Rbar
    H = (H + H.T) / 2.0
    r_, c_ = pattern.rows, pattern.cols
    P = M[np.ix_(c_, c_)] * H[np.ix_(r_, r_)]
    w, V = np.linalg.eigh((P + P.T) / 2.0)
    scale = float(w.max()) if w.size else 0.0
    if w.size and w.min() < -1e-9 * (1.0 + scale):
        raise ValueError(
            f"objective coefficient matrix not PSD on the causal subspace "
            f"(min eig {w.min():.3e})"
        )
    keep = w > scale * 1e-14
    factor = np.sqrt(w[keep])[:, None] * V[:, keep].T
    q = 2.0 * (lifted.boldB.T @ lifted.boldQ @ M)[r_, c_]
    r = float(np.sum(lifted.boldQ * M))
    return factor, q, r


def assemble(
    lifted: LiftedSystem,
    mean_target: np.ndarray,
    cov_target: np.ndarray,
    rows: Sequence[DeterministicRow] = (),
    pattern: GainPattern | None = None,
    normalize_rows: bool = True,
) -> ConicProgram:
    """Build the full conic program for given targets and chance rows.

    With ``normalize_rows`` each SOC row is rescaled so its stacked normal
    has unit length (beta rescaled accordingly, risk untouched); the
    feasible set is unchanged and the backend sees better-conditioned rows.
    """
    if pattern is None:
        pattern = GainPattern.for_lifted(lifted)
    mean_target = np.asarray(mean_target, dtype=float).reshape(-1)
    cov_target = np.asarray(cov_target, dtype=float)

    obj_factor, obj_lin, obj_const = _objective_data(lifted, pattern)
    eq_lhs, eq_rhs = terminal_mean_rows(lifted, mean_target, pattern)
    lmi = terminal_cov_block(lifted, cov_target)

    Amu = lifted.boldA @ lifted.mu0_aug
    S_half = lifted.S_half
    soc = []
    for row in rows:
        alpha, beta = row.alpha, row.beta
        if normalize_rows:
            nrm = float(np.linalg.norm(alpha))
            alpha = alpha / nrm
            beta = beta / nrm
        Ba = lifted.boldB.T @ alpha
        soc.append(
            SocRow(
                lin=Ba[pattern.rows] * Amu[pattern.cols],
                offset=float(alpha @ Amu - beta),
                quantile=row.quantile,
                norm_mat=S_half[:, pattern.cols] * Ba[pattern.rows],
                norm_offset=S_half @ alpha,
                label=row.label,
            )
        )

    return ConicProgram(
        pattern=pattern,
        lifted=lifted,
        mean_target=mean_target,
        cov_target=cov_target,
        obj_factor=obj_factor,
        obj_lin=obj_lin,
        obj_const=obj_const,
        eq_lhs=eq_lhs,
        eq_rhs=eq_rhs,
        soc=tuple(soc),
        lmi=lmi,
        rows=tuple(rows),
    )


def _report(program: ConicProgram, K: np.ndarray | None, status: str,
            iterations, solve_time, backend: str, message: str = "") -> SolveReport:
    lifted = program.lifted
    if K is None:
        return SolveReport(
            status=status,
            objective=float("nan"),
            chance_residuals=np.full(len(program.rows), np.nan),
            max_chance_residual=float("nan"),
            terminal_mean_residual=float("nan"),
            terminal_cov_slack=float("nan"),
            iterations=iterations,
            solve_time=solve_time,
            backend=backend,
            message=message,
        )
    residuals = np.array(
        [row_residual(row, K, lifted) for row in program.rows], dtype=float
    )
    IBK = np.eye(lifted.m) + lifted.boldB @ K
    mean_res = float(
        np.linalg.norm(
            lifted.boldEN @ (IBK @ (lifted.boldA @ lifted.mu0_aug))
            - program.mean_target
        )
    )
    S = lifted.S_half @ lifted.S_half
    term_cov = lifted.boldEN @ IBK @ S @ IBK.T @ lifted.boldEN.T
    slack = float(np.linalg.eigvalsh(program.cov_target - term_cov).min())
    return SolveReport(
        status=status,
        objective=objective_value(K, lifted),
        chance_residuals=residuals,
        max_chance_residual=float(residuals.max()) if residuals.size else float("-inf"),
        terminal_mean_residual=mean_res,
        terminal_cov_slack=slack,
        iterations=iterations,
        solve_time=solve_time,
        backend=backend,
        message=message,
    )


def solve(program: ConicProgram, backend=None) -> tuple[np.ndarray, SolveReport]:
    """Solve an assembled program through a conic backend.

    Returns the gain (structural zeros exactly reinstated) and a report
    whose residuals are recomputed from the returned gain, not taken from
    the solver.  Raises :class:`InfeasibleError` or
    :class:`NumericalFailure` on non-optimal termination.
    """
    if backend is None:
        from .backends import default_backend

        backend = default_backend()
    result = backend.solve(program)
    if result.status == "infeasible":
        raise InfeasibleError(
            _report(program, None, "infeasible", result.iterations,
                    result.solve_time, result.name, result.message)
        )
    if result.status != "optimal" or result.z is None:
        raise NumericalFailure(
            _report(program, None, "numerical-failure", result.iterations,
                    result.solve_time, result.name, result.message)
        )
    K = program.pattern.to_matrix(result.z)
    report = _report(program, K, "optimal", result.iterations,
                     result.solve_time, result.name, result.message)
    return K, report


def _write_triplets(fh, name: str, mat: np.ndarray) -> None:
    mat = np.atleast_2d(mat)
    nz = np.nonzero(mat)
    fh.write(f"{name} shape {mat.shape[0]} {mat.shape[1]} nnz {len(nz[0])}\n")
    for i, j in zip(*nz):
        fh.write(f"{i} {j} {mat[i, j]!r}\n")


def dump_program(program: ConicProgram, path) -> None:
    """Write the assembled program to a plain-text debug file.

    Format (one file, line-oriented, 0-based indices, full-precision
    floats):

    * header: ``covsteer-conic-dump v1`` then ``ndec``/``meta`` lines;
    * one section per matrix: a ``<name> shape R C nnz K`` line followed
      by K triplet lines ``i j value``;
    * objective sections ``obj-factor``, ``obj-lin`` (+ ``obj-const``),
      equalities ``eq-lhs``/``eq-rhs``;
    * per chance row: ``soc <index> quantile <z> offset <c> label <text>``
      then its ``soc-lin``/``soc-mat``/``soc-vec`` sections;
    * terminal block: ``lmi size <n>`` with ``lmi-sigma``, ``lmi-left``,
      ``lmi-toffset``, ``lmi-right`` sections.

    Intended for cross-checking against external modeling tools.
    """
    p = program
    with open(path, "w") as fh:
        fh.write("covsteer-conic-dump v1\n")
        fh.write(f"ndec {p.n_dec}\n")
        fh.write(
            f"meta horizon {p.pattern.horizon} nx {p.pattern.n_x} "
            f"nu {p.pattern.n_u} m {p.lifted.m}\n"
        )
        fh.write(f"obj-const {p.obj_const!r}\n")
        _write_triplets(fh, "obj-lin", p.obj_lin)
        _write_triplets(fh, "obj-factor", p.obj_factor)
        _write_triplets(fh, "eq-lhs", p.eq_lhs)
        _write_triplets(fh, "eq-rhs", p.eq_rhs)
        fh.write(f"soc-count {len(p.soc)}\n")
        for idx, row in enumerate(p.soc):
            fh.write(
                f"soc {idx} quantile {row.quantile!r} offset {row.offset!r} "
                f"label {row.label}\n"
            )
            _write_triplets(fh, "soc-lin", row.lin)
            _write_triplets(fh, "soc-mat", row.norm_mat)
            _write_triplets(fh, "soc-vec", row.norm_offset)
        fh.write(f"lmi size {p.lmi.size}\n")
        _write_triplets(fh, "lmi-sigma", p.lmi.sigma)
        _write_triplets(fh, "lmi-left", p.lmi.left)
        _write_triplets(fh, "lmi-toffset", p.lmi.t_offset)
        _write_triplets(fh, "lmi-right", p.lmi.right)
