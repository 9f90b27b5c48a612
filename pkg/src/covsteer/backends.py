"""Pluggable conic solver backends.

A backend consumes an assembled :class:`covsteer.conic.ConicProgram` and
returns a :class:`BackendResult` with the decision vector and a normalized
status.  The default backend models the program with cvxpy and hands it to
an installed conic engine (CLARABEL unless overridden); any object with a
compatible ``solve`` method can be passed to :func:`covsteer.conic.solve`
instead.

The environment variable ``COVSTEER_BACKEND`` selects the default solver
(e.g. ``CLARABEL``, ``SCS``, ``CVXOPT``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Protocol

import numpy as np

__all__ = ["BackendResult", "ConicBackend", "CvxpyBackend", "default_backend"]

ENV_BACKEND = "COVSTEER_BACKEND"


@dataclass(frozen=True)
class BackendResult:
    z: np.ndarray | None
    status: str                # optimal | infeasible | numerical-failure
    objective: float | None
    iterations: int | None
    solve_time: float | None
    name: str
    message: str = ""


class ConicBackend(Protocol):
    def solve(self, program) -> BackendResult: ...


_STATUS_MAP = {
    "optimal": "optimal",
    "optimal_inaccurate": "numerical-failure",
    "infeasible": "infeasible",
    "infeasible_inaccurate": "infeasible",
    "unbounded": "numerical-failure",
    "unbounded_inaccurate": "numerical-failure",
}


class CvxpyBackend:
    """cvxpy-based backend over any installed conic solver.

    ``tol`` maps onto the chosen solver's feasibility/gap tolerances;
    extra keyword options are passed through verbatim.  For CLARABEL the
    chordal decomposition of the PSD block is disabled: the decomposed
    form is numerically fragile on these programs.
    """

    def __init__(
        self,
        solver: str = "CLARABEL",
        tol: float | None = None,
        max_iters: int | None = None,
        verbose: bool = False,
        **options,
    ):
        self.solver = solver.upper()
        self.tol = tol
        self.max_iters = max_iters
        self.verbose = verbose
        self.options = options

    @property
    def name(self) -> str:
        return f"cvxpy/{self.solver}"

    def _solver_options(self) -> dict:
        opts = dict(self.options)
        if self.solver == "CLARABEL":
            opts.setdefault("chordal_decomposition_enable", False)
            if self.tol is not None:
                opts.setdefault("tol_gap_abs", self.tol)
                opts.setdefault("tol_gap_rel", self.tol)
                opts.setdefault("tol_feas", self.tol)
            if self.max_iters is not None:
                opts.setdefault("max_iter", self.max_iters)
        elif self.solver == "SCS":
            if self.tol is not None:
                opts.setdefault("eps", self.tol)
            if self.max_iters is not None:
                opts.setdefault("max_iters", self.max_iters)
        else:
            if self.max_iters is not None:
                opts.setdefault("max_iters", self.max_iters)
        return opts

    def solve(self, program) -> BackendResult:
        import cvxpy as cp

        pat = program.pattern
        z = cp.Variable(pat.n_dec)
        objective = (
            cp.sum_squares(program.obj_factor @ z)
            + program.obj_lin @ z
            + program.obj_const
        )
        constraints = []
        if program.eq_lhs.size:
            constraints.append(program.eq_lhs @ z == program.eq_rhs)
        for row in program.soc:
            constraints.append(
                cp.SOC(
                    -(row.lin @ z + row.offset) / row.quantile,
                    row.norm_mat @ z + row.norm_offset,
                )
            )
        lmi = program.lmi
        n_rows, n_cols = pat.shape
        K_expr = cp.reshape(pat.scatter() @ z, (n_rows, n_cols), order="C")
        T = lmi.t_offset + lmi.left @ K_expr @ lmi.right
        m = lmi.right.shape[0]
        constraints.append(cp.bmat([[lmi.sigma, T], [T.T, np.eye(m)]]) >> 0)

        problem = cp.Problem(cp.Minimize(objective), constraints)
        try:
            problem.solve(
                solver=self.solver, verbose=self.verbose, **self._solver_options()
            )
        except cp.error.SolverError as exc:
            return BackendResult(
                z=None,
                status="numerical-failure",
                objective=None,
                iterations=None,
                solve_time=None,
                name=self.name,
                message=str(exc),
            )

        status = _STATUS_MAP.get(problem.status, "numerical-failure")
        stats = problem.solver_stats
        return BackendResult(
            z=None if z.value is None else np.asarray(z.value, dtype=float),
            status=status if z.value is not None or status == "infeasible"
            else "numerical-failure",
            objective=None if problem.value is None else float(problem.value),
            iterations=getattr(stats, "num_iters", None) if stats else None,
            solve_time=getattr(stats, "solve_time", None) if stats else None,
            name=self.name,
            message="" if problem.status == "optimal" else str(problem.status),
        )


def default_backend(**overrides) -> CvxpyBackend:
    """Backend from the environment (``COVSTEER_BACKEND``), CLARABEL default."""
    solver = os.environ.get(ENV_BACKEND, "CLARABEL")
    return CvxpyBackend(solver=solver, **overrides)
