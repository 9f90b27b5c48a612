"""Problem data for chance-constrained covariance steering.

A steering problem consists of per-step linear dynamics ``x_{k+1} = A_k x_k
+ B_k u_k + D_k w_k`` driven by unit-covariance white Gaussian noise, a
quadratic running cost with weights ``(Q_k, R_k)``, Gaussian boundary
distributions ``N(mu0, Sigma0)`` and ``N(muN, SigmaN)``, and a set of
probabilistic halfspace constraints sharing a total risk budget.

Everything here is plain data plus validation; the stacked trajectory-level
matrices live in :mod:`covsteer.lifting`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

__all__ = [
    "HalfspaceConstraint",
    "StackedHalfspace",
    "ProblemSpec",
    "IssueKind",
    "ValidationIssue",
    "ValidationReport",
    "InvalidProblem",
    "RiskTooLarge",
    "validate",
    "uniform_risk_allocation",
    "resolve_risks",
]

# Eigenvalue tolerances for the PSD / PD checks, relative to matrix scale.
PSD_TOL = 1e-9
PD_TOL = 1e-9
SYM_TOL = 1e-8
# Controllability: smallest/largest singular value ratio of the stacked
# input map's final row block.
CONTROLLABILITY_TOL = 1e-8


class RiskTooLarge(ValueError):
    """A per-row risk share would reach 0.5, making the row vacuous."""


class InvalidProblem(ValueError):
    """Raised when a spec that failed validation is used downstream."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(str(report))


class IssueKind(str, Enum):
    DIMENSION_MISMATCH = "DimensionMismatch"
    NOT_PSD = "NotPSD"
    NOT_PD = "NotPD"
    RISK_BUDGET_EXCEEDED = "RiskBudgetExceeded"
    NOT_CONTROLLABLE = "NotControllable"


@dataclass(frozen=True)
class ValidationIssue:
    kind: IssueKind
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind.value} at {self.where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...]

    def __str__(self) -> str:
        if self.ok:
            return "valid problem spec"
        return "invalid problem spec:\n" + "\n".join(
            f"  - {issue}" for issue in self.issues
        )


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    return arr


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    return arr


@dataclass(frozen=True)
class HalfspaceConstraint:
    """Per-step halfspace ``a . x_k <= b`` enforced probabilistically.

    ``steps`` lists the time indices (in 0..N) at which the constraint is
    enforced; each (constraint, step) pair becomes one row of the stacked
    constraint set with its own risk share.  ``p_fail`` is the per-row risk;
    when ``None`` the row takes a uniform share of the spec's total budget.
    """

    a: np.ndarray
    b: float
    steps: tuple[int, ...]
    p_fail: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", _as_vector(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))


@dataclass(frozen=True)
class StackedHalfspace:
    """Advanced: a single halfspace over the whole stacked state.

    ``alpha`` has length (N+1)*n_x and acts on the stacked trajectory
    [x_0; ...; x_N].  Use :class:`HalfspaceConstraint` for the common
    per-step case.
    """

    alpha: np.ndarray
    b: float
    p_fail: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_vector(self.alpha, "alpha"))
        object.__setattr__(self, "b", float(self.b))


@dataclass(frozen=True)
class ProblemSpec:
    """Complete description of one steering problem.

    Treated as immutable after construction; safe to share across threads.

    Parameters
    ----------
    horizon:
        Number of steps N; states are indexed 0..N.
    systems:
        N triples ``(A_k, B_k, D_k)``.
    weights:
        N pairs ``(Q_k, R_k)`` with ``Q_k >= 0`` and ``R_k > 0``.  There is
        no terminal state cost; the terminal distribution is a constraint.
    mu0, Sigma0, muN, SigmaN:
        Boundary distribution moments.  ``Sigma0`` may be singular,
        ``SigmaN`` must be positive definite.
    chance_set:
        Per-step probabilistic halfspaces.
    stacked_set:
        Optional trajectory-level halfspaces (advanced).
    total_risk:
        Total failure-probability budget shared by all constraint rows.
    """

    horizon: int
    systems: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    weights: tuple[tuple[np.ndarray, np.ndarray], ...]
    mu0: np.ndarray
    Sigma0: np.ndarray
    muN: np.ndarray
    SigmaN: np.ndarray
    chance_set: tuple[HalfspaceConstraint, ...] = ()
    stacked_set: tuple[StackedHalfspace, ...] = ()
    total_risk: float | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "horizon", int(self.horizon))
        systems = tuple(
            (
                _as_matrix(A, f"A[{k}]"),
                _as_matrix(B, f"B[{k}]"),
                _as_matrix(D, f"D[{k}]"),
            )
            for k, (A, B, D) in enumerate(self.systems)
        )
        weights = tuple(
            (_as_matrix(Q, f"Q[{k}]"), _as_matrix(R, f"R[{k}]"))
            for k, (Q, R) in enumerate(self.weights)
        )
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "mu0", _as_vector(self.mu0, "mu0"))
        object.__setattr__(self, "Sigma0", _as_matrix(self.Sigma0, "Sigma0"))
        object.__setattr__(self, "muN", _as_vector(self.muN, "muN"))
        object.__setattr__(self, "SigmaN", _as_matrix(self.SigmaN, "SigmaN"))
        object.__setattr__(self, "chance_set", tuple(self.chance_set))
        object.__setattr__(self, "stacked_set", tuple(self.stacked_set))
        if self.total_risk is not None:
            object.__setattr__(self, "total_risk", float(self.total_risk))

    @property
    def n_x(self) -> int:
        return self.systems[0][0].shape[0]

    @property
    def n_u(self) -> int:
        return self.systems[0][1].shape[1]

    @property
    def n_w(self) -> int:
        return self.systems[0][2].shape[1]

    @classmethod
    def constant(
        cls,
        A,
        B,
        D,
        Q,
        R,
        horizon: int,
        mu0,
        Sigma0,
        muN,
        SigmaN,
        chance_set: Sequence[HalfspaceConstraint] = (),
        stacked_set: Sequence[StackedHalfspace] = (),
        total_risk: float | None = None,
        name: str = "",
    ) -> "ProblemSpec":
        """Build a spec for a time-invariant system with constant weights."""
        horizon = int(horizon)
        return cls(
            horizon=horizon,
            systems=tuple((A, B, D) for _ in range(horizon)),
            weights=tuple((Q, R) for _ in range(horizon)),
            mu0=mu0,
            Sigma0=Sigma0,
            muN=muN,
            SigmaN=SigmaN,
            chance_set=tuple(chance_set),
            stacked_set=tuple(stacked_set),
            total_risk=total_risk,
            name=name,
        )

    def require_valid(self) -> "ProblemSpec":
        """Return self if the spec validates, else raise InvalidProblem."""
        report = validate(self)
        if not report.ok:
            raise InvalidProblem(report)
        return self


def uniform_risk_allocation(total_risk: float, rows: int) -> list[float]:
    """Split a total risk budget uniformly over ``rows`` constraint rows.

    Returns ``rows`` copies of ``total_risk / rows``; the sum equals the
    budget up to one ulp.  Raises :class:`RiskTooLarge` when the share
    would reach 0.5 (the Gaussian quantile of such a row is non-positive
    and the row stops constraining anything).
    """
    rows = int(rows)
    if rows < 1:
        raise ValueError(f"need at least one row, got {rows}")
    if not 0.0 < total_risk < 1.0:
        raise ValueError(f"total risk must lie in (0, 1), got {total_risk}")
    share = total_risk / rows
    if share >= 0.5:
        raise RiskTooLarge(
            f"per-row risk {share} >= 0.5; tighten the budget or add rows"
        )
    return [share] * rows


def _row_count(spec: ProblemSpec) -> int:
    return sum(len(c.steps) for c in spec.chance_set) + len(spec.stacked_set)


def resolve_risks(spec: ProblemSpec) -> list[float]:
    """Per-row risk shares in row order (chance_set rows, then stacked).

    Explicit ``p_fail`` values are kept; rows without one split the
    remaining budget uniformly.  Row order matches
    :func:`covsteer.lifting.lift_halfspaces`.
    """
    explicit: list[float | None] = []
    for c in spec.chance_set:
        explicit.extend([c.p_fail] * len(c.steps))
    explicit.extend(s.p_fail for s in spec.stacked_set)
    n_implicit = sum(1 for p in explicit if p is None)
    if n_implicit == 0:
        return [float(p) for p in explicit]  # type: ignore[arg-type]
    if spec.total_risk is None:
        raise ValueError(
            "total_risk is required when some rows have no explicit p_fail"
        )
    remaining = spec.total_risk - sum(p for p in explicit if p is not None)
    if remaining <= 0.0:
        raise ValueError(
            "explicit per-row risks already exhaust the total budget"
        )
    shares = uniform_risk_allocation(remaining, n_implicit)
    out = []
    it = iter(shares)
    for p in explicit:
        out.append(float(p) if p is not None else next(it))
    return out


def _sym_defect(M: np.ndarray) -> float:
    return float(np.linalg.norm(M - M.T) / (1.0 + np.linalg.norm(M)))


def _min_eig(M: np.ndarray) -> tuple[float, float]:
    """(smallest eigenvalue, matrix scale) of the symmetrized matrix."""
    w = np.linalg.eigvalsh((M + M.T) / 2.0)
    scale = float(np.abs(w).max()) if w.size else 0.0
    return float(w.min()) if w.size else 0.0, scale


def _check_cone(M, name, issues, *, definite: bool):
    if _sym_defect(M) > SYM_TOL:
        kind = IssueKind.NOT_PD if definite else IssueKind.NOT_PSD
        issues.append(ValidationIssue(kind, name, "matrix is not symmetric"))
        return
    lo, scale = _min_eig(M)
    if definite:
        if lo <= PD_TOL * (1.0 + scale):
            issues.append(
                ValidationIssue(
                    IssueKind.NOT_PD,
                    name,
                    f"min eigenvalue {lo:.3e} is not positive",
                )
            )
    elif lo < -PSD_TOL * (1.0 + scale):
        issues.append(
            ValidationIssue(
                IssueKind.NOT_PSD,
                name,
                f"min eigenvalue {lo:.3e} is negative",
            )
        )


def _final_input_row(spec: ProblemSpec) -> np.ndarray:
    """Final row block of the stacked input map: [A_{N-1}..A_1 B_0, ..., B_{N-1}]."""
    N, n_x, n_u = spec.horizon, spec.n_x, spec.n_u
    out = np.zeros((n_x, N * n_u))
    prod = np.eye(n_x)
    for i in range(N - 1, -1, -1):
        out[:, i * n_u:(i + 1) * n_u] = prod @ spec.systems[i][1]
        prod = prod @ spec.systems[i][0]
    return out


def validate(spec: ProblemSpec) -> ValidationReport:
    """Check every standing assumption on the problem data.

    Pure function: the same spec always yields the same report.  A passing
    spec is accepted by every downstream module.
    """
    issues: list[ValidationIssue] = []
    N = spec.horizon
    if N < 1:
        issues.append(
            ValidationIssue(
                IssueKind.DIMENSION_MISMATCH, "horizon", "horizon must be >= 1"
            )
        )
        return ValidationReport(False, tuple(issues))

    n_x, n_u, n_w = spec.n_x, spec.n_u, spec.n_w
    dims_ok = True

    def dim_issue(where, msg):
        nonlocal dims_ok
        dims_ok = False
        issues.append(ValidationIssue(IssueKind.DIMENSION_MISMATCH, where, msg))

    if len(spec.systems) != N:
        dim_issue("systems", f"expected {N} step systems, got {len(spec.systems)}")
    if len(spec.weights) != N:
        dim_issue("weights", f"expected {N} weight pairs, got {len(spec.weights)}")

    for k, (A, B, D) in enumerate(spec.systems):
        if A.shape != (n_x, n_x):
            dim_issue(f"A[{k}]", f"shape {A.shape}, expected {(n_x, n_x)}")
        if B.shape != (n_x, n_u):
            dim_issue(f"B[{k}]", f"shape {B.shape}, expected {(n_x, n_u)}")
        if D.shape != (n_x, n_w):
            dim_issue(f"D[{k}]", f"shape {D.shape}, expected {(n_x, n_w)}")
    for k, (Q, R) in enumerate(spec.weights):
        if Q.shape != (n_x, n_x):
            dim_issue(f"Q[{k}]", f"shape {Q.shape}, expected {(n_x, n_x)}")
        if R.shape != (n_u, n_u):
            dim_issue(f"R[{k}]", f"shape {R.shape}, expected {(n_u, n_u)}")
    if spec.mu0.shape != (n_x,):
        dim_issue("mu0", f"shape {spec.mu0.shape}, expected {(n_x,)}")
    if spec.muN.shape != (n_x,):
        dim_issue("muN", f"shape {spec.muN.shape}, expected {(n_x,)}")
    if spec.Sigma0.shape != (n_x, n_x):
        dim_issue("Sigma0", f"shape {spec.Sigma0.shape}, expected {(n_x, n_x)}")
    if spec.SigmaN.shape != (n_x, n_x):
        dim_issue("SigmaN", f"shape {spec.SigmaN.shape}, expected {(n_x, n_x)}")

    for j, c in enumerate(spec.chance_set):
        where = f"halfspace[{j}]"
        if c.a.shape != (n_x,):
            dim_issue(where, f"normal shape {c.a.shape}, expected {(n_x,)}")
        elif not np.any(c.a):
            dim_issue(where, "normal vector is zero")
        if any(s < 0 or s > N for s in c.steps) or not c.steps:
            dim_issue(where, f"steps {c.steps} not a nonempty subset of 0..{N}")
        if c.p_fail is not None and not 0.0 < c.p_fail < 0.5:
            issues.append(
                ValidationIssue(
                    IssueKind.RISK_BUDGET_EXCEEDED,
                    where,
                    f"p_fail {c.p_fail} outside (0, 0.5)",
                )
            )
    for j, s in enumerate(spec.stacked_set):
        where = f"stacked[{j}]"
        if s.alpha.shape != ((N + 1) * n_x,):
            dim_issue(where, f"alpha shape {s.alpha.shape}, expected {((N + 1) * n_x,)}")
        elif not np.any(s.alpha):
            dim_issue(where, "alpha vector is zero")
        if s.p_fail is not None and not 0.0 < s.p_fail < 0.5:
            issues.append(
                ValidationIssue(
                    IssueKind.RISK_BUDGET_EXCEEDED,
                    where,
                    f"p_fail {s.p_fail} outside (0, 0.5)",
                )
            )

    if not dims_ok:
        return ValidationReport(False, tuple(issues))

    for k, (Q, R) in enumerate(spec.weights):
        _check_cone(Q, f"Q[{k}]", issues, definite=False)
        _check_cone(R, f"R[{k}]", issues, definite=True)
    _check_cone(spec.Sigma0, "Sigma0", issues, definite=False)
    _check_cone(spec.SigmaN, "SigmaN", issues, definite=True)

    if spec.total_risk is not None and not 0.0 <= spec.total_risk <= 1.0:
        issues.append(
            ValidationIssue(
                IssueKind.RISK_BUDGET_EXCEEDED,
                "total_risk",
                f"total risk {spec.total_risk} outside [0, 1]",
            )
        )
    if _row_count(spec) > 0:
        try:
            risks = resolve_risks(spec)
        except (ValueError, RiskTooLarge) as exc:
            issues.append(
                ValidationIssue(
                    IssueKind.RISK_BUDGET_EXCEEDED, "chance_set", str(exc)
                )
            )
        else:
            if spec.total_risk is not None and (
                math.fsum(risks) > spec.total_risk * (1.0 + 1e-12) + 1e-300
            ):
                issues.append(
                    ValidationIssue(
                        IssueKind.RISK_BUDGET_EXCEEDED,
                        "chance_set",
                        f"row risks sum to {math.fsum(risks)} "
                        f"> budget {spec.total_risk}",
                    )
                )

    # Controllability of the deterministic part: the final row block of the
    # stacked input map must have full row rank n_x.
    sv = np.linalg.svd(_final_input_row(spec), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0 or sv[-1] <= CONTROLLABILITY_TOL * sv[0]:
        smin = float(sv[-1]) if sv.size else 0.0
        issues.append(
            ValidationIssue(
                IssueKind.NOT_CONTROLLABLE,
                "systems",
                f"stacked input map is row-rank deficient "
                f"(sigma_min={smin:.3e})",
            )
        )

    return ValidationReport(not issues, tuple(issues))
