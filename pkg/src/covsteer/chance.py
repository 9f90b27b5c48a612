"""Gaussian chance constraints as deterministic mean-plus-norm rows.

Under a trajectory gain K the stacked state is Gaussian, so a halfspace
row ``Pr(alpha . bold_X > beta) <= p`` is equivalent to

    alpha'(I + boldB K) boldA mu0_aug - beta
        + z * || S_half (I + boldB K)' alpha ||  <=  0,

with z the standard-normal quantile at 1 - p.  The left-hand side is the
row residual below; feasibility means residual <= 0.  Rows by themselves
are just (alpha, beta, z) data and are safe to evaluate in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lifting import LiftedRow, LiftedSystem

__all__ = [
    "DomainError",
    "norm_cdf",
    "inv_norm_cdf",
    "DeterministicRow",
    "make_rows",
    "row_residual",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """Probability argument outside the open interval (0, 1)."""


def norm_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / _SQRT2)


# Rational quantile approximation (Acklam's coefficients), accurate to
# ~1e-9 before refinement.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _inv_lower(p: float) -> float:
    """Quantile for p in (0, 0.5]: rational approximation + one Newton step."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    pdf = math.exp(-0.5 * x * x) / _SQRT2PI
    if pdf > 0.0 and math.isfinite(pdf):
        x -= (norm_cdf(x) - p) / pdf
    return x


def inv_norm_cdf(p: float) -> float:
    """Standard normal quantile, |Phi(z) - p| <= 1e-12 over (0, 1).

    Antisymmetric by construction: inv_norm_cdf(1 - p) == -inv_norm_cdf(p)
    exactly.  Raises :class:`DomainError` for p outside (0, 1).
    """
    p = float(p)
    if not 0.0 < p < 1.0 or not math.isfinite(p):
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -_inv_lower(1.0 - p)
    return _inv_lower(p)


@dataclass(frozen=True)
class DeterministicRow:
    """One deterministic chance row: data (alpha, beta, quantile).

    ``quantile`` is Phi^{-1}(1 - p_fail) > 0; it is a constant of the conic
    program, computed once here.
    """

    alpha: np.ndarray
    beta: float
    p_fail: float
    quantile: float
    label: str = ""


def make_rows(rows: Sequence[LiftedRow], lifted: LiftedSystem) -> tuple[DeterministicRow, ...]:
    """Attach quantiles to lifted halfspace rows.

    Risk shares at or above 0.5 are rejected: their quantile would be
    non-positive and the mean-plus-norm form stops being convex in the
    gain.
    """
    out = []
    for row in rows:
        if not 0.0 < row.p_fail < 0.5:
            raise DomainError(
                f"{row.label or 'row'}: p_fail {row.p_fail} outside (0, 0.5)"
            )
        alpha = np.asarray(row.alpha, dtype=float)
        if alpha.shape != (lifted.m,):
            raise ValueError(
                f"{row.label or 'row'}: alpha shape {alpha.shape}, "
                f"expected ({lifted.m},)"
            )
        out.append(
            DeterministicRow(
                alpha=alpha,
                beta=float(row.beta),
                p_fail=float(row.p_fail),
                quantile=inv_norm_cdf(1.0 - row.p_fail),
                label=row.label,
            )
        )
    return tuple(out)


def row_residual(row: DeterministicRow, K: np.ndarray, lifted: LiftedSystem) -> float:
    """Evaluate the deterministic row at a gain; feasible iff <= 0.

    The norm term is well-defined (zero) for deterministic directions, so
    no special-casing of singular covariances is needed.
    """
    IBK_t_alpha = row.alpha + K.T @ (lifted.boldB.T @ row.alpha)
    mean = float(IBK_t_alpha @ (lifted.boldA @ lifted.mu0_aug))
    spread = float(np.linalg.norm(lifted.S_half @ IBK_t_alpha))
    return mean - row.beta + row.quantile * spread
