"""Aisle-width optimization: maximize utilization under flow clearance.

The design model is a continuous row-count relaxation: with uniform aisle
width ``a`` and rack depth ``d_r``, ``n(a) = (D + a) / (d_r + a)`` rows fit a
floor of depth ``D`` (gaps between rows only), giving utilization
``u(a) = n(a) * d_r / D``.  With per-aisle widths the relaxation is evaluated
at the mean width.  Utilization is strictly decreasing in every width, so at
the optimum each aisle sits on its clearance bound ``max(a_lb, k * rate_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleError
from .sqp import NlpProblem, NlpResult, sqp_solve


@dataclass(frozen=True)
class LayoutDesign:
    floor_depth: float
    rack_depth: float
    row_length: float = 0.0


@dataclass
class LayoutOptResult:
    aisle_widths: np.ndarray
    utilization: float
    rows_continuous: float
    rows_integer: int
    utilization_integer: float
    nlp: NlpResult


def relaxed_rows(a_mean: float, floor_depth: float, rack_depth: float) -> float:
    return (floor_depth + a_mean) / (rack_depth + a_mean)


def relaxed_utilization(a_mean: float, floor_depth: float, rack_depth: float) -> float:
    return relaxed_rows(a_mean, floor_depth, rack_depth) * rack_depth / floor_depth


def utilization_gradient(a: np.ndarray, floor_depth: float, rack_depth: float) -> np.ndarray:
    """d u / d a_i for the mean-width relaxation (negative everywhere)."""
    m = a.size
    a_mean = float(np.mean(a))
    du_dmean = (rack_depth / floor_depth) * (rack_depth - floor_depth) / (rack_depth + a_mean) ** 2
    return np.full(m, du_dmean / m)


def optimize_layout(design: LayoutDesign, mean_rates: Sequence[float],
                    clearance_coeff: float, a_lb: float,
                    tol: float = 1e-10) -> LayoutOptResult:
    """Optimal aisle widths for the given per-aisle pick rates.

    Raises InfeasibleError when the clearance requirement already exceeds the
    space one rack row plus one aisle would leave.
    """
    if a_lb <= 0:
        raise InfeasibleError("a_lb must be positive")
    D, d_r = design.floor_depth, design.rack_depth
    if D <= d_r:
        raise InfeasibleError("floor depth must exceed rack depth")
    rates = np.atleast_1d(np.asarray(mean_rates, dtype=float))
    if not np.all(np.isfinite(rates)):
        raise InfeasibleError("pick rates must be finite")
    m = rates.size
    lower = np.maximum(a_lb, clearance_coeff * rates)
    a_ub = D - d_r
    if float(lower.max()) > a_ub + 1e-12:
        raise InfeasibleError(
            f"clearance requires {float(lower.max()):.3f} m but only {a_ub:.3f} m "
            "remain beside one rack row"
        )

    def objective(a):
        return -relaxed_utilization(float(np.mean(a)), D, d_r)

    def gradient(a):
        return -utilization_gradient(np.asarray(a, dtype=float), D, d_r)

    def ineq(a):
        return clearance_coeff * rates - a

    def ineq_jac(a):
        return -np.eye(m)

    x0 = np.minimum(lower + 0.25 * (a_ub - lower), a_ub)
    problem = NlpProblem(
        objective=objective,
        gradient=gradient,
        ineq=ineq,
        ineq_jac=ineq_jac,
        lb=np.full(m, a_lb),
        ub=np.full(m, a_ub),
    )
    nlp = sqp_solve(problem, x0, tol=max(tol, 1e-12))
    if nlp.status == "infeasible":
        raise InfeasibleError("no feasible aisle widths found")
    a_star = np.asarray(nlp.x, dtype=float)
    a_mean = float(np.mean(a_star))
    rows_cont = relaxed_rows(a_mean, D, d_r)
    rows_int = int(np.floor(rows_cont + 1e-12))
    return LayoutOptResult(
        aisle_widths=a_star,
        utilization=relaxed_utilization(a_mean, D, d_r),
        rows_continuous=rows_cont,
        rows_integer=rows_int,
        utilization_integer=rows_int * d_r / D,
        nlp=nlp,
    )
