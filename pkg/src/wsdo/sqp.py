"""Small dense SQP solver for bounded, smooth, low-dimensional problems.

Sequential quadratic programming with a damped-BFGS Hessian approximation,
an active-set solver for the inequality-constrained QP subproblem, and an
l1 merit function with Armijo backtracking.  Bounds are folded into the
inequality set, so KKT residuals account for active bounds.

Gradients and Jacobians may be supplied analytically; anything missing is
filled in by central finite differences with a 1e-6 relative step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

FD_REL_STEP = 1e-6


def central_difference_gradient(f: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = FD_REL_STEP * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (f(xp) - f(xm)) / (2.0 * step)
    return grad


def central_difference_jacobian(fun: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        step = FD_REL_STEP * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        fp = np.atleast_1d(np.asarray(fun(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(fun(xm), dtype=float))
        jac[:, i] = (fp - fm) / (2.0 * step)
    return jac


@dataclass
class NlpProblem:
    """min f(x)  s.t.  g(x) <= 0,  h(x) = 0,  lb <= x <= ub."""

    objective: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ineq: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ineq_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eq: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eq_jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return central_difference_gradient(self.objective, x)

    def g(self, x: np.ndarray) -> np.ndarray:
        if self.ineq is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.ineq(x), dtype=float))

    def jac_g(self, x: np.ndarray) -> np.ndarray:
        if self.ineq is None:
            return np.zeros((0, x.size))
        if self.ineq_jac is not None:
            return np.atleast_2d(np.asarray(self.ineq_jac(x), dtype=float))
        return central_difference_jacobian(self.ineq, x)

    def h(self, x: np.ndarray) -> np.ndarray:
        if self.eq is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.eq(x), dtype=float))

    def jac_h(self, x: np.ndarray) -> np.ndarray:
        if self.eq is None:
            return np.zeros((0, x.size))
        if self.eq_jac is not None:
            return np.atleast_2d(np.asarray(self.eq_jac(x), dtype=float))
        return central_difference_jacobian(self.eq, x)


@dataclass
class NlpResult:
    x: np.ndarray
    fun: float
    kkt_residual: float
    iterations: int
    status: str                      # converged | max-iter | infeasible
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))   # user g multipliers
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))    # h multipliers
    max_violation: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class QpFailure(Exception):
    pass


def solve_qp(H, c, A_eq=None, b_eq=None, A_in=None, b_in=None,
             tol: float = 1e-10, max_iter: int = 200):
    """Active-set solution of  min 1/2 p'Hp + c'p  s.t.  A_eq p = b_eq, A_in p <= b_in.

    H must be symmetric positive definite.  Returns (p, mu_eq, lam_in) with
    lam_in >= 0 and lam_in zero on inactive rows.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))
    A_in = np.zeros((0, n)) if A_in is None else np.atleast_2d(np.asarray(A_in, dtype=float))
    b_in = np.zeros(0) if b_in is None else np.atleast_1d(np.asarray(b_in, dtype=float))
    m_eq, m_in = A_eq.shape[0], A_in.shape[0]

    working: list[int] = []
    seen = set()

    def kkt_solve(active: Sequence[int]):
        A = np.vstack([A_eq, A_in[list(active)]]) if (m_eq or active) else np.zeros((0, n))
        b = np.concatenate([b_eq, b_in[list(active)]])
        m = A.shape[0]
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = A.T
        K[n:, :n] = A
        rhs = np.concatenate([-c, b])
        try:
            sol = np.linalg.solve(K, rhs)
            residual = 0.0
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            residual = float(np.max(np.abs(K @ sol - rhs))) if K.size else 0.0
        return sol[:n], sol[n:], residual

    for _ in range(max_iter):
        p, nu, residual = kkt_solve(working)
        if residual > 1e-7 * (1.0 + float(np.max(np.abs(b_in))) if m_in else 1.0):
            # inconsistent active set: drop the most recent inequality
            if working:
                working.pop()
                continue
            raise QpFailure("inconsistent equality constraints")
        lam_working = nu[m_eq:]
        if lam_working.size and float(lam_working.min()) < -tol:
            drop = working[int(np.argmin(lam_working))]
            working.remove(drop)
            continue
        if m_in:
            viol = A_in @ p - b_in
            worst = int(np.argmax(viol))
            if viol[worst] > tol * (1.0 + abs(b_in[worst])):
                if worst in working:
                    raise QpFailure("active constraint still violated (infeasible QP)")
                working.append(worst)
                key = frozenset(working)
                if key in seen:
                    raise QpFailure("active-set cycle detected")
                seen.add(key)
                continue
        lam = np.zeros(m_in)
        for idx, w in enumerate(working):
            lam[w] = max(0.0, lam_working[idx])
        return p, nu[:m_eq], lam
    raise QpFailure("QP active-set iteration limit reached")


def _fold_bounds(problem: NlpProblem, n: int):
    """Return (g_all, jac_all) callables with finite bounds appended as rows."""
    lb = problem.lb if problem.lb is not None else np.full(n, -np.inf)
    ub = problem.ub if problem.ub is not None else np.full(n, np.inf)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    lo_idx = np.where(np.isfinite(lb))[0]
    hi_idx = np.where(np.isfinite(ub))[0]

    def g_all(x):
        parts = [problem.g(x)]
        parts.append(lb[lo_idx] - x[lo_idx])
        parts.append(x[hi_idx] - ub[hi_idx])
        return np.concatenate(parts)

    def jac_all(x):
        J = problem.jac_g(x)
        rows = [J] if J.size else [np.zeros((0, n))]
        Jlo = np.zeros((lo_idx.size, n))
        Jlo[np.arange(lo_idx.size), lo_idx] = -1.0
        Jhi = np.zeros((hi_idx.size, n))
        Jhi[np.arange(hi_idx.size), hi_idx] = 1.0
        return np.vstack(rows + [Jlo, Jhi])

    return g_all, jac_all, lb, ub


def sqp_solve(problem: NlpProblem, x0, tol: float = 1e-8, max_iter: int = 200) -> NlpResult:
    """Solve the NLP from x0; never raises on non-convergence (status reports it)."""
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    g_all, jac_all, lb, ub = _fold_bounds(problem, n)
    if np.any(lb > ub):
        return NlpResult(x=x, fun=np.inf, kkt_residual=np.inf, iterations=0,
                         status="infeasible")
    x = np.clip(x, lb, ub)
    n_user_g = problem.g(x).size
    B = np.eye(n)
    lam = np.zeros(g_all(x).size)
    mu = np.zeros(problem.h(x).size)
    sigma = 1.0
    best = None

    def merit(xv, s):
        g = g_all(xv)
        h = problem.h(xv)
        viol = float(np.sum(np.maximum(g, 0.0))) + float(np.sum(np.abs(h)))
        return problem.objective(xv) + s * viol, viol

    def kkt_terms(xv, lam_v, mu_v):
        gf = problem.grad(xv)
        Jg = jac_all(xv)
        Jh = problem.jac_h(xv)
        g = g_all(xv)
        h = problem.h(xv)
        stat = gf.copy()
        if lam_v.size:
            stat = stat + Jg.T @ lam_v
        if mu_v.size:
            stat = stat + Jh.T @ mu_v
        r_stat = float(np.max(np.abs(stat))) if stat.size else 0.0
        r_feas = 0.0
        if g.size:
            r_feas = max(r_feas, float(np.max(g)))
        if h.size:
            r_feas = max(r_feas, float(np.max(np.abs(h))))
        r_comp = float(np.max(np.abs(lam_v * g))) if g.size else 0.0
        return max(r_stat, max(r_feas, 0.0), r_comp), max(r_feas, 0.0)

    status = "max-iter"
    it = 0
    for it in range(1, max_iter + 1):
        gf = problem.grad(x)
        g = g_all(x)
        h = problem.h(x)
        Jg = jac_all(x)
        Jh = problem.jac_h(x)

        kkt, feas = kkt_terms(x, lam, mu)
        if best is None or kkt < best[1]:
            best = (x.copy(), kkt, lam.copy(), mu.copy())
        if kkt <= tol and feas <= tol:
            status = "converged"
            break

        try:
            p, mu_new, lam_new = solve_qp(
                B, gf,
                A_eq=Jh if mu.size else None, b_eq=-h if mu.size else None,
                A_in=Jg if lam.size else None, b_in=-g if lam.size else None,
            )
        except QpFailure:
            status = "infeasible"
            break
        lam, mu = lam_new, mu_new

        mult_inf = max(
            float(np.max(np.abs(lam))) if lam.size else 0.0,
            float(np.max(np.abs(mu))) if mu.size else 0.0,
        )
        sigma = max(sigma, 1.5 * mult_inf + 1e-4)

        phi0, viol0 = merit(x, sigma)
        descent = float(gf @ p) - sigma * viol0
        alpha = 1.0
        accepted = False
        for _ in range(40):
            trial = x + alpha * p
            phi_t, _ = merit(trial, sigma)
            if phi_t <= phi0 + 0.1 * alpha * min(descent, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no merit progress in 40 halvings: accept tiny step only if it helps
            trial = x + alpha * p
            phi_t, _ = merit(trial, sigma)
            if phi_t >= phi0:
                kkt, feas = kkt_terms(x, lam, mu)
                status = "converged" if (kkt <= tol and feas <= tol) else "max-iter"
                break

        x_new = np.clip(trial, lb, ub)

        # damped BFGS on the Lagrangian gradient
        def lagr_grad(xv):
            out = problem.grad(xv)
            if lam.size:
                out = out + jac_all(xv).T @ lam
            if mu.size:
                out = out + problem.jac_h(xv).T @ mu
            return out

        s = x_new - x
        if float(np.linalg.norm(s)) > 1e-14:
            y = lagr_grad(x_new) - lagr_grad(x)
            Bs = B @ s
            sBs = float(s @ Bs)
            sy = float(s @ y)
            if sy < 0.2 * sBs and sBs > 0:
                theta = 0.8 * sBs / (sBs - sy)
                y = theta * y + (1.0 - theta) * Bs
                sy = float(s @ y)
            if sy > 1e-12 and sBs > 1e-12:
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
        x = x_new

    else:
        it = max_iter

    kkt, feas = kkt_terms(x, lam, mu)
    if best is not None and kkt > best[1]:
        x, kkt, lam, mu = best[0], best[1], best[2], best[3]
        _, feas = kkt_terms(x, lam, mu)
    if status != "infeasible" and kkt <= tol and feas <= tol:
        status = "converged"
    return NlpResult(
        x=x,
        fun=float(problem.objective(x)),
        kkt_residual=kkt,
        iterations=it,
        status=status,
        lam=lam[:n_user_g].copy(),
        mu=mu.copy(),
        max_violation=feas,
    )
