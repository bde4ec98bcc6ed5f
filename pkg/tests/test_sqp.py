import numpy as np
import pytest

from wsdo.sqp import (
    NlpProblem,
    central_difference_gradient,
    central_difference_jacobian,
    solve_qp,
    sqp_solve,
)


class TestQpSubproblem:
    def test_unconstrained_quadratic(self):
        H = np.diag([2.0, 4.0])
        c = np.array([-2.0, -8.0])
        p, mu, lam = solve_qp(H, c)
        assert p == pytest.approx([1.0, 2.0])
        assert lam.size == 0 and mu.size == 0

    def test_single_active_inequality(self):
        # min 1/2 p^2 - 4p  s.t. p <= 1  ->  p = 1, lam = 3
        p, _, lam = solve_qp(np.array([[1.0]]), np.array([-4.0]),
                             A_in=np.array([[1.0]]), b_in=np.array([1.0]))
        assert p == pytest.approx([1.0])
        assert lam == pytest.approx([3.0])

    def test_inactive_inequality_ignored(self):
        p, _, lam = solve_qp(np.array([[1.0]]), np.array([-4.0]),
                             A_in=np.array([[1.0]]), b_in=np.array([10.0]))
        assert p == pytest.approx([4.0])
        assert lam == pytest.approx([0.0])

    def test_equality_constraint(self):
        # min 1/2||p||^2  s.t. p0 + p1 = 2  ->  p = (1, 1)
        p, mu, _ = solve_qp(np.eye(2), np.zeros(2),
                            A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([2.0]))
        assert p == pytest.approx([1.0, 1.0])
        assert mu == pytest.approx([-1.0])

    def test_random_qps_against_reference(self):
        # oracle: cvxopt interior-point QP; linprog phase-1 screens feasibility
        from cvxopt import matrix, solvers
        from scipy.optimize import linprog

        from wsdo.sqp import QpFailure

        solvers.options["show_progress"] = False
        rng = np.random.default_rng(0)
        solved = 0
        for trial in range(40):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, 6))
            M = rng.normal(size=(n, n))
            H = M @ M.T + n * np.eye(n)
            c = rng.normal(size=n)
            A = rng.normal(size=(m, n))
            b = rng.normal(size=m) + 0.5

            feasible = linprog(np.zeros(n), A_ub=A, b_ub=b,
                               bounds=[(None, None)] * n).status == 0
            if not feasible:
                with pytest.raises(QpFailure):
                    solve_qp(H, c, A_in=A, b_in=b)
                continue
            p, _, lam = solve_qp(H, c, A_in=A, b_in=b)
            solved += 1
            ref = solvers.qp(matrix(H), matrix(c), matrix(A), matrix(b))
            assert ref["status"] == "optimal", trial
            z = np.array(ref["x"]).ravel()
            obj_mine = 0.5 * p @ H @ p + c @ p
            obj_ref = 0.5 * z @ H @ z + c @ z
            assert np.max(A @ p - b) <= 1e-8, trial
            assert obj_mine <= obj_ref + 1e-6, trial
            assert np.all(lam >= -1e-10), trial
        assert solved >= 25


def rosenbrock(x):
    return (1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2


def rosenbrock_grad(x):
    return np.array([
        -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] ** 2),
        200.0 * (x[1] - x[0] ** 2),
    ])


class TestSqpSolve:
    def test_unconstrained_quadratic(self):
        problem = NlpProblem(objective=lambda x: float(x[0] ** 2),
                             gradient=lambda x: np.array([2.0 * x[0]]))
        res = sqp_solve(problem, np.array([3.0]), tol=1e-10)
        assert res.converged
        assert res.x == pytest.approx([0.0], abs=1e-8)
        assert res.kkt_residual <= 1e-10

    def test_one_dim_constrained_kkt(self):
        # min (x-3)^2 s.t. x <= 1  ->  x* = 1, lambda = 4
        problem = NlpProblem(
            objective=lambda x: float((x[0] - 3.0) ** 2),
            gradient=lambda x: np.array([2.0 * (x[0] - 3.0)]),
            ineq=lambda x: np.array([x[0] - 1.0]),
            ineq_jac=lambda x: np.array([[1.0]]),
        )
        res = sqp_solve(problem, np.array([0.0]), tol=1e-10)
        assert res.converged
        assert res.x == pytest.approx([1.0], abs=1e-8)
        assert res.lam == pytest.approx([4.0], abs=1e-6)

    def test_rosenbrock(self):
        problem = NlpProblem(objective=rosenbrock, gradient=rosenbrock_grad)
        res = sqp_solve(problem, np.array([-1.2, 1.0]), tol=1e-8, max_iter=500)
        assert res.converged
        assert res.x == pytest.approx([1.0, 1.0], abs=1e-4)

    def test_bounds_respected(self):
        problem = NlpProblem(
            objective=lambda x: float((x[0] - 5.0) ** 2 + (x[1] + 5.0) ** 2),
            gradient=lambda x: np.array([2.0 * (x[0] - 5.0), 2.0 * (x[1] + 5.0)]),
            lb=np.array([0.0, -1.0]),
            ub=np.array([2.0, 1.0]),
        )
        res = sqp_solve(problem, np.array([1.0, 0.0]), tol=1e-10)
        assert res.converged
        assert res.x == pytest.approx([2.0, -1.0], abs=1e-8)

    def test_equality_constrained(self):
        # min x^2 + y^2 s.t. x + y = 2 -> (1, 1)
        problem = NlpProblem(
            objective=lambda x: float(x @ x),
            gradient=lambda x: 2.0 * x,
            eq=lambda x: np.array([x[0] + x[1] - 2.0]),
            eq_jac=lambda x: np.array([[1.0, 1.0]]),
        )
        res = sqp_solve(problem, np.array([3.0, -1.0]), tol=1e-10)
        assert res.converged
        assert res.x == pytest.approx([1.0, 1.0], abs=1e-8)

    def test_inconsistent_bounds_reported_infeasible(self):
        problem = NlpProblem(
            objective=lambda x: float(x[0] ** 2),
            lb=np.array([2.0]),
            ub=np.array([1.0]),
        )
        res = sqp_solve(problem, np.array([1.5]))
        assert res.status == "infeasible"

    def test_finite_difference_gradient_fallback(self):
        problem = NlpProblem(objective=lambda x: float((x[0] - 2.0) ** 4 + x[1] ** 2))
        res = sqp_solve(problem, np.array([0.0, 1.0]), tol=1e-6, max_iter=400)
        assert res.status in ("converged", "max-iter")
        assert res.x == pytest.approx([2.0, 0.0], abs=1e-2)


class TestFiniteDifferences:
    def test_gradient_matches_analytic(self):
        for x in (np.array([-1.2, 1.0]), np.array([0.3, 0.7]), np.array([2.0, -3.0])):
            fd = central_difference_gradient(rosenbrock, x)
            an = rosenbrock_grad(x)
            assert np.max(np.abs(fd - an)) / max(1.0, np.max(np.abs(an))) <= 1e-5

    def test_jacobian_matches_analytic(self):
        fun = lambda x: np.array([x[0] * x[1], x[0] ** 2 - x[1]])
        x = np.array([1.5, -2.0])
        fd = central_difference_jacobian(fun, x)
        an = np.array([[x[1], x[0]], [2 * x[0], -1.0]])
        assert np.max(np.abs(fd - an)) <= 1e-6
