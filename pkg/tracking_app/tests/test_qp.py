"""Module for testing the dense QP solver."""

from itertools import combinations

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from tracking_app.exceptions import QpInfeasible
from tracking_app.qp import QpProblem, solve_qp

RANDOM_PROBLEMS = 100


def brute_force(problem: QpProblem) -> np.ndarray:
    """Enumerate active sets and keep the best feasible stationary point."""
    C, d = problem.stacked_rows()
    size = problem.size
    best, best_value = None, np.inf
    for count in range(min(size, C.shape[0]) + 1):
        for rows in combinations(range(C.shape[0]), count):
            rows = list(rows)
            kkt = np.block([
                [problem.H, C[rows].T],
                [C[rows], np.zeros((count, count))],
            ])
            if np.linalg.matrix_rank(kkt) < kkt.shape[0]:
                continue
            x = np.linalg.solve(kkt, np.concatenate([-problem.g, d[rows]]))[:size]
            if np.all(C @ x <= d + 1e-9) and problem.objective(x) < best_value:
                best, best_value = x, problem.objective(x)
    return best


class TestSolveQp(SimpleTestCase):
    """Test the dual active-set solver."""

    def test_unconstrained(self):
        """Without rows the solver returns the Newton point."""
        H = np.array([[2.0, 0.5], [0.5, 1.0]])
        g = np.array([1.0, -1.0])
        solution = solve_qp(QpProblem(H, g))
        assert_allclose(solution.x, -np.linalg.solve(H, g))
        self.assertEqual(solution.active, ())

    def test_projection_onto_halfspace(self):
        """A single row gives the Euclidean projection."""
        target = np.array([3.0, 4.0])
        a, b = np.array([1.0, 1.0]), 1.0
        solution = solve_qp(QpProblem(np.eye(2), -target, [a], [b]))
        expected = target - (a @ target - b) / (a @ a) * a
        assert_allclose(solution.x, expected)
        self.assertEqual(solution.active, (0,))
        self.assertAlmostEqual(solution.multipliers[0], 3.0)
        self.assertAlmostEqual(solution.slack[0], 0.0)

    def test_bounds(self):
        """Finite bounds clip and infinite ones are ignored."""
        problem = QpProblem(
            np.eye(2), [-5.0, 0.0], lower=[-np.inf, -1.0], upper=[1.0, np.inf],
        )
        assert_allclose(solve_qp(problem).x, [1.0, 0.0])

    def test_matches_enumeration(self):
        """Random problems agree with active-set enumeration."""
        rng = np.random.default_rng(17)
        for _ in range(RANDOM_PROBLEMS):
            size = int(rng.integers(2, 4))
            root = rng.normal(size=(size, size))
            H = root @ root.T + 0.5 * np.eye(size)
            rows = int(rng.integers(1, 6))
            A = rng.normal(size=(rows, size))
            b = rng.uniform(0.1, 1.0, rows)
            problem = QpProblem(H, rng.normal(size=size) * 3, A, b)
            solution = solve_qp(problem)
            assert_allclose(solution.x, brute_force(problem), atol=1e-7)
            self.assertLess(solution.kkt_residual, 1e-8)
            self.assertTrue(np.all(solution.multipliers >= -1e-10))

    def test_infeasible(self):
        """Contradictory rows raise with the blocking subset."""
        problem = QpProblem(np.eye(1), [0.0], [[1.0], [-1.0]], [0.0, -1.0])
        with self.assertRaises(QpInfeasible) as context:
            solve_qp(problem)
        self.assertEqual(context.exception.rows, (0, 1))

    def test_zero_row(self):
        """A zero row with a negative right-hand side is infeasible."""
        with self.assertRaises(QpInfeasible) as context:
            solve_qp(QpProblem(np.eye(2), [0.0, 0.0], [[0.0, 0.0]], [-1.0]))
        self.assertEqual(context.exception.rows, (0,))

    def test_row_count_mismatch(self):
        """A and b must agree."""
        with self.assertRaises(ValueError):
            QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 0.0]], [1.0, 2.0])

    def test_warm_start(self):
        """A previous active set changes the path, never the minimizer."""
        rng = np.random.default_rng(23)
        for _ in range(RANDOM_PROBLEMS):
            size = int(rng.integers(2, 5))
            root = rng.normal(size=(size, size))
            H = root @ root.T + 0.5 * np.eye(size)
            rows = int(rng.integers(1, 8))
            A = rng.normal(size=(rows, size))
            b = rng.uniform(0.1, 1.0, rows)
            g = rng.normal(size=size) * 3
            bound = np.full(size, 2.0)
            before = solve_qp(QpProblem(H, g, A, b, lower=-bound, upper=bound))
            moved = QpProblem(H, g + rng.normal(scale=0.3, size=size), A, b, -bound, bound)
            cold = solve_qp(moved)
            warm = solve_qp(moved, warm_active=before.active)
            assert_allclose(warm.x, cold.x, atol=1e-8)
            self.assertLess(warm.kkt_residual, 1e-8)

    def test_warm_start_repeats_solution(self):
        """Restarting from the final active set ignores rows that do not exist."""
        problem = QpProblem(
            np.eye(3), [-4.0, -4.0, 0.0], [[1.0, 1.0, 0.0]], [1.0],
            lower=[-1.0, -1.0, -1.0], upper=[1.0, 1.0, 1.0],
        )
        cold = solve_qp(problem)
        warm = solve_qp(problem, warm_active=(*cold.active, -1, 99))
        assert_allclose(warm.x, cold.x, atol=1e-12)
        self.assertEqual(warm.active, cold.active)
        self.assertLessEqual(warm.iterations, cold.iterations)
