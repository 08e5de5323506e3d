"""
Dense convex quadratic programming.

Solves ``min 1/2 x'Hx + g'x  s.t.  A x <= b, lower <= x <= upper`` with the
dual active-set method of Goldfarb and Idnani: start from the unconstrained
minimizer and repeatedly add the most violated row, dropping rows whose
multipliers would turn negative. A previous active set can be passed as a
warm start; its violated rows are added first. Shared by the safety filter and by the NMPC
inner iterations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from tracking_app.exceptions import IterationLimit, QpInfeasible

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-10
DIRECTION_TOLERANCE = 1e-12
ROW_NORM_MIN = 1e-14
STATUS_OPTIMAL = 'optimal'


@dataclass
class QpProblem:
    """
    A dense convex QP.

    Attributes:
        H (np.ndarray): n x n symmetric positive definite Hessian.
        g (np.ndarray): Linear term.
        A (np.ndarray): m x n inequality rows, ``A x <= b``.
        b (np.ndarray): Right-hand sides.
        lower (np.ndarray | None): Lower bounds, -inf where absent.
        upper (np.ndarray | None): Upper bounds, +inf where absent.
    """

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        """Normalize shapes."""
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        size = self.g.size
        if self.A is None:
            self.A = np.zeros((0, size))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, size)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.size:
            raise ValueError('A and b disagree on the number of rows')

    @property
    def size(self) -> int:
        """Number of variables."""
        return self.g.size

    def stacked_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Return every inequality, finite bounds included, as ``C x <= d``.

        Rows are ordered: A rows, then lower bounds, then upper bounds.
        Infinite bounds become trivially satisfied zero rows.

        Returns:
            tuple[np.ndarray, np.ndarray]: (C, d).
        """
        eye = np.eye(self.size)
        blocks, rhs = [self.A], [self.b]
        if self.lower is not None:
            lower = np.asarray(self.lower, dtype=float)
            finite = np.isfinite(lower)
            blocks.append(-eye * finite[:, None])
            rhs.append(np.where(finite, -lower, 0.0))
        if self.upper is not None:
            upper = np.asarray(self.upper, dtype=float)
            finite = np.isfinite(upper)
            blocks.append(eye * finite[:, None])
            rhs.append(np.where(finite, upper, 0.0))
        return np.vstack(blocks), np.concatenate(rhs)

    def objective(self, x) -> float:
        """Evaluate the quadratic objective."""
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpSolution:
    """
    Result of a QP solve.

    Attributes:
        x (np.ndarray): Minimizer.
        active (tuple[int, ...]): Active rows, indexed as in ``QpProblem.stacked_rows``.
        slack (np.ndarray): ``b - A x`` for the A rows.
        multipliers (np.ndarray): Multipliers of every stacked row.
        status (str): Solver status.
        iterations (int): Number of active-set changes.
        kkt_residual (float): Infinity norm of the stationarity residual.
    """

    x: np.ndarray
    active: tuple[int, ...]
    slack: np.ndarray
    multipliers: np.ndarray
    status: str = STATUS_OPTIMAL
    iterations: int = 0
    kkt_residual: float = field(default=0.0)


def _solve_small(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(matrix, rhs, rcond=None)[0]


def solve_qp(
    problem: QpProblem, max_iterations: int | None = None, warm_active=(),
) -> QpSolution:
    """
    Solve a dense strictly convex QP.

    Ties between equally violated rows go to the lowest row index. Violated
    rows of ``warm_active`` enter before any other row, in the given order.

    Args:
        problem (QpProblem): The problem.
        max_iterations (int | None): Cap on active-set changes.
        warm_active (Iterable[int]): Active rows of a previous solve, indexed as
            in ``QpProblem.stacked_rows``; out-of-range rows are ignored.

    Returns:
        QpSolution: The KKT point.

    Raises:
        QpInfeasible: If the rows admit no common point; carries the blocking rows.
        IterationLimit: If the iteration cap is reached.
    """
    C, d = problem.stacked_rows()
    norms = np.linalg.norm(C, axis=1)
    degenerate = norms < ROW_NORM_MIN
    impossible = degenerate & (d < -FEASIBILITY_TOLERANCE)
    if np.any(impossible):
        rows = tuple(int(index) for index in np.flatnonzero(impossible))
        raise QpInfeasible('zero row with a negative right-hand side', rows)
    scale = np.where(degenerate, 1.0, norms)
    C_unit, d_unit = C / scale[:, None], d / scale
    candidate = ~degenerate
    hinted = [
        int(row) for row in dict.fromkeys(warm_active)
        if 0 <= row < C.shape[0] and candidate[row]
    ]

    factor = cho_factor(problem.H)
    H_inv = cho_solve(factor, np.eye(problem.size))
    x = -cho_solve(factor, problem.g)
    active: list[int] = []
    duals = np.zeros(C.shape[0])
    limit = max_iterations or 10 * (problem.size + C.shape[0]) + 10
    iterations = 0

    while True:
        violation = C_unit @ x - d_unit
        violation[~candidate] = -np.inf
        violation[active] = -np.inf
        if violation.size == 0 or violation.max() <= FEASIBILITY_TOLERANCE:
            break
        preferred = [row for row in hinted if violation[row] > FEASIBILITY_TOLERANCE]
        entering = preferred[0] if preferred else int(np.argmax(violation))
        normal = -C_unit[entering]
        entering_dual = 0.0

        while True:
            iterations += 1
            if iterations > limit:
                raise IterationLimit(f'no convergence after {limit} active-set changes')
            shortfall = normal @ x + d_unit[entering]
            h_normal = H_inv @ normal
            if active:
                N = -C_unit[active].T
                ratios = _solve_small(N.T @ H_inv @ N, N.T @ h_normal)
                step_dir = h_normal - H_inv @ N @ ratios
            else:
                ratios = np.zeros(0)
                step_dir = h_normal

            dual_step, blocking = np.inf, None
            for position, ratio in enumerate(ratios):
                if ratio > DIRECTION_TOLERANCE:
                    candidate_step = duals[active[position]] / ratio
                    if candidate_step < dual_step:
                        dual_step, blocking = candidate_step, position

            curvature = step_dir @ normal
            if np.linalg.norm(step_dir) <= DIRECTION_TOLERANCE or curvature <= 0:
                if blocking is None:
                    rows = tuple(sorted(active + [entering]))
                    logger.debug('QP infeasible, blocking rows %s', rows)
                    raise QpInfeasible('constraints have no common point', rows)
                for position, row in enumerate(active):
                    duals[row] -= dual_step * ratios[position]
                entering_dual += dual_step
                duals[active.pop(blocking)] = 0.0
                continue

            primal_step = -shortfall / curvature
            step = min(dual_step, primal_step)
            x = x + step * step_dir
            for position, row in enumerate(active):
                duals[row] -= step * ratios[position]
            entering_dual += step
            if primal_step <= dual_step:
                active.append(entering)
                duals[entering] = entering_dual
                break
            duals[active.pop(blocking)] = 0.0

    multipliers = duals / scale
    residual = problem.H @ x + problem.g + C.T @ multipliers
    return QpSolution(
        x=x,
        active=tuple(sorted(active)),
        slack=problem.b - problem.A @ x,
        multipliers=multipliers,
        iterations=iterations,
        kkt_residual=float(np.max(np.abs(residual))) if residual.size else 0.0,
    )
