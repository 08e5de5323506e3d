"""Minimally invasive safety filter projecting the nominal command onto the CBF rows."""

import logging
from dataclasses import dataclass

import numpy as np

from tracking_app.cbf import KIND_CONNECTIVITY, KIND_OCCLUSION, KIND_SAFETY, CbfParams
from tracking_app.exceptions import QpInfeasible
from tracking_app.geometry import ControlInput, ControlInputGlobal
from tracking_app.qp import QpProblem, solve_qp

logger = logging.getLogger(__name__)

STATUS_OPTIMAL = 'optimal'
STATUS_RESCALED = 'rescaled'
STATUS_TIGHTENED = 'tightened'
STATUS_INFEASIBLE = 'infeasible'
SLACK_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class FilterResult:
    """
    Outcome of one safety-filter call.

    Attributes:
        u (ControlInputGlobal): The command to apply.
        slacks (np.ndarray): ``b - A u`` per row, in row order.
        status (str): optimal, rescaled, tightened or infeasible.
        correction (float): |u - u_hat|.
    """

    u: ControlInputGlobal
    slacks: np.ndarray
    status: str
    correction: float

    def min_slack(self, rows, kind: str) -> float:
        """Smallest slack among rows of one kind, NaN if there are none."""
        values = [slack for row, slack in zip(rows, self.slacks) if row.kind == kind]
        return float(min(values)) if values else np.nan

    def kind_minima(self, rows) -> dict:
        """Smallest slack per constraint kind."""
        return {
            kind: self.min_slack(rows, kind)
            for kind in (KIND_SAFETY, KIND_CONNECTIVITY, KIND_OCCLUSION)
        }


def augment(u: ControlInput, R_cg: np.ndarray) -> ControlInputGlobal:
    """
    Lift a camera-frame command to the global frame.

    Args:
        u (ControlInput): Camera-frame command.
        R_cg (np.ndarray): Camera-to-global rotation.

    Returns:
        ControlInputGlobal: [R_cg v_c; R_cg (0, w_cy, 0)].
    """
    return ControlInputGlobal(R_cg @ u.velocity, R_cg @ u.angular)


def _stack(rows) -> tuple[np.ndarray, np.ndarray]:
    if not rows:
        return np.zeros((0, 6)), np.zeros(0)
    return np.vstack([row.A for row in rows]), np.array([row.b for row in rows])


def _project(u_hat: np.ndarray, A: np.ndarray, b: np.ndarray, speed: float, rate: float):
    bound = np.array([speed] * 3 + [rate] * 3)
    problem = QpProblem(H=np.eye(6), g=-u_hat, A=A, b=b, lower=-bound, upper=bound)
    return solve_qp(problem).x


def _scale_to_ball(u: np.ndarray, params: CbfParams) -> tuple[np.ndarray, bool]:
    scaled = u.copy()
    changed = False
    for block, bound in ((slice(0, 3), params.alpha_v), (slice(3, 6), params.alpha_omega)):
        norm = np.linalg.norm(scaled[block])
        if norm > bound:
            scaled[block] *= bound / norm
            changed = True
    return scaled, changed


def filter_command(u_hat: ControlInputGlobal, rows, params: CbfParams) -> FilterResult:
    """
    Return the admissible command closest to the nominal one.

    The norm bounds on V and omega are enforced as per-axis boxes inside the
    QP, followed by a radial scaling of each block. If the scaling breaks a
    row the QP is solved again with boxes shrunk by sqrt(3). An infeasible
    QP yields the zero command.

    Args:
        u_hat (ControlInputGlobal): Nominal command.
        rows (list[HalfspaceConstraint]): CBF rows of this agent.
        params (CbfParams): Actuator bounds.

    Returns:
        FilterResult: The filtered command and diagnostics.
    """
    nominal = u_hat.as_array()
    A, b = _stack(rows)
    try:
        u = _project(nominal, A, b, params.alpha_v, params.alpha_omega)
        u, rescaled = _scale_to_ball(u, params)
        status = STATUS_RESCALED if rescaled else STATUS_OPTIMAL
        if np.any(b - A @ u < -SLACK_TOLERANCE):
            shrink = np.sqrt(3)
            u = _project(nominal, A, b, params.alpha_v / shrink, params.alpha_omega / shrink)
            status = STATUS_TIGHTENED
    except QpInfeasible as error:
        logger.warning('Safety QP infeasible (rows %s), emergency stop', error.rows)
        u = np.zeros(6)
        status = STATUS_INFEASIBLE
    return FilterResult(
        u=ControlInputGlobal.from_array(u),
        slacks=b - A @ u,
        status=status,
        correction=float(np.linalg.norm(u - nominal)),
    )
