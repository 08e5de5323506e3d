"""
Receding-horizon tracking of image features.

The optimal control problem is transcribed by direct multiple shooting over
the forward-Euler feature model and solved by a Gauss-Newton SQP loop; each
iteration condenses the shooting defects into a dense QP in the control
increments and hands it to ``tracking_app.qp``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from tracking_app.exceptions import (
    InfeasibleInitialState, NonPositiveDepth, NotConverged, QpInfeasible,
)
from tracking_app.geometry import ControlInput, FeatureState, angle_diff, wrap_angle
from tracking_app.qp import QpProblem, solve_qp

logger = logging.getLogger(__name__)

STATES = 4
CONTROLS = 4
PSI = 3
INITIAL_MARGIN = 0.05


def _default_weights():
    return np.diag([1.0, 1.0, 100.0, 1.0])


@dataclass(frozen=True, eq=False)
class NmpcConfig:
    """
    Horizon, weights, boxes and reference of one tracker.

    Attributes:
        N_p (int): Horizon length in steps.
        dt (float): Prediction step, seconds.
        Q_s (np.ndarray): Stage feature weight.
        R_u (np.ndarray): Stage control weight.
        W_s (np.ndarray): Terminal feature weight.
        s_lower (np.ndarray): Feature lower bounds.
        s_upper (np.ndarray): Feature upper bounds; the psi entries bound the
            deviation from the desired angle.
        u_lower (np.ndarray): Control lower bounds.
        u_upper (np.ndarray): Control upper bounds.
        s_star (FeatureState): Reference features.
        max_iterations (int): SQP iteration cap.
        tolerance (float): Step and defect tolerance.
    """

    N_p: int = 50
    dt: float = 1 / 80
    Q_s: np.ndarray = field(default_factory=_default_weights)
    R_u: np.ndarray = field(default_factory=lambda: np.diag([0.02, 0.03, 0.01, 0.3]))
    W_s: np.ndarray = field(default_factory=_default_weights)
    s_lower: np.ndarray = field(default_factory=lambda: np.array([-0.84, -0.63, 0.07, -np.pi]))
    s_upper: np.ndarray = field(default_factory=lambda: np.array([0.84, 0.63, 1.0, np.pi]))
    u_lower: np.ndarray = field(default_factory=lambda: np.array([-10.0, -10.0, -10.0, -0.6]))
    u_upper: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 10.0, 0.6]))
    s_star: FeatureState = FeatureState(0.0, 0.188, 1 / 7, np.pi / 2)
    max_iterations: int = 30
    tolerance: float = 1e-6

    def __post_init__(self):
        """Check weights and boxes."""
        for name in ('Q_s', 'R_u', 'W_s'):
            if np.linalg.eigvalsh(getattr(self, name)).min() < -1e-12:
                raise ValueError(f'{name} is not positive semidefinite')
        if np.any(self.s_lower > self.s_upper) or np.any(self.u_lower > self.u_upper):
            raise ValueError('box lower bounds exceed upper bounds')
        if self.N_p < 1:
            raise ValueError('horizon must have at least one step')


@dataclass(frozen=True, eq=False)
class OcpSolution:
    """
    Solution of one horizon problem.

    Attributes:
        U (np.ndarray): N_p x 4 controls.
        S_m (np.ndarray): (N_p + 1) x 4 predicted features, psi unwrapped.
        cost (float): Objective value.
        converged (bool): Whether the SQP loop met its tolerance.
        iterations (int): SQP iterations used.
    """

    U: np.ndarray
    S_m: np.ndarray
    cost: float
    converged: bool
    iterations: int

    @property
    def first(self) -> ControlInput:
        """The control applied this tick."""
        return ControlInput.from_array(self.U[0])

    def shifted(self) -> np.ndarray:
        """Controls advanced by one step, repeating the last one."""
        return np.vstack([self.U[1:], self.U[-1:]])


def _flow(S, U, V):
    x1, x2, x3 = S[:, 0], S[:, 1], S[:, 2]
    a = U[:, 0] - V[:, 0]
    b = U[:, 1] - V[:, 1]
    c = U[:, 2] - V[:, 2]
    w = U[:, 3]
    rho = np.sqrt(1 + x1 ** 2 + x2 ** 2)
    return np.stack([
        -x3 * a + x1 * x3 * c - (1 + x1 ** 2) * w,
        -x3 * b + x2 * x3 * c - w * x1 * x2,
        x3 ** 2 * c - w * x1 * x3,
        a * x3 / rho,
    ], axis=1)


def _jacobians(S, U, V):
    x1, x2, x3 = S[:, 0], S[:, 1], S[:, 2]
    a = U[:, 0] - V[:, 0]
    b = U[:, 1] - V[:, 1]
    c = U[:, 2] - V[:, 2]
    w = U[:, 3]
    rho = np.sqrt(1 + x1 ** 2 + x2 ** 2)
    count = S.shape[0]
    d_state = np.zeros((count, STATES, STATES))
    d_state[:, 0, 0] = x3 * c - 2 * x1 * w
    d_state[:, 0, 2] = -a + x1 * c
    d_state[:, 1, 0] = -w * x2
    d_state[:, 1, 1] = x3 * c - w * x1
    d_state[:, 1, 2] = -b + x2 * c
    d_state[:, 2, 0] = -w * x3
    d_state[:, 2, 2] = 2 * x3 * c - w * x1
    d_state[:, 3, 0] = -a * x3 * x1 / rho ** 3
    d_state[:, 3, 1] = -a * x3 * x2 / rho ** 3
    d_state[:, 3, 2] = a / rho
    d_control = np.zeros((count, STATES, CONTROLS))
    d_control[:, 0, 0] = -x3
    d_control[:, 0, 2] = x1 * x3
    d_control[:, 0, 3] = -(1 + x1 ** 2)
    d_control[:, 1, 1] = -x3
    d_control[:, 1, 2] = x2 * x3
    d_control[:, 1, 3] = -x1 * x2
    d_control[:, 2, 2] = x3 ** 2
    d_control[:, 2, 3] = -x1 * x3
    d_control[:, 3, 0] = x3 / rho
    return d_state, d_control


def reduced_dynamics(s, u, v_q_cam) -> np.ndarray:
    """
    Feature rates under a camera command that rotates only about its y axis.

    Args:
        s (FeatureState | Sequence[float]): Features, x3 > 0.
        u (ControlInput | Sequence[float]): (v_cx, v_cy, v_cz, w_cy).
        v_q_cam (Sequence[float]): Target velocity, camera frame.

    Returns:
        np.ndarray: ds/dt.

    Raises:
        NonPositiveDepth: If x3 is not positive.
    """
    state = s.as_array() if isinstance(s, FeatureState) else np.asarray(s, dtype=float)
    command = u.as_array() if isinstance(u, ControlInput) else np.asarray(u, dtype=float)
    if state[2] <= 0:
        raise NonPositiveDepth(f'x3 = {state[2]}')
    return _flow(state[None, :], command[None, :], np.asarray(v_q_cam, dtype=float)[None, :])[0]


def compensate_error(s_ukf: FeatureState, s_model: FeatureState, s_star: FeatureState):
    """
    Shift the reference by the model error of the last prediction.

    Args:
        s_ukf (FeatureState): Estimated features.
        s_model (FeatureState): Features the model predicted for this tick.
        s_star (FeatureState): Reference.

    Returns:
        FeatureState: s_star - (s_ukf - s_model), psi by shortest arc.
    """
    error = s_ukf.as_array() - s_model.as_array()
    error[PSI] = angle_diff(s_ukf.psi, s_model.psi)
    return FeatureState.from_array(s_star.as_array() - error)


def desired_controls(u_d_init, gamma, cfg: NmpcConfig) -> np.ndarray:
    """
    Propagate the feed-forward control over the horizon.

    Args:
        u_d_init (ControlInput | Sequence[float]): First feed-forward control.
        gamma (Sequence[float]): Target acceleration, camera frame.
        cfg (NmpcConfig): Horizon.

    Returns:
        np.ndarray: N_p x 4 feed-forward controls.
    """
    first = u_d_init.as_array() if isinstance(u_d_init, ControlInput) else np.asarray(u_d_init)
    drift = np.concatenate([np.asarray(gamma, dtype=float), [0.0]]) * cfg.dt
    return first[None, :] + np.arange(cfg.N_p)[:, None] * drift[None, :]


class HorizonProblem:
    """
    The horizon objective as a function of the controls alone.

    Attributes:
        s0 (np.ndarray): Initial features, psi unwrapped next to the desired angle.
        s_d (np.ndarray): Desired features.
        U_d (np.ndarray): Feed-forward controls.
        cfg (NmpcConfig): Weights and step.
    """

    def __init__(self, s0, s_d, U_d, cfg: NmpcConfig):
        """
        Set up the problem.

        Args:
            s0 (Sequence[float]): Initial features.
            s_d (Sequence[float]): Desired features, psi unwrapped next to s0.
            U_d (np.ndarray): Feed-forward controls, also the target-velocity forecast.
            cfg (NmpcConfig): Weights and step.
        """
        self.s0 = np.asarray(s0, dtype=float)
        self.s_d = np.asarray(s_d, dtype=float)
        self.U_d = np.asarray(U_d, dtype=float)
        self.cfg = cfg
        self.V = self.U_d[:, :3]
        self.weights = np.stack([cfg.Q_s] * (cfg.N_p - 1) + [cfg.W_s])

    def step(self, S, U):
        """Forward-Euler map of every node."""
        return S + self.cfg.dt * _flow(S, U, self.V)

    def rollout(self, U) -> np.ndarray:
        """Single-shooting state trajectory."""
        S = np.empty((self.cfg.N_p + 1, STATES))
        S[0] = self.s0
        for n in range(self.cfg.N_p):
            S[n + 1] = self.step(S[n:n + 1], U[n:n + 1])[0]
        return S

    def defects(self, S, U) -> np.ndarray:
        """Shooting gaps F(s_n, u_n) - s_{n+1}."""
        return self.step(S[:-1], U) - S[1:]

    def cost(self, S, U) -> float:
        """Quadratic tracking cost of a trajectory."""
        err = S - self.s_d
        stage = np.einsum('ni,ij,nj->', err[:-1], self.cfg.Q_s, err[:-1])
        terminal = err[-1] @ self.cfg.W_s @ err[-1]
        du = U - self.U_d
        effort = np.einsum('ni,ij,nj->', du, self.cfg.R_u, du)
        return float(stage + terminal + effort)

    def objective(self, U) -> float:
        """Cost of the rolled-out trajectory."""
        U = np.asarray(U, dtype=float).reshape(self.cfg.N_p, CONTROLS)
        return self.cost(self.rollout(U), U)

    def linearize(self, S, U):
        """
        Condense the shooting constraints around a trajectory.

        Returns:
            tuple[np.ndarray, np.ndarray]: G with dS[1:] = G dU + e, and e.
        """
        N, dt = self.cfg.N_p, self.cfg.dt
        d_state, d_control = _jacobians(S[:-1], U, self.V)
        A = np.eye(STATES)[None, :, :] + dt * d_state
        B = dt * d_control
        gaps = self.defects(S, U)
        G = np.zeros((N * STATES, N * CONTROLS))
        e = np.zeros((N, STATES))
        row = np.zeros((STATES, N * CONTROLS))
        previous = np.zeros(STATES)
        for n in range(N):
            row = A[n] @ row
            row[:, n * CONTROLS:(n + 1) * CONTROLS] = B[n]
            G[n * STATES:(n + 1) * STATES] = row
            previous = A[n] @ previous + gaps[n]
            e[n] = previous
        return G, e

    def gradient(self, U) -> np.ndarray:
        """Analytic gradient of ``objective`` with respect to the flattened controls."""
        U = np.asarray(U, dtype=float).reshape(self.cfg.N_p, CONTROLS)
        S = self.rollout(U)
        G, _ = self.linearize(S, U)
        weighted = np.einsum('nij,nj->ni', self.weights, S[1:] - self.s_d).ravel()
        effort = ((U - self.U_d) @ self.cfg.R_u).ravel()
        return 2 * (G.T @ weighted + effort)


def _block_diag(blocks) -> np.ndarray:
    size = blocks.shape[1]
    out = np.zeros((blocks.shape[0] * size, blocks.shape[0] * size))
    for index, block in enumerate(blocks):
        out[index * size:(index + 1) * size, index * size:(index + 1) * size] = block
    return out


def _state_bounds(s0, s_d, cfg: NmpcConfig):
    lower = cfg.s_lower.astype(float).copy()
    upper = cfg.s_upper.astype(float).copy()
    lower[PSI] = s_d[PSI] + cfg.s_lower[PSI]
    upper[PSI] = s_d[PSI] + cfg.s_upper[PSI]
    outside = np.maximum(lower - s0, s0 - upper)
    if np.any(outside > INITIAL_MARGIN):
        raise InfeasibleInitialState(
            f'initial features {s0} outside the box by {outside.max():.4f}',
        )
    return np.minimum(lower, s0), np.maximum(upper, s0)


def _qp_step(problem: HorizonProblem, S, U, bounds, weights, effort_weights, warm_active=()):
    cfg = problem.cfg
    G, e = problem.linearize(S, U)
    offset = (S[1:] + e - problem.s_d).ravel()
    hessian = G.T @ weights @ G + effort_weights
    linear = G.T @ weights @ offset + effort_weights @ (U - problem.U_d).ravel()
    lower, upper = bounds
    state_low = np.tile(lower, cfg.N_p) - (S[1:] + e).ravel()
    state_high = np.tile(upper, cfg.N_p) - (S[1:] + e).ravel()
    rows = np.vstack([G, -G])
    rhs = np.concatenate([state_high, -state_low])
    finite = np.isfinite(rhs)
    qp = QpProblem(
        H=(hessian + hessian.T) / 2,
        g=linear,
        A=rows[finite],
        b=rhs[finite],
        lower=np.tile(cfg.u_lower, cfg.N_p) - U.ravel(),
        upper=np.tile(cfg.u_upper, cfg.N_p) - U.ravel(),
    )
    try:
        solution = solve_qp(qp, warm_active=warm_active)
        step, active = solution.x, solution.active
    except QpInfeasible:
        logger.debug('Linearized feature box infeasible, keeping control bounds only')
        step, active = solve_qp(replace(qp, A=None, b=None)).x, ()
    step = step.reshape(cfg.N_p, CONTROLS)
    return step, (G @ step.ravel()).reshape(cfg.N_p, STATES) + e, active


def solve_ocp(
    s_k,
    u_d_init,
    gamma,
    cfg: NmpcConfig,
    warm: OcpSolution | None = None,
    s_d=None,
    strict: bool = False,
) -> OcpSolution:
    """
    Solve the horizon problem from the current features.

    Args:
        s_k (FeatureState): Current (estimated) features.
        u_d_init (ControlInput | Sequence[float]): Feed-forward control at the first node.
        gamma (Sequence[float]): Target acceleration, camera frame.
        cfg (NmpcConfig): Problem data.
        warm (OcpSolution | None): Previous solution, shifted for the warm start.
        s_d (FeatureState | None): Compensated reference, cfg.s_star by default.
        strict (bool): Raise instead of returning an unconverged iterate.

    Returns:
        OcpSolution: The solution; only its first control is meant to be applied.

    Raises:
        InfeasibleInitialState: If s_k is outside the feature box beyond the margin.
        NotConverged: In strict mode, when the iteration cap is reached.
    """
    s0 = s_k.as_array() if isinstance(s_k, FeatureState) else np.asarray(s_k, dtype=float)
    desired = (cfg.s_star if s_d is None else s_d).as_array()
    desired[PSI] = s0[PSI] + angle_diff(desired[PSI], s0[PSI])
    U_d = desired_controls(u_d_init, gamma, cfg)
    problem = HorizonProblem(s0, desired, U_d, cfg)
    bounds = _state_bounds(s0, desired, cfg)
    weights = _block_diag(problem.weights)
    effort_weights = np.kron(np.eye(cfg.N_p), cfg.R_u)

    if warm is not None:
        candidate = np.clip(warm.shifted(), cfg.u_lower, cfg.u_upper)
    else:
        candidate = np.clip(np.zeros_like(U_d), cfg.u_lower, cfg.u_upper)
    U = candidate.copy()
    S = problem.rollout(U)
    if warm is not None:
        S[1:-1] = warm.S_m[2:]
        S[1:-1, PSI] = s0[PSI] + angle_diff(S[1:-1, PSI], s0[PSI])
        S[-1] = problem.step(S[-2:-1], U[-1:])[0]
        S[1:, 2] = np.maximum(S[1:, 2], cfg.s_lower[2])

    converged = False
    iterations = 0
    active = ()
    for iterations in range(1, cfg.max_iterations + 1):
        step, state_step, active = _qp_step(
            problem, S, U, bounds, weights, effort_weights, active,
        )
        U = U + step
        S[1:] = S[1:] + state_step
        gap = np.max(np.abs(problem.defects(S, U)))
        small_step = np.max(np.abs(step)) <= cfg.tolerance * max(1.0, np.max(np.abs(U)))
        if small_step and gap <= cfg.tolerance:
            converged = True
            break

    S = problem.rollout(U)
    solution = OcpSolution(U, S, problem.cost(S, U), converged, iterations)
    baseline = problem.objective(candidate)
    if baseline < solution.cost:
        S_candidate = problem.rollout(candidate)
        solution = OcpSolution(candidate, S_candidate, baseline, converged, iterations)
    if not converged:
        logger.info('NMPC stopped after %d iterations (cost %.6g)', iterations, solution.cost)
        if strict:
            raise NotConverged(f'no convergence in {cfg.max_iterations} iterations', solution)
    return solution


@dataclass
class ControllerOutput:
    """What the tracker hands to the rest of the pipeline each tick."""

    command: ControlInput
    solution: OcpSolution | None
    epsilon: np.ndarray
    fallback: bool = False


class TrackingController:
    """Per-UAV tracker keeping the previous solution for warm starts and compensation."""

    def __init__(self, cfg: NmpcConfig):
        """
        Create a tracker.

        Args:
            cfg (NmpcConfig): Problem data, including the reference.
        """
        self.cfg = cfg
        self.previous: OcpSolution | None = None

    def _fallback(self, reason: str) -> ControlInput:
        logger.warning('NMPC fallback (%s)', reason)
        if self.previous is None:
            return ControlInput()
        shifted = self.previous.shifted()
        states = np.vstack([self.previous.S_m[1:], self.previous.S_m[-1:]])
        self.previous = replace(self.previous, U=shifted, S_m=states)
        return ControlInput.from_array(shifted[0])

    def command(self, s_ukf: FeatureState, v_q_cam, gamma_cam) -> ControllerOutput:
        """
        Compute this tick's nominal camera command.

        Args:
            s_ukf (FeatureState): Estimated features.
            v_q_cam (Sequence[float]): Estimated target velocity, camera frame.
            gamma_cam (Sequence[float]): Estimated target acceleration, camera frame.

        Returns:
            ControllerOutput: Command, solution and the applied model-error shift.
        """
        if self.previous is not None:
            s_model = FeatureState.from_array(self.previous.S_m[1])
        else:
            s_model = s_ukf
        s_d = compensate_error(s_ukf, s_model, self.cfg.s_star)
        epsilon = self.cfg.s_star.as_array() - s_d.as_array()
        epsilon[PSI] = wrap_angle(epsilon[PSI])
        u_d = np.concatenate([np.asarray(v_q_cam, dtype=float), [0.0]])
        try:
            solution = solve_ocp(
                s_ukf, u_d, gamma_cam, self.cfg, warm=self.previous, s_d=s_d, strict=True,
            )
        except NotConverged as error:
            command = self._fallback(str(error))
            return ControllerOutput(command, error.solution, epsilon, fallback=True)
        except InfeasibleInitialState as error:
            command = self._fallback(str(error))
            return ControllerOutput(command, None, epsilon, fallback=True)
        self.previous = solution
        return ControllerOutput(solution.first, solution, epsilon)
