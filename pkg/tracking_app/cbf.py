"""
Control barrier function rows for collision, connectivity and occlusion.

Every row acts on the global command ``u_g = [V; omega]`` and reads
``A @ u_g <= b``. Only the velocity block is ever non-zero. Each agent builds
its rows from its own position, its estimate of the target and the positions
of the neighbors it can hear, nothing else.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from tracking_app.exceptions import DegenerateGeometry, DegenerateRange

logger = logging.getLogger(__name__)

KIND_SAFETY = 'safety'
KIND_CONNECTIVITY = 'connectivity'
KIND_OCCLUSION = 'occlusion'
KINDS = (KIND_SAFETY, KIND_CONNECTIVITY, KIND_OCCLUSION)

AGENT_SHARE = 0.5
OBSTACLE_SHARE = 1.0
NORM_MIN = 1e-9
COSINE_CLAMP = 1 - 1e-6
ANGLE_DEGENERATE = 1e-3
# Neighbors slightly past R_c stay linked so their connectivity rows pull them back.
LINK_MARGIN = 0.1


@dataclass(frozen=True)
class CbfParams:
    """
    Barrier radii, gains and actuator bounds.

    Attributes:
        R_s (float): Safety radius, meters.
        R_c (float): Connectivity radius, meters.
        D_s (float): Consideration distance for collision rows, meters.
        theta_star (float): Occlusion margin, radians.
        gamma_s (float): Collision gain.
        gamma_c (float): Connectivity gain.
        gamma_o (float): Occlusion gain.
        alpha_v (float): Speed bound, m/s.
        alpha_omega (float): Angular rate bound, rad/s.
    """

    R_s: float = 2.0
    R_c: float = 20.0
    D_s: float = 20.0
    theta_star: float = np.pi / 6
    gamma_s: float = 3.0
    gamma_c: float = 1.0
    gamma_o: float = 0.1
    alpha_v: float = 10.0
    alpha_omega: float = 0.6

    def check(self) -> None:
        """
        Validate the radii ordering, the margin and the collision-gain gate.

        Raises:
            DegenerateRange: If D_s does not exceed R_s.
            ValueError: On any other inconsistency.
        """
        bound = gamma_s_lower_bound(self)
        if self.D_s > self.R_c:
            raise ValueError(f'D_s = {self.D_s} exceeds R_c = {self.R_c}')
        if not 0 < self.theta_star < np.pi / 2:
            raise ValueError(f'theta_star = {self.theta_star} outside (0, pi/2)')
        if self.gamma_s < bound:
            raise ValueError(f'gamma_s = {self.gamma_s} below the lower bound {bound:.6f}')


@dataclass(frozen=True, eq=False)
class HalfspaceConstraint:
    """
    One admissible-control row ``A @ u_g <= b``.

    Attributes:
        A (np.ndarray): 6-vector acting on [V; omega].
        b (float): Right-hand side.
        kind (str): One of ``KINDS``.
        h (float): Barrier value at the current state.
        partner (str): Agent or obstacle the row protects against.
    """

    A: np.ndarray
    b: float
    kind: str
    h: float
    partner: str = ''

    def slack(self, u_global) -> float:
        """Surplus ``b - A @ u_g``; negative means violated."""
        return float(self.b - self.A @ np.asarray(u_global, dtype=float))


@dataclass(frozen=True, eq=False)
class NeighborView:
    """
    What one agent is allowed to know when building its rows.

    Attributes:
        index (int): The agent.
        position (np.ndarray): Its own position.
        neighbors (dict[int, np.ndarray]): Positions of agents within R_c + LINK_MARGIN.
        obstacles (tuple): Known static obstacles.
    """

    index: int
    position: np.ndarray
    neighbors: dict = field(default_factory=dict)
    obstacles: tuple = ()

    @classmethod
    def from_world(cls, world, index: int, params: CbfParams) -> 'NeighborView':
        """
        Cut the view of one agent out of a world snapshot.

        Args:
            world (WorldState): Snapshot.
            index (int): The agent.
            params (CbfParams): Supplies the communication radius.

        Returns:
            NeighborView: The agent's view.
        """
        own = world.agents[index].p
        neighbors = {
            other: agent.p.copy()
            for other, agent in enumerate(world.agents)
            if other != index and np.linalg.norm(agent.p - own) <= params.R_c + LINK_MARGIN
        }
        return cls(index, own.copy(), neighbors, tuple(world.obstacles))


def _velocity_row(velocity_block) -> np.ndarray:
    return np.concatenate([velocity_block, np.zeros(3)])


def neighbor_sets(view: NeighborView, params: CbfParams, target_position):
    """
    Return the collision, connectivity and occlusion index sets of one agent.

    Args:
        view (NeighborView): The agent's view.
        params (CbfParams): Radii.
        target_position (Sequence[float]): Estimated target position.

    Returns:
        tuple[list[int], list[int], list[int]]: Agent indices within D_s,
            agent indices within R_c + LINK_MARGIN, obstacle indices no farther than
            the target.
    """
    own = view.position
    distances = {
        other: float(np.linalg.norm(own - position)) for other, position in view.neighbors.items()
    }
    safety = sorted(other for other, dist in distances.items() if dist <= params.D_s)
    link = params.R_c + LINK_MARGIN
    connectivity = sorted(other for other, dist in distances.items() if dist <= link)
    target_range = np.linalg.norm(np.asarray(target_position, dtype=float) - own)
    occlusion = [
        index
        for index, obstacle in enumerate(view.obstacles)
        if np.linalg.norm(obstacle.center - own) <= target_range
    ]
    return safety, connectivity, occlusion


def collision_constraint(
    p_i, p_j, params: CbfParams, radius: float | None = None, share: float = AGENT_SHARE,
    partner: str = '',
) -> HalfspaceConstraint:
    """
    Build the collision row of agent i against j.

    With h = |p_i - p_j|^2 - R^2 the pairwise condition
    ``dh/dt >= -gamma_s h`` is split so each agent of a pair takes half; a
    static partner contributes no velocity so the agent takes all of it.

    Args:
        p_i (Sequence[float]): Own position.
        p_j (Sequence[float]): Partner position.
        params (CbfParams): Gains and radii.
        radius (float | None): Keep-out radius, R_s by default.
        share (float): Fraction of the budget assigned to agent i.
        partner (str): Partner label.

    Returns:
        HalfspaceConstraint: The row.
    """
    radius = params.R_s if radius is None else radius
    offset = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    h = float(offset @ offset - radius ** 2)
    return HalfspaceConstraint(
        A=_velocity_row(-2 * offset),
        b=share * params.gamma_s * h,
        kind=KIND_SAFETY,
        h=h,
        partner=partner,
    )


def obstacle_collision_constraint(p_i, obstacle, params: CbfParams, partner: str = ''):
    """Collision row against a static box, inflated by its circumradius."""
    return collision_constraint(
        p_i,
        obstacle.center,
        params,
        radius=params.R_s + obstacle.circumradius,
        share=OBSTACLE_SHARE,
        partner=partner,
    )


def gamma_s_lower_bound(params: CbfParams) -> float:
    """
    Return the smallest collision gain compatible with the speed bound.

    Args:
        params (CbfParams): Radii and speed bound.

    Returns:
        float: 4 alpha_v R_s / (D_s^2 - R_s^2).

    Raises:
        DegenerateRange: If D_s does not exceed R_s.
    """
    if params.D_s <= params.R_s:
        raise DegenerateRange(f'D_s = {params.D_s} must exceed R_s = {params.R_s}')
    return 4 * params.alpha_v * params.R_s / (params.D_s ** 2 - params.R_s ** 2)


def connectivity_constraint(p_i, p_j, params: CbfParams, partner: str = '') -> HalfspaceConstraint:
    """
    Build agent i's half of the connectivity condition with j.

    Args:
        p_i (Sequence[float]): Own position.
        p_j (Sequence[float]): Partner position.
        params (CbfParams): Gains and radii.
        partner (str): Partner label.

    Returns:
        HalfspaceConstraint: h = R_c^2 - |p_i - p_j|^2, A = [2(p_i - p_j), 0], b = gamma_c h / 2.
    """
    offset = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    h = float(params.R_c ** 2 - offset @ offset)
    return HalfspaceConstraint(
        A=_velocity_row(2 * offset),
        b=AGENT_SHARE * params.gamma_c * h,
        kind=KIND_CONNECTIVITY,
        h=h,
        partner=partner,
    )


def occlusion_angle(p_i, p_o, n_i) -> float:
    """
    Return the angle between the camera-obstacle ray and the line of sight.

    Args:
        p_i (Sequence[float]): Camera position.
        p_o (Sequence[float]): Obstacle position.
        n_i (Sequence[float]): Camera-to-target vector.

    Returns:
        float: Angle in [0, pi].

    Raises:
        DegenerateGeometry: If either vector has (numerically) zero length.
    """
    offset = np.asarray(p_o, dtype=float) - np.asarray(p_i, dtype=float)
    sight = np.asarray(n_i, dtype=float)
    offset_norm, sight_norm = np.linalg.norm(offset), np.linalg.norm(sight)
    if offset_norm < NORM_MIN or sight_norm < NORM_MIN:
        raise DegenerateGeometry(
            f'|p_o - p_i| = {offset_norm:.2e}, |n_i| = {sight_norm:.2e}',
        )
    cosine = np.clip(offset @ sight / (offset_norm * sight_norm), -1.0, 1.0)
    return float(np.arccos(cosine))


def occlusion_constraint(
    p_i, p_o, n_i, params: CbfParams, partner: str = '',
) -> HalfspaceConstraint:
    """
    Build the occlusion row keeping the angle above theta_star.

    The obstacle is static and the line of sight is held fixed over the
    step, so dh/dt = grad_p(theta) @ V. On the sight line itself the
    gradient is undefined and a row forbidding any approach to the obstacle
    is returned instead.

    Args:
        p_i (Sequence[float]): Camera position.
        p_o (Sequence[float]): Obstacle position.
        n_i (Sequence[float]): Camera-to-target vector.
        params (CbfParams): theta_star and gamma_o.
        partner (str): Obstacle label.

    Returns:
        HalfspaceConstraint: The row, h = theta - theta_star.
    """
    theta = occlusion_angle(p_i, p_o, n_i)
    h = theta - params.theta_star
    offset = np.asarray(p_o, dtype=float) - np.asarray(p_i, dtype=float)
    offset_norm = np.linalg.norm(offset)
    if theta < ANGLE_DEGENERATE:
        logger.info('Obstacle %s on the line of sight, using the radial row', partner)
        return HalfspaceConstraint(
            A=_velocity_row(offset / offset_norm), b=0.0, kind=KIND_OCCLUSION, h=h,
            partner=partner,
        )
    if theta > np.pi - ANGLE_DEGENERATE:
        return HalfspaceConstraint(
            A=np.zeros(6), b=params.gamma_o * h, kind=KIND_OCCLUSION, h=h, partner=partner,
        )

    sight = np.asarray(n_i, dtype=float)
    sight_norm = np.linalg.norm(sight)
    cosine = offset @ sight / (offset_norm * sight_norm)
    cosine = float(np.clip(cosine, -COSINE_CLAMP, COSINE_CLAMP))
    gradient = sight / (offset_norm * sight_norm) - offset * cosine / offset_norm ** 2
    return HalfspaceConstraint(
        A=_velocity_row(-gradient / np.sqrt(1 - cosine ** 2)),
        b=params.gamma_o * h,
        kind=KIND_OCCLUSION,
        h=h,
        partner=partner,
    )


def build_constraints(view: NeighborView, params: CbfParams, target_position) -> list:
    """
    Assemble every row of one agent for the current tick.

    Args:
        view (NeighborView): The agent's view.
        params (CbfParams): Gains and radii.
        target_position (Sequence[float] | None): Estimated target position;
            without one no occlusion rows are built.

    Returns:
        list[HalfspaceConstraint]: Safety rows (agents then obstacles),
            connectivity rows, then occlusion rows.
    """
    own = view.position
    if target_position is None:
        sight = None
        safety, connectivity, _ = neighbor_sets(view, params, own)
        occlusion = []
    else:
        sight = np.asarray(target_position, dtype=float) - own
        safety, connectivity, occlusion = neighbor_sets(view, params, target_position)
    rows = [
        collision_constraint(own, view.neighbors[other], params, partner=f'agent{other}')
        for other in safety
    ]
    rows.extend(
        obstacle_collision_constraint(own, obstacle, params, partner=f'obstacle{index}')
        for index, obstacle in enumerate(view.obstacles)
        if np.linalg.norm(obstacle.center - own) <= params.D_s
    )
    rows.extend(
        connectivity_constraint(own, view.neighbors[other], params, partner=f'agent{other}')
        for other in connectivity
    )
    for index in occlusion:
        try:
            rows.append(occlusion_constraint(
                own, view.obstacles[index].center, sight, params, partner=f'obstacle{index}',
            ))
        except DegenerateGeometry as error:
            logger.warning('Skipping occlusion row for obstacle %s: %s', index, error)
    return rows
