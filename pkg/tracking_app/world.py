"""Ground-truth world: single-integrator UAVs, a scripted target and static boxes."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from tracking_app.exceptions import ScriptExhausted
from tracking_app.geometry import ControlInputGlobal, camera_rotation, wrap_angle

logger = logging.getLogger(__name__)

TIME_EPSILON = 1e-9
PARALLEL_EPSILON = 1e-15


@dataclass(frozen=True, eq=False)
class AgentState:
    """
    A UAV with its camera.

    Attributes:
        p (np.ndarray): Position, global frame, meters.
        yaw (float): Body yaw, radians.
        pitch (float): Camera mount pitch, radians.
        roll (float): Camera mount roll, radians.
    """

    p: np.ndarray
    yaw: float
    pitch: float = 0.0
    roll: float = 0.0
    R_cg: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        """Normalize the position and build the camera rotation."""
        object.__setattr__(self, 'p', np.asarray(self.p, dtype=float).copy())
        object.__setattr__(self, 'R_cg', camera_rotation(self.yaw, self.pitch, self.roll))


@dataclass(frozen=True)
class TargetSegment:
    """
    One piece of the scripted target motion.

    Attributes:
        duration (float | None): Seconds; None means open-ended.
        speed (float): Speed along the heading, m/s.
        lateral_accel (float): Centripetal acceleration, m/s^2 (positive turns left).
    """

    duration: float | None
    speed: float
    lateral_accel: float = 0.0

    @property
    def turn_rate(self) -> float:
        """Heading rate a_lat / speed; zero for a stationary segment."""
        if self.speed == 0:
            return 0.0
        return self.lateral_accel / self.speed


@dataclass(frozen=True)
class TargetScript:
    """Ordered target segments, played back from t = 0."""

    segments: tuple[TargetSegment, ...]

    @property
    def total_duration(self) -> float | None:
        """Scripted length in seconds, None if the last segment is open-ended."""
        if not self.segments or self.segments[-1].duration is None:
            return None
        return float(sum(segment.duration for segment in self.segments))

    def segment_at(self, t: float) -> TargetSegment:
        """
        Return the segment active at time t.

        Args:
            t (float): Seconds since the start of the script.

        Returns:
            TargetSegment: The active segment.

        Raises:
            ScriptExhausted: If t lies past the final segment.
        """
        start = 0.0
        for segment in self.segments:
            if segment.duration is None or t + TIME_EPSILON < start + segment.duration:
                return segment
            start += segment.duration
        raise ScriptExhausted(f'no segment at t = {t:.4f} s (script ends at {start:.4f} s)')


@dataclass(frozen=True, eq=False)
class TargetState:
    """
    Ground-truth target.

    Attributes:
        position (np.ndarray): Global frame, meters.
        velocity (np.ndarray): Global frame, m/s.
        heading (float): Direction of travel, radians.
        time (float): Seconds of script already played.
        exhausted (bool): Whether the script ran out and the last velocity is held.
    """

    position: np.ndarray
    velocity: np.ndarray
    heading: float
    time: float = 0.0
    exhausted: bool = False

    @classmethod
    def start(cls, position, heading: float, script: TargetScript) -> 'TargetState':
        """
        Place the target at the start of its script.

        Args:
            position (Sequence[float]): Initial position.
            heading (float): Initial heading, radians.
            script (TargetScript): The script to play.

        Returns:
            TargetState: State at t = 0.
        """
        speed = script.segment_at(0.0).speed if script.segments else 0.0
        return cls(
            position=np.asarray(position, dtype=float).copy(),
            velocity=speed * np.array([np.cos(heading), np.sin(heading), 0.0]),
            heading=float(wrap_angle(heading)),
        )


@dataclass(frozen=True, eq=False)
class Obstacle:
    """An axis-aligned static box."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        """Normalize to float arrays and check the extents."""
        object.__setattr__(self, 'center', np.asarray(self.center, dtype=float).copy())
        object.__setattr__(
            self, 'half_extents', np.asarray(self.half_extents, dtype=float).copy(),
        )
        if np.any(self.half_extents <= 0):
            raise ValueError(f'half extents must be positive, got {self.half_extents}')

    @property
    def lower(self) -> np.ndarray:
        """Minimum corner."""
        return self.center - self.half_extents

    @property
    def upper(self) -> np.ndarray:
        """Maximum corner."""
        return self.center + self.half_extents

    @property
    def circumradius(self) -> float:
        """Distance from the center to a corner."""
        return float(np.linalg.norm(self.half_extents))

    def contains(self, point) -> bool:
        """Closed-set membership test."""
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.lower) and np.all(point <= self.upper))

    def distance_to(self, point) -> float:
        """
        Return the Euclidean distance from a point to the box surface.

        Args:
            point (Sequence[float]): Query point.

        Returns:
            float: Zero for points inside the box.
        """
        offset = np.abs(np.asarray(point, dtype=float) - self.center) - self.half_extents
        return float(np.linalg.norm(np.maximum(offset, 0.0)))


@dataclass(frozen=True, eq=False)
class WorldState:
    """Snapshot of the simulated world at one tick."""

    time: float
    agents: tuple[AgentState, ...]
    target: TargetState
    obstacles: tuple[Obstacle, ...] = ()


def step_agent(agent: AgentState, u_global: ControlInputGlobal, dt: float) -> AgentState:
    """
    Advance a single-integrator UAV by one forward-Euler step.

    Args:
        agent (AgentState): Current state.
        u_global (ControlInputGlobal): Global-frame command.
        dt (float): Step in seconds.

    Returns:
        AgentState: The next state; the camera mount attitude is preserved.

    Raises:
        ValueError: If dt is not positive.
    """
    if dt <= 0:
        raise ValueError(f'dt must be positive, got {dt}')
    position = agent.p + np.asarray(u_global.V, dtype=float) * dt
    position[2] = max(position[2], 0.0)
    yaw = float(wrap_angle(agent.yaw + u_global.omega[2] * dt))
    return AgentState(position, yaw, agent.pitch, agent.roll)


def step_target(target: TargetState, dt: float, script: TargetScript) -> TargetState:
    """
    Advance the scripted target by one forward-Euler step.

    Position moves with the velocity held at the start of the step, then the
    heading turns at the segment's rate. Past the final segment the last
    velocity is held.

    Args:
        target (TargetState): Current state.
        dt (float): Step in seconds.
        script (TargetScript): Target script.

    Returns:
        TargetState: The next state.
    """
    position = target.position + target.velocity * dt
    try:
        segment = script.segment_at(target.time)
    except ScriptExhausted as error:
        if not target.exhausted:
            logger.warning('Target script exhausted, holding last velocity: %s', error)
        return replace(target, position=position, time=target.time + dt, exhausted=True)

    heading = float(wrap_angle(target.heading + segment.turn_rate * dt))
    velocity = segment.speed * np.array([np.cos(heading), np.sin(heading), 0.0])
    return replace(
        target, position=position, velocity=velocity, heading=heading, time=target.time + dt,
    )


def segment_box_intersects(p0, p1, box: Obstacle) -> bool:
    """
    Test whether the closed segment p0 -> p1 touches an axis-aligned box.

    Args:
        p0 (Sequence[float]): Segment start.
        p1 (Sequence[float]): Segment end.
        box (Obstacle): The box.

    Returns:
        bool: True iff some point of the segment lies in the closed box.
    """
    start = np.asarray(p0, dtype=float)
    direction = np.asarray(p1, dtype=float) - start
    t_enter, t_exit = 0.0, 1.0
    for axis in range(3):
        low, high = box.lower[axis], box.upper[axis]
        if abs(direction[axis]) < PARALLEL_EPSILON:
            if start[axis] < low or start[axis] > high:
                return False
            continue
        t_low = (low - start[axis]) / direction[axis]
        t_high = (high - start[axis]) / direction[axis]
        t_enter = max(t_enter, min(t_low, t_high))
        t_exit = min(t_exit, max(t_low, t_high))
        if t_enter > t_exit:
            return False
    return True
