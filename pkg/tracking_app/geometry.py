"""
Frames, rotations and the maps between relative geometry and image features.

Conventions:
    Global frame: x east, y north, z up.
    Camera frame: x right, y down, z along the optical axis.
    Matrices are numpy arrays in row-major order; ``R_cg`` maps camera-frame
    vectors into the global frame (``v_g = R_cg @ v_c``).
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from tracking_app.exceptions import DegenerateHeading, NonPositiveDepth

HEADING_SPEED_MIN = 1e-3
ROTATION_TOLERANCE = 1e-9

# Columns are the camera axes expressed in the body frame (x forward, y left, z up).
CAMERA_IN_BODY = np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
])


def wrap_angle(angle):
    """
    Wrap an angle (or an array of angles) to (-pi, pi].

    Args:
        angle (float | np.ndarray): Angle in radians.

    Returns:
        float | np.ndarray: Equivalent angle in (-pi, pi].
    """
    return np.pi - np.mod(np.pi - angle, 2 * np.pi)


def angle_diff(first, second):
    """
    Return the shortest-arc difference ``first - second``.

    Args:
        first (float | np.ndarray): Minuend in radians.
        second (float | np.ndarray): Subtrahend in radians.

    Returns:
        float | np.ndarray: Difference wrapped to (-pi, pi].
    """
    return wrap_angle(np.subtract(first, second))


@dataclass(frozen=True)
class RelativePosition:
    """Target position relative to the camera, camera frame, meters."""

    X: float
    Y: float
    Z: float

    def as_array(self) -> np.ndarray:
        """
        Return the position as a 3-vector.

        Returns:
            np.ndarray: (X, Y, Z).
        """
        return np.array([self.X, self.Y, self.Z])


@dataclass(frozen=True)
class FeatureState:
    """Image features (x1, x2, x3) and the relative angle psi."""

    x1: float
    x2: float
    x3: float
    psi: float

    @classmethod
    def from_array(cls, values) -> 'FeatureState':
        """
        Build a feature state from a 4-vector, wrapping psi.

        Args:
            values (Sequence[float]): (x1, x2, x3, psi).

        Returns:
            FeatureState: The feature state.
        """
        x1, x2, x3, psi = (float(value) for value in values)
        return cls(x1, x2, x3, float(wrap_angle(psi)))

    def as_array(self) -> np.ndarray:
        """
        Return the state as a 4-vector.

        Returns:
            np.ndarray: (x1, x2, x3, psi).
        """
        return np.array([self.x1, self.x2, self.x3, self.psi])


@dataclass(frozen=True)
class ControlInput:
    """Camera-frame command: linear velocity and the yaw-axis rate omega_cy."""

    v_cx: float = 0.0
    v_cy: float = 0.0
    v_cz: float = 0.0
    w_cy: float = 0.0

    @classmethod
    def from_array(cls, values) -> 'ControlInput':
        """
        Build a command from a 4-vector.

        Args:
            values (Sequence[float]): (v_cx, v_cy, v_cz, w_cy).

        Returns:
            ControlInput: The command.
        """
        return cls(*(float(value) for value in values))

    def as_array(self) -> np.ndarray:
        """
        Return the command as a 4-vector.

        Returns:
            np.ndarray: (v_cx, v_cy, v_cz, w_cy).
        """
        return np.array([self.v_cx, self.v_cy, self.v_cz, self.w_cy])

    @property
    def velocity(self) -> np.ndarray:
        """Linear velocity block (camera frame)."""
        return np.array([self.v_cx, self.v_cy, self.v_cz])

    @property
    def angular(self) -> np.ndarray:
        """Angular velocity (camera frame) with omega_cx = omega_cz = 0."""
        return np.array([0.0, self.w_cy, 0.0])


@dataclass(frozen=True)
class ControlInputGlobal:
    """Global-frame command u^g = [V; omega]."""

    V: np.ndarray
    omega: np.ndarray

    @classmethod
    def from_array(cls, values) -> 'ControlInputGlobal':
        """
        Build a command from a 6-vector.

        Args:
            values (Sequence[float]): (Vx, Vy, Vz, wx, wy, wz).

        Returns:
            ControlInputGlobal: The command.
        """
        values = np.asarray(values, dtype=float)
        return cls(values[:3].copy(), values[3:].copy())

    @classmethod
    def zero(cls) -> 'ControlInputGlobal':
        """Return the all-zero (hover) command."""
        return cls(np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        """
        Return the command as a 6-vector.

        Returns:
            np.ndarray: (Vx, Vy, Vz, wx, wy, wz).
        """
        return np.concatenate([self.V, self.omega])


def relative_position(r_q, r_c) -> RelativePosition:
    """
    Return the position of the target relative to the camera.

    Args:
        r_q (Sequence[float]): Target position.
        r_c (Sequence[float]): Camera position, in the same frame as r_q.

    Returns:
        RelativePosition: r_q - r_c.
    """
    diff = np.asarray(r_q, dtype=float) - np.asarray(r_c, dtype=float)
    return RelativePosition(*diff)


def features_from_relative(rel: RelativePosition) -> tuple[float, float, float]:
    """
    Convert a camera-frame relative position into image features.

    Args:
        rel (RelativePosition): Target relative to the camera.

    Returns:
        tuple[float, float, float]: (X/Z, Y/Z, 1/Z).

    Raises:
        NonPositiveDepth: If the target is not in front of the camera.
    """
    if rel.Z <= 0:
        raise NonPositiveDepth(f'Z = {rel.Z}')
    return rel.X / rel.Z, rel.Y / rel.Z, 1 / rel.Z


def range_from_features(s) -> float:
    """
    Return the camera-target distance implied by the features.

    Args:
        s (FeatureState | Sequence[float]): Features; only x1, x2, x3 are used.

    Returns:
        float: sqrt(1 + x1^2 + x2^2) / x3.

    Raises:
        NonPositiveDepth: If x3 is not positive.
    """
    x1, x2, x3 = (s.x1, s.x2, s.x3) if isinstance(s, FeatureState) else s[:3]
    if x3 <= 0:
        raise NonPositiveDepth(f'x3 = {x3}')
    return float(np.sqrt(1 + x1 ** 2 + x2 ** 2) / x3)


def relative_position_from_features(x1: float, x2: float, x3: float) -> np.ndarray:
    """Invert the feature map: (x1/x3, x2/x3, 1/x3)."""
    if x3 <= 0:
        raise NonPositiveDepth(f'x3 = {x3}')
    return np.array([x1, x2, 1.0]) / x3


def heading_from_velocity(v_q, fallback: float | None = None) -> float:
    """
    Return the planar heading of a velocity vector.

    Args:
        v_q (Sequence[float]): Velocity, global frame.
        fallback (float | None): Heading to return when the speed is too low.

    Returns:
        float: atan2(v_y, v_x), or the fallback.

    Raises:
        DegenerateHeading: If the planar speed is below the threshold and no
            fallback is given.
    """
    speed = np.hypot(v_q[0], v_q[1])
    if speed < HEADING_SPEED_MIN:
        if fallback is None:
            raise DegenerateHeading(f'planar speed {speed:.2e} m/s')
        return float(fallback)
    return float(np.arctan2(v_q[1], v_q[0]))


def relative_angle(p_c, p_q, v_q, fallback_heading: float | None = None) -> float:
    """
    Return the angle between the target heading and the target-to-camera bearing.

    Args:
        p_c (Sequence[float]): Camera position, global frame.
        p_q (Sequence[float]): Target position, global frame.
        v_q (Sequence[float]): Target velocity, global frame.
        fallback_heading (float | None): Last well-defined target heading.

    Returns:
        float: Relative angle psi in (-pi, pi].

    Raises:
        DegenerateHeading: If the target is (nearly) stationary and no
            fallback heading is given.
    """
    heading = heading_from_velocity(v_q, fallback_heading)
    bearing = np.arctan2(p_c[1] - p_q[1], p_c[0] - p_q[0])
    return float(wrap_angle(bearing - heading))


def hat(w) -> np.ndarray:
    """
    Return the skew-symmetric matrix with ``hat(w) @ v == cross(w, v)``.

    Args:
        w (Sequence[float]): 3-vector.

    Returns:
        np.ndarray: 3x3 skew-symmetric matrix.
    """
    wx, wy, wz = w
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def camera_rotation(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """
    Return the camera-to-global rotation for a body attitude.

    Args:
        yaw (float): Body yaw, radians.
        pitch (float): Camera mount pitch, radians (positive tilts down).
        roll (float): Camera mount roll, radians.

    Returns:
        np.ndarray: R_cg.
    """
    body = Rotation.from_euler('ZYX', [yaw, pitch, roll]).as_matrix()
    return body @ CAMERA_IN_BODY


def is_rotation(matrix, tolerance: float = ROTATION_TOLERANCE) -> bool:
    """Check orthonormality and a +1 determinant."""
    matrix = np.asarray(matrix, dtype=float)
    orthonormal = np.allclose(matrix @ matrix.T, np.eye(3), atol=tolerance, rtol=0)
    return orthonormal and abs(np.linalg.det(matrix) - 1) <= tolerance
