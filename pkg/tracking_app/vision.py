"""Synthetic detector: noisy box center, range and relative angle from ground truth."""

from dataclasses import dataclass
from itertools import product

import numpy as np

from tracking_app.exceptions import NonPositiveDepth
from tracking_app.geometry import (
    RelativePosition, features_from_relative, relative_angle, wrap_angle,
)
from tracking_app.world import WorldState, segment_box_intersects

DEPTH_MIN = 1e-3
REASON_BEHIND = 'behind'
REASON_FOV = 'fov'
REASON_OCCLUDED = 'occluded'
MEASUREMENT_DRAWS = 7


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics and image size, pixels."""

    f_x: float
    f_y: float
    c_u: float
    c_v: float
    width: int
    height: int

    def __post_init__(self):
        """Reject non-physical intrinsics."""
        if self.f_x <= 0 or self.f_y <= 0:
            raise ValueError('focal lengths must be positive')
        if not (0 < self.c_u < self.width and 0 < self.c_v < self.height):
            raise ValueError('principal point must lie inside the image')

    def in_image(self, u: float, v: float) -> bool:
        """Closed-set test against the image rectangle."""
        return 0 <= u <= self.width and 0 <= v <= self.height


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the measurement noise and the stream seed."""

    sigma_px: float = 2.0
    sigma_d: float = 0.1
    sigma_psi: float = 0.05
    sigma_gps: float = 0.02
    seed: int = 0

    def __post_init__(self):
        """All deviations must be non-negative."""
        if min(self.sigma_px, self.sigma_d, self.sigma_psi, self.sigma_gps) < 0:
            raise ValueError('noise deviations must be non-negative')

    @property
    def deviations(self) -> np.ndarray:
        """Per-draw standard deviations in the order u, v, d, psi, gps x3."""
        return np.array([
            self.sigma_px, self.sigma_px, self.sigma_d, self.sigma_psi,
            self.sigma_gps, self.sigma_gps, self.sigma_gps,
        ])


@dataclass(frozen=True, eq=False)
class Detection:
    """
    One measurement of the target by one UAV.

    Attributes:
        valid (bool): False on a dropout; the numeric fields are then NaN.
        u_bar (float): Box center, pixels.
        v_bar (float): Box center, pixels.
        d (float): Range to the target, meters.
        psi_z (float): Relative angle, radians.
        r_c_z (np.ndarray): Camera position from GPS, meters.
        box_w (float): Projected box width, pixels (visualization only).
        box_h (float): Projected box height, pixels (visualization only).
        reason (str): Why the detection is invalid, empty if valid.
    """

    valid: bool
    u_bar: float = np.nan
    v_bar: float = np.nan
    d: float = np.nan
    psi_z: float = np.nan
    r_c_z: np.ndarray = None
    box_w: float = np.nan
    box_h: float = np.nan
    reason: str = ''

    @classmethod
    def dropout(cls, reason: str) -> 'Detection':
        """Return an invalid detection."""
        return cls(valid=False, r_c_z=np.full(3, np.nan), reason=reason)

    def as_vector(self) -> np.ndarray:
        """Measurement vector (u, v, d, psi, r_c)."""
        return np.concatenate([[self.u_bar, self.v_bar, self.d, self.psi_z], self.r_c_z])


def project(rel: RelativePosition, K: CameraIntrinsics) -> tuple[float, float]:
    """
    Project a camera-frame point onto the image.

    Args:
        rel (RelativePosition): Point relative to the camera.
        K (CameraIntrinsics): Intrinsics.

    Returns:
        tuple[float, float]: Pixel coordinates (u, v).

    Raises:
        NonPositiveDepth: If the point is not in front of the camera.
    """
    x1, x2, _ = features_from_relative(rel)
    return K.f_x * x1 + K.c_u, K.f_y * x2 + K.c_v


def box_extent(rel_center, R_cg, heading: float, size, K: CameraIntrinsics) -> tuple[float, float]:
    """
    Project the target's oriented bounding box and return its pixel extent.

    Args:
        rel_center (np.ndarray): Target center relative to the camera, global frame.
        R_cg (np.ndarray): Camera-to-global rotation.
        heading (float): Target heading, radians.
        size (Sequence[float]): Target length, width and height, meters.
        K (CameraIntrinsics): Intrinsics.

    Returns:
        tuple[float, float]: Width and height in pixels, NaN if a corner is
            behind the camera.
    """
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    body_to_global = np.array([[cos_h, -sin_h, 0.0], [sin_h, cos_h, 0.0], [0.0, 0.0, 1.0]])
    half = np.asarray(size, dtype=float) / 2
    corners = np.array(list(product((-1, 1), repeat=3))) * half
    in_camera = (rel_center + corners @ body_to_global.T) @ R_cg
    if np.any(in_camera[:, 2] <= 0):
        return np.nan, np.nan
    us = K.f_x * in_camera[:, 0] / in_camera[:, 2]
    vs = K.f_y * in_camera[:, 1] / in_camera[:, 2]
    return float(np.ptp(us)), float(np.ptp(vs))


def detect(
    world: WorldState,
    agent_index: int,
    K: CameraIntrinsics,
    noise: NoiseSpec,
    rng: np.random.Generator | None = None,
    target_size=None,
) -> Detection:
    """
    Measure the target from one UAV.

    The detection is invalid exactly when the target is behind the camera,
    projects outside the image or is hidden behind an obstacle box. Seven
    normal draws are consumed on every call so that noise streams stay
    aligned across dropouts. Validity depends on the true projection only, so a
    noisy center near the border may fall slightly outside the image.

    Args:
        world (WorldState): Ground truth.
        agent_index (int): The observing UAV.
        K (CameraIntrinsics): Intrinsics.
        noise (NoiseSpec): Noise model.
        rng (np.random.Generator | None): Noise stream; seeded from ``noise.seed`` if omitted.
        target_size (Sequence[float] | None): Box size for the logged extent.

    Returns:
        Detection: The measurement.
    """
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    perturbation = rng.standard_normal(MEASUREMENT_DRAWS) * noise.deviations

    agent = world.agents[agent_index]
    target = world.target
    rel_global = target.position - agent.p
    rel = RelativePosition(*(rel_global @ agent.R_cg))
    if rel.Z <= 0:
        return Detection.dropout(REASON_BEHIND)
    try:
        u_true, v_true = project(rel, K)
    except NonPositiveDepth:
        return Detection.dropout(REASON_BEHIND)
    if not K.in_image(u_true, v_true):
        return Detection.dropout(REASON_FOV)
    if any(segment_box_intersects(agent.p, target.position, box) for box in world.obstacles):
        return Detection.dropout(REASON_OCCLUDED)

    psi_true = relative_angle(
        agent.p, target.position, target.velocity, fallback_heading=target.heading,
    )
    box_w, box_h = np.nan, np.nan
    if target_size is not None:
        box_w, box_h = box_extent(rel_global, agent.R_cg, target.heading, target_size, K)
    return Detection(
        valid=True,
        u_bar=float(u_true + perturbation[0]),
        v_bar=float(v_true + perturbation[1]),
        d=float(max(np.linalg.norm(rel_global) + perturbation[2], DEPTH_MIN)),
        psi_z=float(wrap_angle(psi_true + perturbation[3])),
        r_c_z=agent.p + perturbation[4:],
        box_w=box_w,
        box_h=box_h,
    )


class Detector:
    """Per-UAV detector owning an independent seeded noise stream."""

    def __init__(self, agent_index: int, K: CameraIntrinsics, noise: NoiseSpec, target_size=None):
        """
        Create the detector of one UAV.

        Args:
            agent_index (int): The observing UAV.
            K (CameraIntrinsics): Intrinsics.
            noise (NoiseSpec): Noise model; its seed and the agent index select the stream.
            target_size (Sequence[float] | None): Box size for the logged extent.
        """
        self.agent_index = agent_index
        self.K = K
        self.noise = noise
        self.target_size = target_size
        self.rng = np.random.default_rng([noise.seed, agent_index])

    def detect(self, world: WorldState) -> Detection:
        """Measure the target in the given world snapshot."""
        return detect(world, self.agent_index, self.K, self.noise, self.rng, self.target_size)
