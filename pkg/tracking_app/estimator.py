"""
Per-UAV unscented Kalman filter over image features and target motion.

State layout (10): x1, x2, x3, psi, r_q (3, global), V_q (3, global).
Measurement layout (7): u, v, range, psi, camera position (3, global).
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints, UnscentedKalmanFilter
from numpy.polynomial import polynomial
from scipy.linalg import LinAlgError, cholesky

from tracking_app.exceptions import CovarianceNotPSD, InsufficientSamples, NonPositiveDepth
from tracking_app.geometry import (
    ControlInput, FeatureState, range_from_features, relative_position_from_features, wrap_angle,
)
from tracking_app.vision import CameraIntrinsics, Detection, NoiseSpec

logger = logging.getLogger(__name__)

STATE_DIM = 10
MEASUREMENT_DIM = 7
PSI = 3
POSITION = slice(4, 7)
VELOCITY = slice(7, 10)
X3_MIN = 1e-4
X3_MAX = 10.0
JITTER = 1e-9
JITTER_ATTEMPTS = 3
VARIANCE_FLOOR = 1e-6
INITIAL_VELOCITY_VARIANCE = 1.0
WINDOW_SECONDS = 1.0
WINDOW_MIN_SAMPLES = 4
WINDOW_MIN_SPAN = 0.25
POLYNOMIAL_DEGREE = 2


def jittered_cholesky(matrix: np.ndarray) -> np.ndarray:
    """
    Return the upper Cholesky factor, adding diagonal jitter if needed.

    Args:
        matrix (np.ndarray): Symmetric matrix.

    Returns:
        np.ndarray: Upper-triangular U with U.T @ U = matrix (+ jitter).

    Raises:
        CovarianceNotPSD: If the factorization fails after every jitter attempt.
    """
    current = np.asarray(matrix, dtype=float)
    for attempt in range(JITTER_ATTEMPTS + 1):
        try:
            return cholesky(current, lower=False)
        except LinAlgError:
            if attempt == JITTER_ATTEMPTS:
                break
            logger.debug('Cholesky failed, adding jitter (attempt %d)', attempt + 1)
            current = current + JITTER * np.eye(current.shape[0])
    logger.error('Covariance is not positive semidefinite')
    raise CovarianceNotPSD(f'no Cholesky factor after {JITTER_ATTEMPTS} jitter attempts')


def angular_residual(first, second, index: int | None = PSI) -> np.ndarray:
    """Difference of two vectors with shortest-arc wrapping of one component."""
    diff = np.subtract(first, second)
    if index is not None:
        diff[index] = wrap_angle(diff[index])
    return diff


def angular_mean(sigmas, weights, index: int | None = PSI) -> np.ndarray:
    """
    Weighted mean of sigma points, circular in one component.

    The angle is averaged as offsets from the first sigma point, which is the
    prior mean, so that points straddling +-pi average correctly.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    mean = weights @ sigmas
    if index is not None:
        reference = sigmas[0, index]
        offsets = wrap_angle(sigmas[:, index] - reference)
        mean[index] = wrap_angle(reference + weights @ offsets)
    return mean


def state_derivative(x, velocity, omega, R_cg) -> np.ndarray:
    """
    Continuous-time flow of the 10-state.

    Args:
        x (np.ndarray): State.
        velocity (np.ndarray): Camera linear velocity, camera frame.
        omega (np.ndarray): Camera angular velocity, camera frame.
        R_cg (np.ndarray): Camera-to-global rotation used to express V_q.

    Returns:
        np.ndarray: dx/dt.
    """
    x1, x2, x3 = x[0], x[1], x[2]
    v_q = R_cg.T @ x[VELOCITY]
    rel = v_q - velocity
    w_x, w_y, w_z = omega
    derivative = np.zeros(STATE_DIM)
    derivative[0] = rel[0] * x3 - rel[2] * x1 * x3 + x1 * x2 * w_x - (1 + x1 ** 2) * w_y + x2 * w_z
    derivative[1] = rel[1] * x3 - rel[2] * x2 * x3 + (1 + x2 ** 2) * w_x - x1 * x2 * w_y - x1 * w_z
    derivative[2] = -rel[2] * x3 ** 2 + (w_x * x2 - w_y * x1) * x3
    derivative[PSI] = -rel[0] * x3 / np.sqrt(1 + x1 ** 2 + x2 ** 2)
    derivative[POSITION] = x[VELOCITY]
    return derivative


def _transition(x, dt, u=None, R_cg=None):
    command = ControlInput() if u is None else u
    rotation = np.eye(3) if R_cg is None else R_cg
    stepped = x + dt * state_derivative(x, command.velocity, command.angular, rotation)
    stepped[PSI] = wrap_angle(stepped[PSI])
    return stepped


def process_model(x, u: ControlInput, dt: float, R_cg=None) -> np.ndarray:
    """
    Forward-Euler step of the state flow.

    Args:
        x (np.ndarray): State with x3 > 0.
        u (ControlInput): Camera command applied over the step.
        dt (float): Step in seconds.
        R_cg (np.ndarray | None): Camera-to-global rotation, identity if omitted.

    Returns:
        np.ndarray: Predicted state.

    Raises:
        NonPositiveDepth: If x3 is not positive.
    """
    x = np.asarray(x, dtype=float)
    if x[2] <= 0:
        raise NonPositiveDepth(f'x3 = {x[2]}')
    return _transition(x, dt, u, R_cg)


def _observe(x, K: CameraIntrinsics, R_cg=None):
    rotation = np.eye(3) if R_cg is None else R_cg
    x1, x2, x3 = x[0], x[1], x[2]
    camera = x[POSITION] - rotation @ (np.array([x1, x2, 1.0]) / x3)
    return np.array([
        K.f_x * x1 + K.c_u,
        K.f_y * x2 + K.c_v,
        np.sqrt(1 + x1 ** 2 + x2 ** 2) / x3,
        x[PSI],
        *camera,
    ])


def measurement_model(x, K: CameraIntrinsics, R_cg=None) -> np.ndarray:
    """
    Predict the detection implied by a state.

    Args:
        x (np.ndarray): State with x3 > 0.
        K (CameraIntrinsics): Intrinsics.
        R_cg (np.ndarray | None): Camera-to-global rotation, identity if omitted.

    Returns:
        np.ndarray: (u, v, range, psi, camera position).

    Raises:
        NonPositiveDepth: If x3 is not positive.
    """
    x = np.asarray(x, dtype=float)
    if x[2] <= 0:
        raise NonPositiveDepth(f'x3 = {x[2]}')
    return _observe(x, K, R_cg)


@dataclass(frozen=True, eq=False)
class UkfConfig:
    """
    Sigma-point parameters and noise covariances.

    Attributes:
        alpha (float): Spread of the sigma points, in (0, 1].
        beta (float): Prior distribution knowledge (2 for Gaussian).
        kappa (float): Secondary scaling.
        Q (np.ndarray): 10x10 process covariance per step.
        R (np.ndarray): 7x7 measurement covariance.
    """

    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0
    Q: np.ndarray = field(default_factory=lambda: default_process_covariance(1 / 80))
    R: np.ndarray = field(default_factory=lambda: measurement_covariance(NoiseSpec()))

    def __post_init__(self):
        """Check the sigma-point spread."""
        if not 0 < self.alpha <= 1:
            raise ValueError(f'alpha = {self.alpha} outside (0, 1]')

    def sigma_points(self, dim: int = STATE_DIM) -> MerweScaledSigmaPoints:
        """Merwe scaled sigma points with the jittered square root."""
        return MerweScaledSigmaPoints(
            dim, alpha=self.alpha, beta=self.beta, kappa=self.kappa, sqrt_method=jittered_cholesky,
        )


def default_process_covariance(dt: float, feature=1e-4, psi=1e-4, position=1e-3, velocity=1e-2):
    """Diagonal process covariance scaled by the step."""
    return np.diag([feature] * 3 + [psi] + [position] * 3 + [velocity] * 3) * dt


def measurement_covariance(noise: NoiseSpec) -> np.ndarray:
    """Diagonal measurement covariance from the detector noise, floored."""
    return np.diag(np.maximum(noise.deviations ** 2, VARIANCE_FLOOR))


def make_ukf(dim_x, dim_z, fx, hx, cfg: UkfConfig, state_angle=PSI, measurement_angle=PSI):
    """
    Build a filterpy UKF with circular handling of one state and one measurement entry.

    Args:
        dim_x (int): State size.
        dim_z (int): Measurement size.
        fx (Callable): Transition ``fx(x, dt, **kwargs)``.
        hx (Callable): Measurement ``hx(x, **kwargs)``.
        cfg (UkfConfig): Sigma-point parameters; Q and R are copied when sizes match.
        state_angle (int | None): Index of the angle in the state.
        measurement_angle (int | None): Index of the angle in the measurement.

    Returns:
        UnscentedKalmanFilter: The filter.
    """
    ukf = UnscentedKalmanFilter(
        dim_x=dim_x,
        dim_z=dim_z,
        dt=None,
        hx=hx,
        fx=fx,
        points=cfg.sigma_points(dim_x),
        x_mean_fn=partial(angular_mean, index=state_angle),
        z_mean_fn=partial(angular_mean, index=measurement_angle),
        residual_x=partial(angular_residual, index=state_angle),
        residual_z=partial(angular_residual, index=measurement_angle),
    )
    if cfg.Q.shape == (dim_x, dim_x):
        ukf.Q = cfg.Q.copy()
    if cfg.R.shape == (dim_z, dim_z):
        ukf.R = cfg.R.copy()
    return ukf


@dataclass(frozen=True, eq=False)
class EstimatorState:
    """Snapshot of one estimator."""

    features: FeatureState
    r_q: np.ndarray
    V_q: np.ndarray
    P: np.ndarray
    clamped: bool = False

    @classmethod
    def from_vector(cls, x, P, clamped: bool = False) -> 'EstimatorState':
        """Split a 10-vector into named blocks."""
        return cls(
            FeatureState.from_array(x[:4]),
            x[POSITION].copy(),
            x[VELOCITY].copy(),
            P.copy(),
            clamped,
        )

    def as_vector(self) -> np.ndarray:
        """Stack back into a 10-vector."""
        return np.concatenate([self.features.as_array(), self.r_q, self.V_q])


def initial_state(
    detection: Detection, K: CameraIntrinsics, R_cg, noise: NoiseSpec, velocity=None,
):
    """
    Invert a valid detection into a state mean and covariance.

    Args:
        detection (Detection): A valid detection.
        K (CameraIntrinsics): Intrinsics.
        R_cg (np.ndarray): Camera-to-global rotation at the detection.
        noise (NoiseSpec): Detector noise, sets the initial spread.
        velocity (Sequence[float] | None): Known target velocity, zero otherwise.

    Returns:
        tuple[np.ndarray, np.ndarray]: (x0, P0).
    """
    x1 = (detection.u_bar - K.c_u) / K.f_x
    x2 = (detection.v_bar - K.c_v) / K.f_y
    x3 = np.sqrt(1 + x1 ** 2 + x2 ** 2) / detection.d
    r_q = detection.r_c_z + R_cg @ relative_position_from_features(x1, x2, x3)
    v_q = np.zeros(3) if velocity is None else np.asarray(velocity, dtype=float)
    x0 = np.concatenate([[x1, x2, x3, detection.psi_z], r_q, v_q])
    spread = np.array([
        (noise.sigma_px / K.f_x) ** 2,
        (noise.sigma_px / K.f_y) ** 2,
        (noise.sigma_d * x3 ** 2) ** 2,
        noise.sigma_psi ** 2,
        *([noise.sigma_gps ** 2 + noise.sigma_d ** 2] * 3),
        *([0.0 if velocity is not None else INITIAL_VELOCITY_VARIANCE] * 3),
    ])
    return x0, np.diag(np.maximum(spread, VARIANCE_FLOOR))


class TargetEstimator:
    """
    UKF of one UAV; predicts every tick and updates on valid detections.

    Attributes:
        ukf (UnscentedKalmanFilter): The underlying filter, None until initialized.
        clamped (bool): Whether x3 was clamped at the last step.
    """

    def __init__(self, cfg: UkfConfig, K: CameraIntrinsics, dt: float, noise: NoiseSpec):
        """
        Create an uninitialized estimator.

        Args:
            cfg (UkfConfig): Filter parameters.
            K (CameraIntrinsics): Intrinsics.
            dt (float): Step in seconds.
            noise (NoiseSpec): Detector noise, used for initialization.
        """
        self.cfg = cfg
        self.K = K
        self.dt = dt
        self.noise = noise
        self.ukf = None
        self.clamped = False

    @property
    def initialized(self) -> bool:
        """Whether a state exists."""
        return self.ukf is not None

    def initialize(self, x0, P0) -> None:
        """Seed the filter with a mean and covariance."""
        self.ukf = make_ukf(
            STATE_DIM, MEASUREMENT_DIM, _transition, partial(_observe, K=self.K), self.cfg,
        )
        self.ukf.x = np.asarray(x0, dtype=float).copy()
        self.ukf.P = np.asarray(P0, dtype=float).copy()

    def initialize_from(self, detection: Detection, R_cg, velocity=None) -> None:
        """Seed the filter from the first valid detection."""
        self.initialize(*initial_state(detection, self.K, R_cg, self.noise, velocity))

    def _condition(self, stage: str) -> None:
        ukf = self.ukf
        x3 = ukf.x[2]
        bounded = float(np.clip(x3, X3_MIN, X3_MAX))
        if bounded != x3:
            logger.info('x3 clamped after %s: %.6g -> %.6g', stage, x3, bounded)
            ukf.x[2] = bounded
            self.clamped = True
        ukf.x[PSI] = wrap_angle(ukf.x[PSI])
        ukf.P = (ukf.P + ukf.P.T) / 2

    def step(self, u: ControlInput, detection: Detection, R_prev, R_now) -> EstimatorState:
        """
        Predict over one step and update if the detection is valid.

        Args:
            u (ControlInput): Command applied over the step.
            detection (Detection): Measurement at the end of the step.
            R_prev (np.ndarray): Camera rotation at the start of the step.
            R_now (np.ndarray): Camera rotation at the measurement.

        Returns:
            EstimatorState: The posterior.
        """
        self.clamped = False
        self.ukf.predict(dt=self.dt, u=u, R_cg=R_prev)
        self._condition('predict')
        if detection.valid:
            self.ukf.update(detection.as_vector(), R_cg=R_now)
            self._condition('update')
        return self.state

    @property
    def state(self) -> EstimatorState:
        """The current posterior."""
        return EstimatorState.from_vector(self.ukf.x, self.ukf.P, self.clamped)


def ukf_step(
    state: EstimatorState, u: ControlInput, detection: Detection, cfg: UkfConfig, **context,
):
    """
    Functional form of one estimator step.

    Args:
        state (EstimatorState): Prior.
        u (ControlInput): Command applied over the step.
        detection (Detection): Measurement.
        cfg (UkfConfig): Filter parameters.
        **context: ``K``, ``dt`` and the rotations ``R_prev`` and ``R_now``.

    Returns:
        tuple[EstimatorState, np.ndarray]: Posterior state and covariance.
    """
    noise = context.get('noise', NoiseSpec())
    estimator = TargetEstimator(cfg, context['K'], context['dt'], noise)
    estimator.initialize(state.as_vector(), state.P)
    posterior = estimator.step(u, detection, context['R_prev'], context['R_now'])
    return posterior, posterior.P


class MotionWindow:
    """Sliding window of estimated target positions and velocities."""

    def __init__(self, seconds: float = WINDOW_SECONDS):
        """
        Create an empty window.

        Args:
            seconds (float): Length of the window.
        """
        self.seconds = seconds
        self.samples = deque()

    def __len__(self) -> int:
        """Number of samples held."""
        return len(self.samples)

    def push(self, t: float, r_q, V_q) -> None:
        """
        Append a sample and drop the ones older than the window.

        Raises:
            ValueError: If t does not increase.
        """
        if self.samples and t <= self.samples[-1][0]:
            raise ValueError(f'sample time {t} does not increase')
        position = np.asarray(r_q, dtype=float).copy()
        self.samples.append((t, position, np.asarray(V_q, dtype=float).copy()))
        while self.samples[0][0] < t - self.seconds - 1e-9:
            self.samples.popleft()

    @property
    def span(self) -> float:
        """Time between the oldest and newest samples."""
        if not self.samples:
            return 0.0
        return self.samples[-1][0] - self.samples[0][0]

    def polynomial(self) -> np.ndarray:
        """
        Least-squares quadratic per axis in time relative to the newest sample.

        Returns:
            np.ndarray: 3x3 coefficients, row k multiplies tau^k.

        Raises:
            InsufficientSamples: Below 4 samples or a 0.25 s span.
        """
        if len(self.samples) < WINDOW_MIN_SAMPLES or self.span < WINDOW_MIN_SPAN:
            raise InsufficientSamples(f'{len(self.samples)} samples over {self.span:.3f} s')
        newest = self.samples[-1][0]
        tau = np.array([sample[0] - newest for sample in self.samples])
        positions = np.array([sample[1] for sample in self.samples])
        return polynomial.polyfit(tau, positions, POLYNOMIAL_DEGREE)


def fit_motion(window: MotionWindow) -> tuple[np.ndarray, np.ndarray]:
    """
    Estimate the target velocity and acceleration at the newest sample.

    Args:
        window (MotionWindow): Recent estimates.

    Returns:
        tuple[np.ndarray, np.ndarray]: (velocity, acceleration); with too few
            samples, the latest estimated velocity and zero.
    """
    try:
        coefficients = window.polynomial()
    except InsufficientSamples:
        latest = window.samples[-1][2] if window.samples else np.zeros(3)
        return latest.copy(), np.zeros(3)
    return coefficients[1].copy(), 2 * coefficients[2]


def estimated_range(state: EstimatorState) -> float:
    """Camera-target distance implied by the estimate."""
    return range_from_features(state.features)
