"""Module for testing the target estimator."""

import numpy as np
from django.test import SimpleTestCase
from filterpy.kalman import KalmanFilter
from numpy.testing import assert_allclose

from tracking_app.estimator import (
    MotionWindow,
    TargetEstimator,
    UkfConfig,
    X3_MAX,
    estimated_range,
    fit_motion,
    initial_state,
    jittered_cholesky,
    make_ukf,
    measurement_model,
    process_model,
    ukf_step,
)
from tracking_app.exceptions import CovarianceNotPSD, NonPositiveDepth
from tracking_app.geometry import ControlInput, camera_rotation
from tracking_app.vision import CameraIntrinsics, Detection, NoiseSpec

K = CameraIntrinsics(381.36, 381.36, 320.0, 240.0, 640, 480)
DT = 0.0125
LEVEL = camera_rotation(0.0)
NOISELESS = NoiseSpec(0.0, 0.0, 0.0, 0.0)
FIT_TRIALS = 100


def chase_detection(t: float) -> Detection:
    """Detection of a target 6 m ahead and 1 m below, both moving east at 0.5 m/s."""
    return Detection(
        valid=True,
        u_bar=K.c_u,
        v_bar=K.c_v + K.f_y / 6,
        d=np.sqrt(37.0),
        psi_z=np.pi,
        r_c_z=np.array([0.5 * t, 0.0, 1.0]),
    )


def chase_state(t: float) -> np.ndarray:
    """True state of the chase geometry."""
    return np.array([0.0, 1 / 6, 1 / 6, np.pi, 6 + 0.5 * t, 0.0, 0.0, 0.5, 0.0, 0.0])


class TestModels(SimpleTestCase):
    """Test the process and measurement models."""

    def setUp(self):
        """Set up a generic state and command."""
        self.x = np.array([0.1, 0.2, 0.2, 0.5, 1.0, 2.0, 0.0, 0.3, 0.4, 0.0])
        self.u = ControlInput(0.3, -0.2, 0.5, 0.1)
        self.R = camera_rotation(0.4)

    def test_measurement_example(self):
        """The chase geometry predicts its own detection."""
        predicted = measurement_model(chase_state(0.0), K, LEVEL)
        assert_allclose(predicted, chase_detection(0.0).as_vector(), atol=1e-12)

    def test_initial_state_inverts_measurement(self):
        """Initialization inverts the measurement model."""
        detection = chase_detection(2.0)
        x0, P0 = initial_state(detection, K, LEVEL, NoiseSpec(), velocity=[0.5, 0, 0])
        assert_allclose(x0, chase_state(2.0), atol=1e-12)
        self.assertTrue(np.all(np.diag(P0) > 0))

    def test_co_moving_is_stationary(self):
        """Matching the target velocity leaves the features unchanged."""
        stepped = process_model(chase_state(0.0), ControlInput(0.0, 0.0, 0.5, 0.0), DT, LEVEL)
        assert_allclose(stepped[:4], chase_state(0.0)[:4], atol=1e-12)
        assert_allclose(stepped[4:], chase_state(DT)[4:], atol=1e-12)

    def test_euler_truncation(self):
        """One step deviates from the fine solution at second order."""
        errors = []
        for dt in (0.1, 0.05):
            fine = self.x.copy()
            for _ in range(2000):
                fine = process_model(fine, self.u, dt / 2000, self.R)
            errors.append(np.linalg.norm(process_model(self.x, self.u, dt, self.R) - fine))
        self.assertGreater(errors[0] / errors[1], 3.5)
        self.assertLess(errors[0] / errors[1], 4.5)

    def test_non_positive_depth(self):
        """Both models reject x3 <= 0."""
        bad = self.x.copy()
        bad[2] = 0.0
        with self.assertRaises(NonPositiveDepth):
            process_model(bad, self.u, DT)
        with self.assertRaises(NonPositiveDepth):
            measurement_model(bad, K)


class TestUnscentedFilter(SimpleTestCase):
    """Test the filter machinery."""

    def test_weights(self):
        """Mean weights sum to one."""
        points = UkfConfig().sigma_points()
        self.assertAlmostEqual(points.Wm.sum(), 1.0)
        self.assertEqual(points.num_sigmas(), 21)

    def test_linear_model_matches_kalman(self):
        """On a linear model the filter reproduces the Kalman filter."""
        F = np.array([[1.0, DT], [0.0, 1.0]])
        H = np.array([[1.0, 0.0]])
        Q, R = np.diag([1e-4, 1e-3]), np.array([[0.04]])
        cfg = UkfConfig(Q=Q, R=R)
        ukf = make_ukf(2, 1, lambda x, dt: F @ x, lambda x: H @ x, cfg, None, None)
        ukf.x, ukf.P = np.array([0.0, 1.0]), np.eye(2)
        kf = KalmanFilter(dim_x=2, dim_z=1)
        kf.x, kf.P, kf.F, kf.H, kf.Q, kf.R = np.array([0.0, 1.0]), np.eye(2), F, H, Q, R
        rng = np.random.default_rng(13)
        for step in range(40):
            z = np.array([step * DT + rng.normal(scale=0.2)])
            ukf.predict(dt=DT)
            ukf.update(z)
            kf.predict()
            kf.update(z)
        assert_allclose(ukf.x, kf.x, rtol=1e-8, atol=1e-10)
        assert_allclose(ukf.P, kf.P, rtol=1e-8, atol=1e-12)

    def test_jittered_cholesky(self):
        """Singular matrices get jitter, indefinite ones are rejected."""
        factor = jittered_cholesky(np.ones((3, 3)))
        assert_allclose(factor.T @ factor, np.ones((3, 3)), atol=1e-6)
        with self.assertRaises(CovarianceNotPSD), self.assertLogs('tracking_app.estimator'):
            jittered_cholesky(-np.eye(3))


class TestTargetEstimator(SimpleTestCase):
    """Test the per-UAV estimator."""

    def setUp(self):
        """Set up an estimator on the chase geometry."""
        self.command = ControlInput(0.0, 0.0, 0.5, 0.0)
        self.estimator = TargetEstimator(UkfConfig(), K, DT, NOISELESS)
        self.estimator.initialize_from(chase_detection(0.0), LEVEL, velocity=[0.5, 0.0, 0.0])

    def test_tracks_co_moving_target(self):
        """Noiseless detections keep the estimate on the truth across psi = pi."""
        for step in range(1, 81):
            state = self.estimator.step(self.command, chase_detection(step * DT), LEVEL, LEVEL)
        truth = chase_state(80 * DT)
        assert_allclose(state.features.as_array()[:3], truth[:3], atol=1e-3)
        self.assertAlmostEqual(abs(state.features.psi), np.pi, delta=1e-3)
        assert_allclose(state.r_q, truth[4:7], atol=1e-2)
        self.assertAlmostEqual(estimated_range(state), np.sqrt(37.0), delta=0.05)

    def test_dropout_predicts_only(self):
        """An invalid detection grows the covariance."""
        before = np.trace(self.estimator.state.P)
        state = self.estimator.step(self.command, Detection.dropout('fov'), LEVEL, LEVEL)
        self.assertGreater(np.trace(state.P), before)
        assert_allclose(state.r_q, chase_state(DT)[4:7], atol=1e-9)

    def test_dropout_recovery(self):
        """After a one-second dropout three detections restore the estimate."""
        for step in range(1, 41):
            self.estimator.step(self.command, chase_detection(step * DT), LEVEL, LEVEL)
        before = np.linalg.norm(self.estimator.state.r_q - chase_state(40 * DT)[4:7])
        for _ in range(80):
            self.estimator.step(self.command, Detection.dropout('occluded'), LEVEL, LEVEL)
        for step in range(121, 124):
            state = self.estimator.step(self.command, chase_detection(step * DT), LEVEL, LEVEL)
        after = np.linalg.norm(state.r_q - chase_state(123 * DT)[4:7])
        self.assertLess(after, max(2 * before, 1e-2))

    def test_depth_clamp(self):
        """A runaway inverse depth is clamped and flagged."""
        x0 = chase_state(0.0)
        x0[2] = 9.99
        self.estimator.initialize(x0, np.eye(10) * 1e-8)
        rushing = ControlInput(0.0, 0.0, 100.0, 0.0)
        state = self.estimator.step(rushing, Detection.dropout('fov'), LEVEL, LEVEL)
        self.assertTrue(state.clamped)
        self.assertEqual(state.features.x3, X3_MAX)

    def test_functional_step(self):
        """The functional step matches the stateful one."""
        prior = self.estimator.state
        detection = chase_detection(DT)
        posterior, P = ukf_step(
            prior, self.command, detection, UkfConfig(),
            K=K, dt=DT, R_prev=LEVEL, R_now=LEVEL, noise=NOISELESS,
        )
        expected = self.estimator.step(self.command, detection, LEVEL, LEVEL)
        assert_allclose(posterior.as_vector(), expected.as_vector())
        assert_allclose(P, expected.P)


class TestMotionWindow(SimpleTestCase):
    """Test the sliding polynomial fit."""

    def test_quadratic_motion(self):
        """Velocity and acceleration of a parabola are recovered."""
        window = MotionWindow(1.0)
        for step in range(200):
            t = step * DT
            position = np.array([1 + 0.5 * t + 0.1 * t ** 2, -t, 2.0])
            window.push(t, position, np.zeros(3))
        velocity, acceleration = fit_motion(window)
        t = 199 * DT
        assert_allclose(velocity, [0.5 + 0.2 * t, -1.0, 0.0], atol=1e-9)
        assert_allclose(acceleration, [0.2, 0.0, 0.0], atol=1e-9)
        self.assertAlmostEqual(window.span, 1.0)
        self.assertEqual(len(window), 81)

    def test_noisy_linear_motion(self):
        """Centimeter position noise on straight motion keeps the fitted acceleration small."""
        rng = np.random.default_rng(47)
        velocity = np.array([0.5, -0.3, 0.1])
        for _ in range(FIT_TRIALS):
            window = MotionWindow(1.0)
            start = rng.uniform(-5, 5, 3)
            for step in range(100):
                t = step * DT
                noisy = start + velocity * t + rng.normal(scale=0.01, size=3)
                window.push(t, noisy, velocity)
            fitted_velocity, acceleration = fit_motion(window)
            self.assertLess(np.linalg.norm(acceleration), 0.5)
            self.assertLess(np.linalg.norm(fitted_velocity - velocity), 0.15)

    def test_too_few_samples(self):
        """A short window falls back to the latest estimated velocity."""
        window = MotionWindow()
        window.push(0.0, np.zeros(3), [0.5, 0.0, 0.0])
        window.push(DT, np.zeros(3), [0.6, 0.0, 0.0])
        velocity, acceleration = fit_motion(window)
        assert_allclose(velocity, [0.6, 0.0, 0.0])
        assert_allclose(acceleration, 0.0)

    def test_time_must_increase(self):
        """Samples must be pushed in time order."""
        window = MotionWindow()
        window.push(1.0, np.zeros(3), np.zeros(3))
        with self.assertRaises(ValueError):
            window.push(1.0, np.zeros(3), np.zeros(3))
