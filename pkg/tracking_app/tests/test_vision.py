"""Module for testing the synthetic detector."""

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from tracking_app.geometry import angle_diff
from tracking_app.vision import (
    DEPTH_MIN,
    REASON_BEHIND,
    REASON_FOV,
    REASON_OCCLUDED,
    CameraIntrinsics,
    Detector,
    NoiseSpec,
)
from tracking_app.world import (
    AgentState, Obstacle, TargetScript, TargetSegment, TargetState, WorldState,
)

K = CameraIntrinsics(400.0, 400.0, 320.0, 240.0, 640, 480)
SCRIPT = TargetScript((TargetSegment(None, 0.5),))
NOISELESS = NoiseSpec(0.0, 0.0, 0.0, 0.0)
SAMPLES = 4000


def make_world(position=(-6.0, 0.0, 1.0), yaw=0.0, obstacles=()):
    """Return a world with one UAV behind a target driving east from the origin."""
    target = TargetState.start([0.0, 0.0, 0.0], 0.0, SCRIPT)
    agent = AgentState(list(position), yaw)
    return WorldState(0.0, (agent,), target, tuple(obstacles))


class TestIntrinsics(SimpleTestCase):
    """Test the pinhole intrinsics."""

    def test_rejects_bad_intrinsics(self):
        """Focal lengths and the principal point are checked."""
        with self.assertRaises(ValueError):
            CameraIntrinsics(0.0, 400.0, 320.0, 240.0, 640, 480)
        with self.assertRaises(ValueError):
            CameraIntrinsics(400.0, 400.0, 700.0, 240.0, 640, 480)

    def test_rejects_negative_noise(self):
        """Noise deviations cannot be negative."""
        with self.assertRaises(ValueError):
            NoiseSpec(sigma_px=-1.0)


class TestDetection(SimpleTestCase):
    """Test validity and the noiseless measurement."""

    def test_noiseless_measurement(self):
        """Without noise the detector returns the true projection."""
        detection = Detector(0, K, NOISELESS).detect(make_world())
        self.assertTrue(detection.valid)
        self.assertAlmostEqual(detection.u_bar, 320.0)
        self.assertAlmostEqual(detection.v_bar, 240.0 + 400.0 / 6)
        self.assertAlmostEqual(detection.d, np.sqrt(37.0))
        self.assertAlmostEqual(detection.psi_z, np.pi)
        assert_allclose(detection.r_c_z, [-6.0, 0.0, 1.0])

    def test_behind_camera(self):
        """A target behind the image plane is a dropout."""
        detection = Detector(0, K, NOISELESS).detect(make_world(position=(6.0, 0.0, 1.0)))
        self.assertFalse(detection.valid)
        self.assertEqual(detection.reason, REASON_BEHIND)
        self.assertTrue(np.isnan(detection.as_vector()).all())

    def test_outside_image(self):
        """A target projecting past the image border is a dropout."""
        detection = Detector(0, K, NOISELESS).detect(make_world(yaw=0.9))
        self.assertEqual(detection.reason, REASON_FOV)

    def test_occluded(self):
        """A box on the line of sight hides the target."""
        box = Obstacle([-3.0, 0.0, 0.5], [0.5, 0.5, 0.5])
        detection = Detector(0, K, NOISELESS).detect(make_world(obstacles=[box]))
        self.assertEqual(detection.reason, REASON_OCCLUDED)

    def test_box_extent(self):
        """The projected target box spans the expected pixels."""
        detector = Detector(0, K, NOISELESS, target_size=(4.0, 2.0, 1.5))
        detection = detector.detect(make_world())
        self.assertAlmostEqual(detection.box_w, 200.0)
        self.assertAlmostEqual(detection.box_h, 162.5)


class TestNoise(SimpleTestCase):
    """Test the measurement noise streams."""

    def test_deviations(self):
        """Sample deviations match the configured ones."""
        noise = NoiseSpec(2.0, 0.1, 0.05, 0.02, seed=11)
        detector = Detector(0, K, noise)
        world = make_world()
        samples = np.array([detector.detect(world).as_vector() for _ in range(SAMPLES)])
        self.assertAlmostEqual(samples[:, 0].std(), 2.0, delta=0.1)
        self.assertAlmostEqual(samples[:, 1].std(), 2.0, delta=0.1)
        self.assertAlmostEqual(samples[:, 2].std(), 0.1, delta=0.005)
        self.assertAlmostEqual(angle_diff(samples[:, 3], np.pi).std(), 0.05, delta=0.0025)
        assert_allclose(samples[:, 4:].std(axis=0), 0.02, rtol=0.05)
        assert_allclose(samples[:, 4:].mean(axis=0), [-6.0, 0.0, 1.0], atol=0.002)

    def test_draws_consumed_on_dropout(self):
        """A dropout consumes the same draws as a valid detection."""
        noise = NoiseSpec(seed=5)
        hidden = make_world(obstacles=[Obstacle([-3.0, 0.0, 0.5], [0.5, 0.5, 0.5])])
        clear = make_world()
        first, second = Detector(0, K, noise), Detector(0, K, noise)
        self.assertFalse(first.detect(hidden).valid)
        second.detect(clear)
        assert_allclose(first.detect(clear).as_vector(), second.detect(clear).as_vector())

    def test_independent_streams(self):
        """Each UAV has its own noise stream."""
        noise = NoiseSpec(seed=5)
        world = make_world()
        first = Detector(0, K, noise).detect(world)
        second = Detector(1, K, noise)
        second.agent_index = 0
        self.assertNotEqual(first.u_bar, second.detect(world).u_bar)

    def test_range_floor(self):
        """Huge range noise never reports a range below the floor."""
        detector = Detector(0, K, NoiseSpec(sigma_d=100.0, seed=2))
        samples = np.array([detector.detect(make_world()).as_vector() for _ in range(500)])
        self.assertGreaterEqual(samples[:, 2].min(), DEPTH_MIN)

    def test_border_noise_unbiased(self):
        """Near the image border the noisy center stays valid and unbiased."""
        world = make_world(yaw=0.66)
        u_true = Detector(0, K, NOISELESS).detect(world).u_bar
        self.assertLess(min(u_true, K.width - u_true), 20.0)
        detector = Detector(0, K, NoiseSpec(sigma_px=10.0, seed=3))
        detections = [detector.detect(world) for _ in range(SAMPLES)]
        self.assertTrue(all(detection.valid for detection in detections))
        u_bar = np.array([detection.u_bar for detection in detections])
        self.assertAlmostEqual(u_bar.mean(), u_true, delta=1.0)
        self.assertTrue(((u_bar < 0) | (u_bar > K.width)).any())
