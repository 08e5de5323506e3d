"""Module for testing frames, angles and feature maps."""

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from tracking_app.exceptions import DegenerateHeading, NonPositiveDepth
from tracking_app.geometry import (
    ControlInput,
    ControlInputGlobal,
    FeatureState,
    RelativePosition,
    angle_diff,
    camera_rotation,
    features_from_relative,
    hat,
    heading_from_velocity,
    is_rotation,
    range_from_features,
    relative_angle,
    relative_position,
    relative_position_from_features,
    wrap_angle,
)

RANDOM_TRIALS = 200


class TestAngles(SimpleTestCase):
    """Test angle wrapping."""

    def test_wrap_interval(self):
        """Wrapped angles lie in (-pi, pi]."""
        self.assertAlmostEqual(wrap_angle(np.pi), np.pi)
        self.assertAlmostEqual(wrap_angle(-np.pi), np.pi)
        self.assertAlmostEqual(wrap_angle(3 * np.pi), np.pi)
        self.assertAlmostEqual(wrap_angle(0.5 + 4 * np.pi), 0.5)

    def test_wrap_array(self):
        """Arrays are wrapped element-wise."""
        wrapped = wrap_angle(np.array([0.0, 2 * np.pi, -1.5 * np.pi]))
        assert_allclose(wrapped, [0, 0, np.pi / 2], atol=1e-12)

    def test_angle_diff_shortest_arc(self):
        """Differences across the cut take the short way round."""
        self.assertAlmostEqual(angle_diff(np.pi - 0.1, -np.pi + 0.1), -0.2)


class TestFeatureMaps(SimpleTestCase):
    """Test the maps between relative positions and features."""

    def test_features(self):
        """Features are X/Z, Y/Z and 1/Z."""
        features = features_from_relative(RelativePosition(1.0, 2.0, 4.0))
        self.assertEqual(features, (0.25, 0.5, 0.25))

    def test_behind_camera(self):
        """A point at or behind the camera plane has no features."""
        with self.assertRaises(NonPositiveDepth):
            features_from_relative(RelativePosition(1.0, 0.0, 0.0))
        with self.assertRaises(NonPositiveDepth):
            range_from_features([0.0, 0.0, -1.0])

    def test_range(self):
        """The range accounts for the off-axis features."""
        self.assertAlmostEqual(range_from_features(FeatureState(0.0, 0.0, 0.5, 0.0)), 2.0)
        self.assertAlmostEqual(range_from_features([0.75, 0.0, 0.2]), 6.25)

    def test_inverse(self):
        """Features invert back to the relative position."""
        rng = np.random.default_rng(3)
        for _ in range(RANDOM_TRIALS):
            rel = RelativePosition(*rng.uniform(-5, 5, 2), rng.uniform(0.5, 30))
            x1, x2, x3 = features_from_relative(rel)
            restored = relative_position_from_features(x1, x2, x3)
            assert_allclose(restored, rel.as_array(), rtol=1e-12)

    def test_relative_position(self):
        """Relative position is target minus camera."""
        self.assertEqual(relative_position([1, 2, 3], [1, 1, 1]), RelativePosition(0.0, 1.0, 2.0))

    def test_feature_state_wraps(self):
        """Building from an array wraps psi."""
        state = FeatureState.from_array([0.0, 0.1, 0.2, 3 * np.pi])
        self.assertAlmostEqual(state.psi, np.pi)
        assert_allclose(state.as_array(), [0.0, 0.1, 0.2, np.pi])


class TestRelativeAngle(SimpleTestCase):
    """Test the relative angle between heading and bearing."""

    def test_side_and_trailing(self):
        """A UAV on the left sees pi/2, a trailing UAV sees pi."""
        self.assertAlmostEqual(relative_angle([0, 6, 1], [0, 0, 0], [0.5, 0, 0]), np.pi / 2)
        self.assertAlmostEqual(relative_angle([-6, 0, 1], [0, 0, 0], [0.5, 0, 0]), np.pi)
        self.assertAlmostEqual(relative_angle([0, -6, 1], [0, 0, 0], [0.5, 0, 0]), -np.pi / 2)

    def test_stationary_target(self):
        """A parked target needs a fallback heading."""
        with self.assertRaises(DegenerateHeading):
            relative_angle([0, 6, 1], [0, 0, 0], [0, 0, 0])
        self.assertAlmostEqual(
            relative_angle([0, 6, 1], [0, 0, 0], [0, 0, 0], fallback_heading=np.pi / 2), 0.0,
        )

    def test_heading(self):
        """Heading ignores vertical motion."""
        self.assertAlmostEqual(heading_from_velocity([0.0, 1.0, 5.0]), np.pi / 2)


class TestRotations(SimpleTestCase):
    """Test skew matrices and camera rotations."""

    def test_hat_cross(self):
        """hat(w) v equals w x v."""
        rng = np.random.default_rng(5)
        for _ in range(RANDOM_TRIALS):
            w, v = rng.normal(size=3), rng.normal(size=3)
            assert_allclose(hat(w) @ v, np.cross(w, v), atol=1e-12)

    def test_level_camera_axes(self):
        """At zero yaw the camera looks along x with its y axis pointing down."""
        R = camera_rotation(0.0)
        assert_allclose(R @ [0, 0, 1], [1, 0, 0], atol=1e-12)
        assert_allclose(R @ [0, 1, 0], [0, 0, -1], atol=1e-12)
        assert_allclose(R @ [1, 0, 0], [0, -1, 0], atol=1e-12)

    def test_yaw_turns_optical_axis(self):
        """A quarter turn of yaw points the camera north."""
        assert_allclose(camera_rotation(np.pi / 2) @ [0, 0, 1], [0, 1, 0], atol=1e-12)

    def test_positive_pitch_tilts_down(self):
        """Positive mount pitch tilts the optical axis below the horizon."""
        self.assertLess((camera_rotation(0.0, pitch=0.3) @ [0, 0, 1])[2], 0)

    def test_rotations_are_proper(self):
        """Every attitude yields a proper rotation."""
        rng = np.random.default_rng(7)
        for _ in range(RANDOM_TRIALS):
            self.assertTrue(is_rotation(camera_rotation(*rng.uniform(-np.pi, np.pi, 3))))
        self.assertFalse(is_rotation(np.diag([1.0, 1.0, -1.0])))


class TestCommands(SimpleTestCase):
    """Test the command containers."""

    def test_camera_command(self):
        """The camera command splits into velocity and the pitch-axis rate."""
        command = ControlInput.from_array([1, 2, 3, 0.5])
        assert_allclose(command.velocity, [1, 2, 3])
        assert_allclose(command.angular, [0, 0.5, 0])

    def test_global_command(self):
        """The global command is a 6-vector."""
        command = ControlInputGlobal.from_array(range(6))
        assert_allclose(command.as_array(), np.arange(6))
        assert_allclose(ControlInputGlobal.zero().as_array(), np.zeros(6))
