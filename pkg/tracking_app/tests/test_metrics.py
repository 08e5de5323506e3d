"""Module for testing run metrics and audits."""

import copy
import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from tracking_app import logs
from tracking_app.cbf import (
    KIND_CONNECTIVITY, KIND_OCCLUSION, KIND_SAFETY, NeighborView, build_constraints,
)
from tracking_app.config import load_scenario
from tracking_app.exceptions import NoValidDetections
from tracking_app.geometry import ControlInputGlobal, FeatureState
from tracking_app.metrics import (
    FEATURES_PX,
    PAIRWISE,
    STATUS_FAILED,
    RunTrace,
    _geometry,
    build_report,
    rms_pixel_errors,
    write_plot_data,
)
from tracking_app.safety import STATUS_INFEASIBLE, STATUS_OPTIMAL, FilterResult
from tracking_app.vision import CameraIntrinsics, Detection
from tracking_app.world import AgentState, TargetState, WorldState

K = CameraIntrinsics(381.36, 381.36, 320.0, 240.0, 640, 480)
REFERENCE = FeatureState(0.0, 0.188, 0.14, 3.0)
U_REF = K.c_u
V_REF = K.c_v + K.f_y * REFERENCE.x2
PAIR = {
    'camera': {'fx': 381.36, 'fy': 381.36, 'cu': 320.0, 'cv': 240.0, 'width': 640, 'height': 480},
    'target': {'segments': [{'speed': 0.5}]},
    'agents': [
        {'name': 'uav1', 'position': [-6.0, 0.0, 1.0], 'reference': [0, 0.188, 0.14, 3]},
        {'name': 'uav2', 'position': [-6.0, 4.0, 1.0], 'reference': [0, 0.188, 0.14, 3]},
    ],
}
BLOCKING_BOX = {'center': [-3.0, 3.0, 0.5], 'half_extents': [0.5, 0.5, 0.5]}
SIDE_BOX = {'center': [-3.0, -1.5, 1.0], 'half_extents': [0.5, 0.5, 0.5]}


def seen(u_offset: float = 0.0, v_offset: float = 0.0) -> Detection:
    """Valid detection displaced from the reference pixel."""
    return Detection(
        valid=True,
        u_bar=U_REF + u_offset,
        v_bar=V_REF + v_offset,
        d=6.0,
        psi_z=3.0,
        r_c_z=np.zeros(3),
    )


def make_trace(document: dict, samples: int = 3) -> RunTrace:
    """Trace of UAVs parked at their initial positions, looking at a target at the origin."""
    trace = RunTrace(load_scenario(document))
    target = TargetState(np.zeros(3), np.zeros(3), 0.0)
    agents = tuple(AgentState(agent.position, agent.yaw) for agent in trace.config.agents)
    for sample in range(samples):
        t = sample * trace.config.dt
        trace.record_world(t, WorldState(t, agents, target))
        for index in range(len(agents)):
            trace.record_detection(t, index, seen())
    return trace


class TestRmsPixelErrors(SimpleTestCase):
    """Test the image error metric."""

    def test_on_reference(self):
        """Detections on the reference pixel score zero."""
        assert_allclose(rms_pixel_errors([seen()] * 5, REFERENCE, K), (0.0, 0.0), atol=1e-12)

    def test_constant_offset(self):
        """A constant offset is its own RMS."""
        rms_u, rms_v = rms_pixel_errors([seen(3.0, -3.0)] * 4, REFERENCE, K)
        self.assertAlmostEqual(rms_u, 3.0)
        self.assertAlmostEqual(rms_v, 3.0)

    def test_mixed_errors_and_dropouts(self):
        """Dropouts are skipped, valid errors are squared and averaged."""
        detections = [seen(3.0, 0.0), Detection.dropout('fov'), seen(4.0, 0.0)]
        rms_u, rms_v = rms_pixel_errors(detections, REFERENCE, K)
        self.assertAlmostEqual(rms_u, math.sqrt(12.5))
        self.assertAlmostEqual(rms_v, 0.0)

    def test_no_valid_detection(self):
        """A UAV that never saw the target has no score."""
        with self.assertRaises(NoValidDetections):
            rms_pixel_errors([Detection.dropout('behind')], REFERENCE, K)


class TestBuildReport(SimpleTestCase):
    """Test the audits over a synthetic trace."""

    def test_clean_run(self):
        """Parked UAVs 4 m apart pass every audit."""
        report = build_report(make_trace(PAIR))
        self.assertTrue(report.passed)
        self.assertEqual(report.ticks, 2)
        self.assertAlmostEqual(report.min_pairwise, 4.0)
        self.assertAlmostEqual(report.max_pairwise, 4.0)
        self.assertIsNone(report.min_clearance)
        self.assertIsNone(report.min_occlusion_margin)
        self.assertIsNone(report.min_slack)
        self.assertEqual([agent.name for agent in report.agents], ['uav1', 'uav2'])
        self.assertEqual(report.agents[0].valid_detections, 3)
        self.assertAlmostEqual(report.agents[0].rms_u, 0.0)

    def test_occluded_agent(self):
        """A box near the second line of sight fails only the occlusion audit."""
        document = copy.deepcopy(PAIR)
        document['obstacles'] = [BLOCKING_BOX]
        report = build_report(make_trace(document))
        self.assertFalse(report.passed)
        self.assertEqual(
            report.audits,
            {'collision': True, 'connectivity': True, 'occlusion': False, 'slack': True},
        )
        self.assertTrue(report.agents[0].occlusion_ok)
        self.assertFalse(report.agents[1].occlusion_ok)
        self.assertLess(report.min_occlusion_margin, 0.0)
        self.assertEqual(set(report.occlusion_minima), {'0:0', '1:0'})
        self.assertGreater(report.min_clearance, 2.0)

    def test_collision_and_connectivity(self):
        """Pairs closer than R_s or farther than R_c fail their audits."""
        close = copy.deepcopy(PAIR)
        close['agents'][1]['position'] = [-6.0, 1.0, 1.0]
        report = build_report(make_trace(close))
        self.assertFalse(report.audits['collision'])
        self.assertFalse(report.agents[0].collision_ok)
        far = copy.deepcopy(PAIR)
        far['agents'][1]['position'] = [-6.0, 25.0, 1.0]
        report = build_report(make_trace(far))
        self.assertFalse(report.audits['connectivity'])
        self.assertFalse(report.agents[1].connectivity_ok)

    def test_filter_outcomes(self):
        """Negative slacks and infeasible ticks fail the run."""
        trace = make_trace(PAIR)
        stop = ControlInputGlobal(np.zeros(3), np.zeros(3))
        trace.record_filter([
            FilterResult(stop, np.array([0.5, -1.0]), STATUS_INFEASIBLE, 0.0),
            FilterResult(stop, np.array([]), STATUS_OPTIMAL, 0.0),
        ])
        trace.record_filter([FilterResult(stop, np.array([2.0]), STATUS_OPTIMAL, 0.0)])
        report = build_report(trace)
        self.assertEqual(report.infeasible_ticks, 1)
        self.assertAlmostEqual(report.min_slack, -1.0)
        self.assertFalse(report.audits['slack'])
        self.assertFalse(report.passed)

    def test_blind_agent(self):
        """A UAV without valid detections has no score and is logged."""
        trace = make_trace(PAIR)
        trace.detections[1] = [(0.0, Detection.dropout('occluded'))]
        with self.assertLogs('tracking_app.metrics', 'WARNING'):
            report = build_report(trace)
        self.assertIsNone(report.agents[1].rms_u)
        self.assertEqual(report.agents[1].valid_detections, 0)

    def test_failed_status(self):
        """A failed run never passes and serializes to one JSON line."""
        report = build_report(make_trace(PAIR), run_dir='runs/x', status=STATUS_FAILED)
        self.assertFalse(report.passed)
        document = json.loads(report.to_json())
        self.assertEqual(document['status'], STATUS_FAILED)
        self.assertEqual(document['run_dir'], 'runs/x')
        self.assertFalse(document['passed'])
        self.assertNotIn('\n', report.to_json())


class TestPlotData(SimpleTestCase):
    """Test the derived plotting tables."""

    def test_tables(self):
        """Feature and pairwise tables hold one row per sample."""
        trace = make_trace(PAIR)
        with tempfile.TemporaryDirectory() as directory:
            write_plot_data(trace, directory)
            features = logs.read_table(Path(directory) / f'{FEATURES_PX}.csv')
            pairwise = logs.read_table(Path(directory) / f'{PAIRWISE}.csv')
        self.assertEqual(len(features), 6)
        self.assertEqual([row['agent'] for row in features[:2]], ['0', '1'])
        self.assertAlmostEqual(float(features[0]['v_ref']), V_REF)
        self.assertEqual(len(pairwise), 3)
        self.assertAlmostEqual(float(pairwise[0]['distance']), 4.0)


class TestAuditAgreement(SimpleTestCase):
    """Test that the audits and the barrier rows see the same geometry."""

    def test_barrier_values_match_audit(self):
        """Every barrier value follows from the audited distances and angles."""
        document = copy.deepcopy(PAIR)
        document['obstacles'] = [BLOCKING_BOX, SIDE_BOX]
        trace = make_trace(document, samples=1)
        config, params = trace.config, trace.config.cbf
        geometry = _geometry(trace)
        pairwise = {(i, j): distance for _, i, j, distance in geometry.pairwise}
        clearances = {(i, k): distance for _, i, k, distance in geometry.clearances}
        angles = {(i, k): angle for _, i, k, angle in geometry.occlusion}
        agents = tuple(AgentState(agent.position, agent.yaw) for agent in config.agents)
        world = WorldState(0.0, agents, None, config.obstacles)
        kinds, occluders = set(), set()
        for i in range(len(agents)):
            rows = build_constraints(NeighborView.from_world(world, i, params), params, [0, 0, 0])
            for row in rows:
                kinds.add(row.kind)
                other = int(row.partner.removeprefix('agent').removeprefix('obstacle'))
                if row.partner.startswith('agent'):
                    distance = pairwise[min(i, other), max(i, other)]
                    expected = (
                        distance ** 2 - params.R_s ** 2 if row.kind == KIND_SAFETY
                        else params.R_c ** 2 - distance ** 2
                    )
                    self.assertAlmostEqual(row.h, expected, delta=1e-6)
                elif row.kind == KIND_SAFETY:
                    circumradius = config.obstacles[other].circumradius
                    to_center = np.sqrt(row.h + (params.R_s + circumradius) ** 2)
                    self.assertLessEqual(clearances[i, other], to_center + 1e-6)
                    self.assertGreaterEqual(clearances[i, other], to_center - circumradius - 1e-6)
                else:
                    occluders.add((i, other))
                    self.assertAlmostEqual(
                        row.h, angles[i, other] - params.theta_star, delta=1e-6,
                    )
        self.assertEqual(kinds, {KIND_SAFETY, KIND_CONNECTIVITY, KIND_OCCLUSION})
        self.assertEqual(occluders, set(angles))
