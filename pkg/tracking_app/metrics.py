"""
Run metrics and audits recomputed from ground truth.

Nothing here reads controller internals: distances and occlusion angles come
from logged UAV, target and obstacle states only.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from tracking_app import logs
from tracking_app.cbf import occlusion_angle
from tracking_app.config import ScenarioConfig, load_scenario
from tracking_app.exceptions import DegenerateGeometry, NoValidDetections
from tracking_app.geometry import FeatureState, range_from_features
from tracking_app.safety import STATUS_INFEASIBLE
from tracking_app.vision import CameraIntrinsics, Detection

logger = logging.getLogger(__name__)

DISTANCE_TOLERANCE = 0.05
ANGLE_TOLERANCE = math.radians(2)
SLACK_TOLERANCE = -1e-8

STATUS_COMPLETED = 'completed'
STATUS_FAILED = 'failed'

FEATURES_PX = 'features_px'
DEPTH_ERROR = 'depth_error'
PAIRWISE = 'pairwise'
CLEARANCES = 'clearances'
OCCLUSION = 'occlusion'


def rms_pixel_errors(detections, reference: FeatureState, K: CameraIntrinsics):
    """
    RMS image error of the box center against the reference location.

    Args:
        detections (Iterable[Detection]): Detections of one UAV.
        reference (FeatureState): Desired features.
        K (CameraIntrinsics): Intrinsics.

    Returns:
        tuple[float, float]: (rms_u, rms_v) over valid detections.

    Raises:
        NoValidDetections: If no detection is valid.
    """
    valid = [detection for detection in detections if detection.valid]
    if not valid:
        raise NoValidDetections('no valid detection to score')
    u_ref = K.f_x * reference.x1 + K.c_u
    v_ref = K.f_y * reference.x2 + K.c_v
    errors_u = np.array([detection.u_bar - u_ref for detection in valid])
    errors_v = np.array([detection.v_bar - v_ref for detection in valid])
    return float(np.sqrt(np.mean(errors_u ** 2))), float(np.sqrt(np.mean(errors_v ** 2)))


def _none_if_nan(value):
    if value is None or not np.isfinite(value):
        return None
    return float(value)


@dataclass
class RunTrace:
    """
    Ground truth and measurements collected during a run, tick by tick.

    Attributes:
        config (ScenarioConfig): The scenario.
        times (list[float]): Times of the world samples.
        positions (list[np.ndarray]): n x 3 UAV positions per sample.
        targets (list[np.ndarray]): Target position per sample.
        detections (dict[int, list]): (t, Detection) per UAV.
        ranges (list[tuple]): (t, agent, estimated range) rows.
        min_slack (float): Smallest filter slack seen.
        infeasible_ticks (int): Ticks where some filter QP was infeasible.
    """

    config: ScenarioConfig
    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    detections: dict = field(default_factory=dict)
    ranges: list = field(default_factory=list)
    min_slack: float = math.inf
    infeasible_ticks: int = 0

    @property
    def ticks(self) -> int:
        """Completed ticks; the last world sample is the final state."""
        return max(len(self.times) - 1, 0)

    def record_world(self, t: float, world) -> None:
        """Store one ground-truth sample."""
        self.times.append(t)
        self.positions.append(np.array([agent.p for agent in world.agents]))
        self.targets.append(world.target.position.copy())

    def record_detection(self, t: float, agent: int, detection: Detection) -> None:
        """Store one detection."""
        self.detections.setdefault(agent, []).append((t, detection))

    def record_estimate(self, t: float, agent: int, features: FeatureState) -> None:
        """Store the range implied by one estimate."""
        self.ranges.append((t, agent, range_from_features(features)))

    def record_filter(self, results) -> None:
        """Store the slacks and statuses of one tick."""
        infeasible = False
        for result in results:
            if result.slacks.size:
                self.min_slack = min(self.min_slack, float(np.min(result.slacks)))
            infeasible = infeasible or result.status == STATUS_INFEASIBLE
        self.infeasible_ticks += int(infeasible)

    @classmethod
    def from_directory(cls, run_dir) -> 'RunTrace':
        """
        Rebuild a trace from the CSV logs of a run directory.

        Args:
            run_dir (str | Path): Run directory.

        Returns:
            RunTrace: The trace.
        """
        run_dir = Path(run_dir)
        trace = cls(load_scenario(run_dir / logs.CONFIG_FILE))
        count = len(trace.config.agents)
        rows = logs.read_table(run_dir / f'{logs.AGENTS}.csv')
        targets = logs.read_table(run_dir / f'{logs.TARGET}.csv')
        for sample, target in enumerate(targets):
            block = rows[sample * count:(sample + 1) * count]
            trace.times.append(float(target['t']))
            trace.positions.append(np.array([
                [float(row['x']), float(row['y']), float(row['z'])] for row in block
            ]))
            trace.targets.append(np.array([float(target[axis]) for axis in 'xyz']))
        for row in logs.read_table(run_dir / f'{logs.DETECTIONS}.csv'):
            trace.record_detection(float(row['t']), int(row['agent']), _detection_from_row(row))
        for row in logs.read_table(run_dir / f'{logs.ESTIMATES}.csv'):
            features = FeatureState(*(float(row[key]) for key in ('x1', 'x2', 'x3', 'psi')))
            trace.record_estimate(float(row['t']), int(row['agent']), features)
        for row in logs.read_table(run_dir / f'{logs.CONSTRAINTS}.csv'):
            trace.min_slack = min(trace.min_slack, float(row['slack']))
        infeasible = {
            row['t'] for row in logs.read_table(run_dir / f'{logs.FILTER}.csv')
            if row['status'] == STATUS_INFEASIBLE
        }
        trace.infeasible_ticks = len(infeasible)
        return trace


def _detection_from_row(row: dict) -> Detection:
    if row['valid'] != '1':
        return Detection.dropout('logged')
    return Detection(
        valid=True,
        u_bar=float(row['u']),
        v_bar=float(row['v']),
        d=float(row['d']),
        psi_z=float(row['psi']),
        r_c_z=np.array([float(row['rcx']), float(row['rcy']), float(row['rcz'])]),
        box_w=float(row['box_w']),
        box_h=float(row['box_h']),
    )


@dataclass
class AgentSummary:
    """Per-UAV row of a run report."""

    index: int
    name: str
    initial: tuple
    rms_u: float | None
    rms_v: float | None
    valid_detections: int
    collision_ok: bool
    connectivity_ok: bool
    occlusion_ok: bool


@dataclass
class RunReport:
    """
    Outcome of a run; metrics that are undefined for the run are None.

    Attributes:
        name (str): Scenario name.
        config_hash (str): Digest of the validated document.
        seed (int): Noise seed.
        duration (float): Simulated seconds.
        run_dir (str | None): Artifact directory.
        status (str): completed or failed.
        ticks (int): Completed ticks.
        agents (list[AgentSummary]): Per-UAV rows.
        min_pairwise (float | None): Smallest UAV-UAV distance.
        max_pairwise (float | None): Largest UAV-UAV distance.
        min_clearance (float | None): Smallest UAV-obstacle surface distance.
        min_occlusion_margin (float | None): Smallest occlusion angle minus its margin.
        occlusion_minima (dict[str, float]): Smallest angle per ``agent:obstacle`` pair.
        min_slack (float | None): Smallest filter slack.
        audits (dict[str, bool]): collision, connectivity, occlusion, slack.
        infeasible_ticks (int): Ticks with an infeasible filter QP.
    """

    name: str
    config_hash: str
    seed: int
    duration: float
    run_dir: str | None
    status: str
    ticks: int
    agents: list
    min_pairwise: float | None
    max_pairwise: float | None
    min_clearance: float | None
    min_occlusion_margin: float | None
    occlusion_minima: dict
    min_slack: float | None
    audits: dict
    infeasible_ticks: int

    @property
    def passed(self) -> bool:
        """Whether the run completed cleanly with every audit passing."""
        return (
            self.status == STATUS_COMPLETED
            and self.infeasible_ticks == 0
            and all(self.audits.values())
        )

    def to_dict(self) -> dict:
        """Plain dictionary for JSON output."""
        document = asdict(self)
        document['passed'] = self.passed
        return document

    def to_json(self) -> str:
        """Compact single-line JSON summary."""
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class _Geometry:
    pairwise: list
    clearances: list
    occlusion: list


def _geometry(trace: RunTrace) -> _Geometry:
    """Ground-truth distances and occlusion angles per sample."""
    obstacles = trace.config.obstacles
    pairwise, clearances, occlusion = [], [], []
    for t, positions, target in zip(trace.times, trace.positions, trace.targets):
        count = len(positions)
        for i in range(count):
            for j in range(i + 1, count):
                pairwise.append((t, i, j, float(np.linalg.norm(positions[i] - positions[j]))))
            sight = target - positions[i]
            target_range = np.linalg.norm(sight)
            for index, obstacle in enumerate(obstacles):
                clearances.append((t, i, index, obstacle.distance_to(positions[i])))
                if np.linalg.norm(obstacle.center - positions[i]) > target_range:
                    continue
                try:
                    angle = occlusion_angle(positions[i], obstacle.center, sight)
                except DegenerateGeometry:
                    continue
                occlusion.append((t, i, index, angle))
    return _Geometry(pairwise, clearances, occlusion)


def _agent_summary(trace: RunTrace, geometry: _Geometry, index: int) -> AgentSummary:
    config = trace.config
    agent = config.agents[index]
    detections = [detection for _, detection in trace.detections.get(index, [])]
    try:
        rms_u, rms_v = rms_pixel_errors(detections, agent.reference, config.camera)
    except NoValidDetections:
        logger.warning('Agent %s never saw the target', agent.name)
        rms_u, rms_v = None, None
    own_pairs = [row[3] for row in geometry.pairwise if index in row[1:3]]
    own_clearances = [row[3] for row in geometry.clearances if row[1] == index]
    own_angles = [row[3] for row in geometry.occlusion if row[1] == index]
    params = config.cbf
    collision_ok = (
        all(distance >= params.R_s - DISTANCE_TOLERANCE for distance in own_pairs)
        and all(distance >= params.R_s - DISTANCE_TOLERANCE for distance in own_clearances)
    )
    return AgentSummary(
        index=index,
        name=agent.name,
        initial=(float(agent.position[0]), float(agent.position[1]), float(agent.yaw)),
        rms_u=rms_u,
        rms_v=rms_v,
        valid_detections=len([detection for detection in detections if detection.valid]),
        collision_ok=collision_ok,
        connectivity_ok=all(
            distance <= params.R_c + DISTANCE_TOLERANCE for distance in own_pairs
        ),
        occlusion_ok=all(
            angle >= params.theta_star - ANGLE_TOLERANCE for angle in own_angles
        ),
    )


def _minimum(values):
    return min(values) if values else None


def build_report(trace: RunTrace, run_dir=None, status: str = STATUS_COMPLETED) -> RunReport:
    """
    Compute the report of a run from its trace.

    Args:
        trace (RunTrace): Ground truth and measurements.
        run_dir (str | Path | None): Artifact directory, recorded in the report.
        status (str): completed or failed.

    Returns:
        RunReport: Metrics and audits.
    """
    config = trace.config
    params = config.cbf
    geometry = _geometry(trace)
    distances = [row[3] for row in geometry.pairwise]
    clearances = [row[3] for row in geometry.clearances]
    angles = [row[3] for row in geometry.occlusion]
    minima = {}
    for _, agent, obstacle, angle in geometry.occlusion:
        key = f'{agent}:{obstacle}'
        minima[key] = min(minima.get(key, math.inf), angle)
    min_pairwise = _minimum(distances)
    max_pairwise = max(distances) if distances else None
    min_clearance = _minimum(clearances)
    min_angle = _minimum(angles)
    min_slack = _none_if_nan(trace.min_slack)
    audits = {
        'collision': (
            (min_pairwise is None or min_pairwise >= params.R_s - DISTANCE_TOLERANCE)
            and (min_clearance is None or min_clearance >= params.R_s - DISTANCE_TOLERANCE)
        ),
        'connectivity': max_pairwise is None or max_pairwise <= params.R_c + DISTANCE_TOLERANCE,
        'occlusion': min_angle is None or min_angle >= params.theta_star - ANGLE_TOLERANCE,
        'slack': min_slack is None or min_slack >= SLACK_TOLERANCE,
    }
    return RunReport(
        name=config.name,
        config_hash=config.config_hash,
        seed=config.seed,
        duration=config.duration,
        run_dir=str(run_dir) if run_dir is not None else None,
        status=status,
        ticks=trace.ticks,
        agents=[_agent_summary(trace, geometry, index) for index in range(len(config.agents))],
        min_pairwise=min_pairwise,
        max_pairwise=max_pairwise,
        min_clearance=min_clearance,
        min_occlusion_margin=None if min_angle is None else min_angle - params.theta_star,
        occlusion_minima=minima,
        min_slack=min_slack,
        audits=audits,
        infeasible_ticks=trace.infeasible_ticks,
    )


def write_plot_data(trace: RunTrace, run_dir) -> None:
    """
    Write the per-quantity CSVs used for plotting.

    Args:
        trace (RunTrace): Ground truth and measurements.
        run_dir (str | Path): Destination directory.
    """
    run_dir = Path(run_dir)
    config = trace.config
    K = config.camera
    feature_rows = []
    for index, agent in enumerate(config.agents):
        u_ref = K.f_x * agent.reference.x1 + K.c_u
        v_ref = K.f_y * agent.reference.x2 + K.c_v
        feature_rows.extend(
            (t, index, detection.valid, detection.u_bar, detection.v_bar, u_ref, v_ref)
            for t, detection in trace.detections.get(index, [])
        )
    feature_rows.sort(key=lambda row: (row[0], row[1]))
    logs.write_table(
        run_dir / f'{FEATURES_PX}.csv',
        ('t', 'agent', 'valid', 'u', 'v', 'u_ref', 'v_ref'),
        feature_rows,
    )
    references = [range_from_features(agent.reference) for agent in config.agents]
    logs.write_table(
        run_dir / f'{DEPTH_ERROR}.csv',
        ('t', 'agent', 'range', 'range_ref', 'error'),
        (
            (t, agent, estimate, references[agent], estimate - references[agent])
            for t, agent, estimate in trace.ranges
        ),
    )
    geometry = _geometry(trace)
    logs.write_table(
        run_dir / f'{PAIRWISE}.csv', ('t', 'agent', 'other', 'distance'), geometry.pairwise,
    )
    logs.write_table(
        run_dir / f'{CLEARANCES}.csv', ('t', 'agent', 'obstacle', 'distance'), geometry.clearances,
    )
    logs.write_table(
        run_dir / f'{OCCLUSION}.csv', ('t', 'agent', 'obstacle', 'angle'), geometry.occlusion,
    )
