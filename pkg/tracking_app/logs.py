"""
CSV artifacts of a scenario run.

One file per module, append-only, rows ordered by tick then agent. Floats
are written with ``repr`` so they read back bit for bit.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.json'
REPORT_FILE = 'report.json'

DETECTIONS = 'detections'
ESTIMATES = 'estimates'
NMPC = 'nmpc'
CONSTRAINTS = 'constraints'
FILTER = 'filter'
AGENTS = 'agents'
TARGET = 'target'
OBSTACLES = 'obstacles'

HEADERS = {
    DETECTIONS: (
        't', 'agent', 'valid', 'u', 'v', 'd', 'psi', 'rcx', 'rcy', 'rcz', 'box_w', 'box_h',
    ),
    ESTIMATES: (
        't', 'agent', 'x1', 'x2', 'x3', 'psi', 'rqx', 'rqy', 'rqz', 'vqx', 'vqy', 'vqz',
        'trace_P', 'clamped',
    ),
    NMPC: (
        't', 'agent', 'cost', 'iterations', 'converged', 'fallback',
        'u0_vcx', 'u0_vcy', 'u0_vcz', 'u0_wcy', 'eps1', 'eps2', 'eps3', 'eps4',
    ),
    CONSTRAINTS: ('t', 'agent', 'kind', 'partner', 'h', 'b', 'slack'),
    FILTER: (
        't', 'agent', 'correction', 'status',
        'min_slack_safety', 'min_slack_connectivity', 'min_slack_occlusion',
    ),
    AGENTS: ('t', 'agent', 'x', 'y', 'z', 'yaw'),
    TARGET: ('t', 'x', 'y', 'z', 'vx', 'vy', 'vz', 'heading'),
    OBSTACLES: ('obstacle', 'cx', 'cy', 'cz', 'hx', 'hy', 'hz'),
}


def fmt(value) -> str:
    """
    Render one cell.

    Args:
        value (Any): Number, flag or text.

    Returns:
        str: Booleans as 0/1, floats with round-trip precision, NaN as ``nan``.
    """
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path: Path, header, rows) -> None:
    """
    Write a whole CSV file at once.

    Args:
        path (Path): Destination.
        header (Sequence[str]): Column names.
        rows (Iterable[Sequence]): Data rows.
    """
    with open(path, 'w', newline='', encoding='utf-8') as stream:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        writer.writerows([fmt(cell) for cell in row] for row in rows)


def read_table(path: Path) -> list[dict]:
    """
    Read a CSV file into dictionaries of strings.

    Args:
        path (Path): Source file.

    Returns:
        list[dict[str, str]]: One dictionary per row.
    """
    with open(path, newline='', encoding='utf-8') as stream:
        return list(csv.DictReader(stream))


def write_json(path: Path, document: dict) -> None:
    """Write a JSON document with sorted keys."""
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + '\n', encoding='utf-8')


class RunLog:
    """
    Open CSV writers of one run directory.

    Used as a context manager; every ``log_*`` method appends the rows of one
    agent or of the world at one tick.
    """

    def __init__(self, run_dir):
        """
        Create the run directory and the log files.

        Args:
            run_dir (str | Path): Destination directory.
        """
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._streams = {}
        self._writers = {}
        for name, header in HEADERS.items():
            stream = open(self.run_dir / f'{name}.csv', 'w', newline='', encoding='utf-8')
            self._streams[name] = stream
            self._writers[name] = csv.writer(stream, lineterminator='\n')
            self._writers[name].writerow(header)

    def __enter__(self) -> 'RunLog':
        """Return the open log."""
        return self

    def __exit__(self, *exc_info) -> None:
        """Close every file."""
        self.close()

    def close(self) -> None:
        """Flush and close every file."""
        for stream in self._streams.values():
            stream.close()
        self._streams.clear()

    def _row(self, name: str, *cells) -> None:
        self._writers[name].writerow([fmt(cell) for cell in cells])

    def log_obstacles(self, obstacles) -> None:
        """Record the static boxes once."""
        for index, obstacle in enumerate(obstacles):
            self._row(OBSTACLES, index, *obstacle.center, *obstacle.half_extents)

    def log_world(self, t: float, world) -> None:
        """Record ground-truth UAV and target states."""
        for index, agent in enumerate(world.agents):
            self._row(AGENTS, t, index, *agent.p, agent.yaw)
        target = world.target
        self._row(TARGET, t, *target.position, *target.velocity, target.heading)

    def log_detection(self, t: float, agent: int, detection) -> None:
        """Record one detection; invalid ones keep their NaN fields."""
        self._row(
            DETECTIONS, t, agent, detection.valid,
            detection.u_bar, detection.v_bar, detection.d, detection.psi_z,
            *detection.r_c_z, detection.box_w, detection.box_h,
        )

    def log_estimate(self, t: float, agent: int, state) -> None:
        """Record one estimator posterior."""
        self._row(
            ESTIMATES, t, agent, *state.features.as_array(), *state.r_q, *state.V_q,
            float(np.trace(state.P)), state.clamped,
        )

    def log_nmpc(self, t: float, agent: int, output) -> None:
        """Record one tracker output."""
        solution = output.solution
        cost = solution.cost if solution is not None else np.nan
        iterations = solution.iterations if solution is not None else 0
        converged = solution.converged if solution is not None else False
        self._row(
            NMPC, t, agent, cost, iterations, converged, output.fallback,
            *output.command.as_array(), *output.epsilon,
        )

    def log_constraints(self, t: float, agent: int, rows, slacks) -> None:
        """Record every CBF row with its slack at the filtered command."""
        for row, slack in zip(rows, slacks):
            self._row(CONSTRAINTS, t, agent, row.kind, row.partner, row.h, row.b, slack)

    def log_filter(self, t: float, agent: int, result, rows) -> None:
        """Record the safety-filter outcome."""
        minima = result.kind_minima(rows)
        self._row(
            FILTER, t, agent, result.correction, result.status,
            minima['safety'], minima['connectivity'], minima['occlusion'],
        )
