"""Helpers shared by the scenario management commands."""

import math

from django.conf import settings
from django.core.management.base import CommandError
from rest_framework import serializers

from tracking_app.config import load_scenario
from tracking_app.exceptions import TickFailed, TrackingError
from tracking_app.models import ScenarioRun
from tracking_app.runner import run

MISSING = '-'
FLAGS = {True: 'Y', False: 'N'}


def add_run_arguments(parser) -> None:
    """Options common to ``run`` and ``sweep``."""
    parser.add_argument('config', help='Scenario TOML document.')
    parser.add_argument('--seed', type=int, help='Override the noise seed.')
    parser.add_argument('--duration', type=float, help='Override the run length, seconds.')
    parser.add_argument('--out', help='Root directory for run artifacts.')
    parser.add_argument(
        '--set', dest='overrides', action='append', default=[],
        help='Dotted override such as cbf.gamma_o=0.5; may repeat.',
    )
    parser.add_argument('--workers', type=int, help='Threads per tick.')
    parser.add_argument(
        '--no-store', dest='store', action='store_false',
        help='Do not record the report in the database.',
    )


def base_overrides(options: dict) -> list[str]:
    """Turn ``--seed``, ``--duration`` and ``--set`` into dotted overrides."""
    overrides = list(options['overrides'])
    if options['seed'] is not None:
        overrides.append(f'world.seed={options["seed"]}')
    if options['duration'] is not None:
        overrides.append(f'world.duration={options["duration"]}')
    return overrides


def execute(options: dict, overrides: list[str]):
    """
    Load, run and optionally store one scenario.

    Args:
        options (dict): Parsed command options.
        overrides (list[str]): Dotted overrides.

    Returns:
        RunReport: The report.

    Raises:
        CommandError: On invalid configuration or a failed run.
    """
    out_dir = options['out'] or settings.TRACKING['RUNS_DIR']
    workers = options['workers'] or settings.TRACKING['WORKERS']
    try:
        config = load_scenario(options['config'], overrides)
        report = run(config, out_dir, workers)
    except serializers.ValidationError as error:
        raise CommandError(f'invalid scenario: {error.detail}')
    except TickFailed as error:
        if options['store'] and error.report is not None:
            ScenarioRun.record(error.report)
        raise CommandError(f'run failed at {error}')
    except (TrackingError, OSError) as error:
        raise CommandError(str(error))
    if options['store']:
        ScenarioRun.record(report)
    return report


def number(value, scale: float = 1.0, digits: int = 3) -> str:
    """Render an optional float."""
    if value is None:
        return MISSING
    return f'{value * scale:.{digits}f}'


def write_report(stdout, report) -> None:
    """
    Print a report as a table followed by a JSON summary line.

    Args:
        stdout (OutputWrapper): Command output.
        report (RunReport): The report.
    """
    stdout.write(
        f'{report.name} ({report.config_hash}, seed {report.seed}): '
        f'{report.status}, {report.ticks} ticks',
    )
    stdout.write(
        f'{"agent":<10}{"x":>8}{"y":>8}{"yaw":>8}{"rms U":>9}{"rms V":>9}'
        f'{"valid":>7}{"occl":>6}{"conn":>6}{"coll":>6}',
    )
    for agent in report.agents:
        x, y, yaw = agent.initial
        stdout.write(
            f'{agent.name:<10}{x:>8.2f}{y:>8.2f}{yaw:>8.3f}'
            f'{number(agent.rms_u, digits=2):>9}{number(agent.rms_v, digits=2):>9}'
            f'{agent.valid_detections:>7}{FLAGS[agent.occlusion_ok]:>6}'
            f'{FLAGS[agent.connectivity_ok]:>6}{FLAGS[agent.collision_ok]:>6}',
        )
    stdout.write(
        f'pairwise min {number(report.min_pairwise)} max {number(report.max_pairwise)}, '
        f'clearance min {number(report.min_clearance)}, '
        f'occlusion margin {number(report.min_occlusion_margin, math.degrees(1), 2)} deg, '
        f'infeasible ticks {report.infeasible_ticks}',
    )
    audits = ', '.join(f'{name} {FLAGS[passed]}' for name, passed in report.audits.items())
    stdout.write(f'audits: {audits}')
    stdout.write(report.to_json())
