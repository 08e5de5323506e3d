"""Management command recomputing the report of a stored run directory."""

import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from tracking_app import logs
from tracking_app.management.commands._shared import write_report
from tracking_app.metrics import STATUS_COMPLETED, RunTrace, build_report


class Command(BaseCommand):
    """Rebuild a run report from its ground-truth CSV logs."""

    help = 'Recompute and print the report of a run directory; exits with 1 if an audit fails.'

    def add_arguments(self, parser):
        """Add the run directory argument.

        Args:
            parser: Argument parser of the command.
        """
        parser.add_argument('run_dir', help='Directory written by the run command.')

    def handle(self, *args, **options):
        """Print the report.

        Args:
            args: Positional arguments.
            options: Parsed options.

        Raises:
            CommandError: If the directory is unreadable or an audit fails.
        """
        run_dir = Path(options['run_dir'])
        try:
            trace = RunTrace.from_directory(run_dir)
        except (OSError, KeyError, ValueError, serializers.ValidationError) as error:
            raise CommandError(f'cannot read {run_dir}: {error}')
        status = STATUS_COMPLETED
        stored = run_dir / logs.REPORT_FILE
        if stored.exists():
            status = json.loads(stored.read_text(encoding='utf-8')).get('status', status)
        report = build_report(trace, run_dir, status)
        write_report(self.stdout, report)
        if not report.passed:
            raise CommandError('audits failed', returncode=1)
