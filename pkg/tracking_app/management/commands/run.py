"""Management command running one scenario in closed loop."""

from django.core.management.base import BaseCommand, CommandError

from tracking_app.management.commands._shared import (
    add_run_arguments, base_overrides, execute, write_report,
)


class Command(BaseCommand):
    """Run a scenario, write its artifacts and print its report."""

    help = 'Run a scenario document in closed loop; exits with 1 if an audit fails.'

    def add_arguments(self, parser):
        """Add the scenario options.

        Args:
            parser: Argument parser of the command.
        """
        add_run_arguments(parser)

    def handle(self, *args, **options):
        """Run the scenario.

        Args:
            args: Positional arguments.
            options: Parsed options.

        Raises:
            CommandError: If the scenario is invalid, fails or misses an audit.
        """
        report = execute(options, base_overrides(options))
        write_report(self.stdout, report)
        if not report.passed:
            raise CommandError('audits failed', returncode=1)
