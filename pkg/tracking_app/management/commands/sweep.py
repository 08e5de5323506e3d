"""Management command sweeping one scenario parameter."""

import math

from django.core.management.base import BaseCommand, CommandError

from tracking_app.management.commands._shared import (
    FLAGS, add_run_arguments, base_overrides, execute, number,
)


class Command(BaseCommand):
    """Run a scenario once per value of a dotted parameter."""

    help = 'Run a scenario once per parameter value, e.g. --param cbf.gamma_o --values 0.1,0.5'

    def add_arguments(self, parser):
        """Add the scenario and sweep options.

        Args:
            parser: Argument parser of the command.
        """
        add_run_arguments(parser)
        parser.add_argument('--param', required=True, help='Dotted parameter path.')
        parser.add_argument('--values', required=True, help='Comma-separated values.')

    def handle(self, *args, **options):
        """Run the sweep and print one row per value.

        Args:
            args: Positional arguments.
            options: Parsed options.

        Raises:
            CommandError: If no value was given.
        """
        values = [value.strip() for value in options['values'].split(',') if value.strip()]
        if not values:
            raise CommandError('--values needs at least one value')
        overrides = base_overrides(options)
        self.stdout.write(f'{options["param"]:<16}{"occl margin":>12}  audits')
        for value in values:
            report = execute(options, [*overrides, f'{options["param"]}={value}'])
            audits = ' '.join(f'{name}={FLAGS[ok]}' for name, ok in report.audits.items())
            margin = number(report.min_occlusion_margin, math.degrees(1), 2)
            self.stdout.write(f'{value:<16}{margin:>12}  {audits}')
