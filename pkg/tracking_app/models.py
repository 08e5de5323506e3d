"""This module defines data models of this Django application."""

from datetime import datetime, timezone
from uuid import uuid4

from django.core.exceptions import ValidationError
from django.db import models, transaction


def get_datetime() -> datetime:
    """
    Return current date and time.

    Returns:
        datetime: Current date and time
    """
    return datetime.now(timezone.utc)


def validate_future_date(t_value: datetime) -> None:
    """
    Ensure object is not created in the future.

    Args:
        t_value (datetime): Date and time to be validated.

    Raises:
        ValidationError: If date appears to be in the future.
    """
    if t_value > get_datetime():
        raise ValidationError('Cannot be created in the future')


def check_positive(number: int | float) -> None:
    """
    Ensure number is not negative.

    Args:
        number (int | float): The value to validate.

    Raises:
        ValidationError: If number appears to be negative.
    """
    if number < 0:
        raise ValidationError(
            'Number cannot be negative',
        )


class UUIDMixin(models.Model):
    """A Mixin class that adds UUID to the object by default."""

    id = models.UUIDField(primary_key=True, default=uuid4, editable=False)

    class Meta:
        abstract = True


class CreatedMixin(models.Model):
    """A Mixin class that adds creation date to the object by default."""

    created = models.DateTimeField(auto_now_add=True, validators=[validate_future_date])

    class Meta:
        abstract = True


NAME_LENGTH_MAX = 100
HASH_LENGTH = 12
PATH_LENGTH_MAX = 500
STATUS_LENGTH_MAX = 20

STATUS_COMPLETED = 'completed'
STATUS_FAILED = 'failed'
STATUS_CHOICES = (
    (STATUS_COMPLETED, 'Completed'),
    (STATUS_FAILED, 'Failed'),
)


class ScenarioRun(UUIDMixin, CreatedMixin):
    """Model representing one closed-loop scenario run and its audits."""

    name = models.TextField(null=False, blank=False, max_length=NAME_LENGTH_MAX)
    config_hash = models.CharField(max_length=HASH_LENGTH)
    seed = models.IntegerField(validators=[check_positive])
    duration = models.FloatField(validators=[check_positive])
    run_dir = models.TextField(null=True, blank=True, max_length=PATH_LENGTH_MAX)
    status = models.CharField(
        max_length=STATUS_LENGTH_MAX, choices=STATUS_CHOICES, default=STATUS_COMPLETED,
    )
    ticks = models.PositiveIntegerField(default=0)
    infeasible_ticks = models.PositiveIntegerField(default=0)
    min_pairwise = models.FloatField(null=True, blank=True)
    max_pairwise = models.FloatField(null=True, blank=True)
    min_clearance = models.FloatField(null=True, blank=True)
    min_occlusion_margin = models.FloatField(null=True, blank=True)
    collision_ok = models.BooleanField(default=False)
    connectivity_ok = models.BooleanField(default=False)
    occlusion_ok = models.BooleanField(default=False)
    slack_ok = models.BooleanField(default=False)

    def __str__(self):
        """
        Return the scenario name with its hash and seed.

        Returns:
            str: Run label
        """
        return f'{self.name} ({self.config_hash}, seed {self.seed})'

    @property
    def passed(self) -> bool:
        """
        Tell whether every audit passed on a completed run.

        Returns:
            bool: True if the run is clean
        """
        audits = (self.collision_ok, self.connectivity_ok, self.occlusion_ok, self.slack_ok)
        return self.status == STATUS_COMPLETED and self.infeasible_ticks == 0 and all(audits)

    @classmethod
    def record(cls, report) -> 'ScenarioRun':
        """
        Persist a run report together with its per-agent rows.

        Args:
            report (RunReport): Report produced by the scenario runner.

        Returns:
            ScenarioRun: The stored run.
        """
        with transaction.atomic():
            run = cls.objects.create(
                name=report.name,
                config_hash=report.config_hash,
                seed=report.seed,
                duration=report.duration,
                run_dir=report.run_dir,
                status=report.status,
                ticks=report.ticks,
                infeasible_ticks=report.infeasible_ticks,
                min_pairwise=report.min_pairwise,
                max_pairwise=report.max_pairwise,
                min_clearance=report.min_clearance,
                min_occlusion_margin=report.min_occlusion_margin,
                collision_ok=report.audits['collision'],
                connectivity_ok=report.audits['connectivity'],
                occlusion_ok=report.audits['occlusion'],
                slack_ok=report.audits['slack'],
            )
            AgentResult.objects.bulk_create(
                AgentResult(
                    run=run,
                    index=agent.index,
                    name=agent.name,
                    initial_x=agent.initial[0],
                    initial_y=agent.initial[1],
                    initial_yaw=agent.initial[2],
                    rms_u=agent.rms_u,
                    rms_v=agent.rms_v,
                    valid_detections=agent.valid_detections,
                    collision_ok=agent.collision_ok,
                    connectivity_ok=agent.connectivity_ok,
                    occlusion_ok=agent.occlusion_ok,
                )
                for agent in report.agents
            )
        return run

    class Meta:
        ordering = ['-created']
        verbose_name = 'Scenario Run'
        verbose_name_plural = 'Scenario Runs'


class AgentResult(UUIDMixin):
    """Model representing the per-UAV row of a scenario run."""

    run = models.ForeignKey(ScenarioRun, on_delete=models.CASCADE, related_name='agents')
    index = models.PositiveIntegerField()
    name = models.TextField(null=False, blank=False, max_length=NAME_LENGTH_MAX)
    initial_x = models.FloatField()
    initial_y = models.FloatField()
    initial_yaw = models.FloatField()
    rms_u = models.FloatField(null=True, blank=True, validators=[check_positive])
    rms_v = models.FloatField(null=True, blank=True, validators=[check_positive])
    valid_detections = models.PositiveIntegerField(default=0)
    collision_ok = models.BooleanField(default=False)
    connectivity_ok = models.BooleanField(default=False)
    occlusion_ok = models.BooleanField(default=False)

    def __str__(self):
        """
        Return the agent name within its run.

        Returns:
            str: Agent label
        """
        return f'{self.name} of {self.run_id}'

    class Meta:
        ordering = ['run', 'index']
        verbose_name = 'Agent Result'
        verbose_name_plural = 'Agent Results'
        unique_together = ('run', 'index')
