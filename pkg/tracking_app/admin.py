"""Module for configuring Scenario Run and Agent Result models in the admin panel."""

from django.contrib import admin

from tracking_app.models import AgentResult, ScenarioRun

ID = 'id'


@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    """Scenario Run admin configuration."""

    list_display = (
        ID,
        'name',
        'config_hash',
        'seed',
        'status',
        'min_pairwise',
        'min_clearance',
        'min_occlusion_margin',
        'passed',
    )
    list_filter = ('status', 'name')
    readonly_fields = (ID,)


@admin.register(AgentResult)
class AgentResultAdmin(admin.ModelAdmin):
    """Agent Result admin configuration."""

    list_display = (
        ID,
        'run',
        'name',
        'rms_u',
        'rms_v',
        'valid_detections',
    )
    readonly_fields = (ID,)
