# Generated by Django 5.0.3 on 2026-10-18 12:00

import django.db.models.deletion
import tracking_app.models
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ScenarioRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4,
                 editable=False, primary_key=True, serialize=False)),
                ('created', models.DateTimeField(auto_now_add=True,
                 validators=[tracking_app.models.validate_future_date])),
                ('name', models.TextField(max_length=100)),
                ('config_hash', models.CharField(max_length=12)),
                ('seed', models.IntegerField(validators=[tracking_app.models.check_positive])),
                ('duration', models.FloatField(validators=[tracking_app.models.check_positive])),
                ('run_dir', models.TextField(blank=True, max_length=500, null=True)),
                ('status', models.CharField(choices=[('completed', 'Completed'),
                 ('failed', 'Failed')], default='completed', max_length=20)),
                ('ticks', models.PositiveIntegerField(default=0)),
                ('infeasible_ticks', models.PositiveIntegerField(default=0)),
                ('min_pairwise', models.FloatField(blank=True, null=True)),
                ('max_pairwise', models.FloatField(blank=True, null=True)),
                ('min_clearance', models.FloatField(blank=True, null=True)),
                ('min_occlusion_margin', models.FloatField(blank=True, null=True)),
                ('collision_ok', models.BooleanField(default=False)),
                ('connectivity_ok', models.BooleanField(default=False)),
                ('occlusion_ok', models.BooleanField(default=False)),
                ('slack_ok', models.BooleanField(default=False)),
            ],
            options={
                'verbose_name': 'Scenario Run',
                'verbose_name_plural': 'Scenario Runs',
                'ordering': ['-created'],
            },
        ),
        migrations.CreateModel(
            name='AgentResult',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4,
                 editable=False, primary_key=True, serialize=False)),
                ('index', models.PositiveIntegerField()),
                ('name', models.TextField(max_length=100)),
                ('initial_x', models.FloatField()),
                ('initial_y', models.FloatField()),
                ('initial_yaw', models.FloatField()),
                ('rms_u', models.FloatField(blank=True, null=True,
                 validators=[tracking_app.models.check_positive])),
                ('rms_v', models.FloatField(blank=True, null=True,
                 validators=[tracking_app.models.check_positive])),
                ('valid_detections', models.PositiveIntegerField(default=0)),
                ('collision_ok', models.BooleanField(default=False)),
                ('connectivity_ok', models.BooleanField(default=False)),
                ('occlusion_ok', models.BooleanField(default=False)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE,
                 related_name='agents', to='tracking_app.scenariorun')),
            ],
            options={
                'verbose_name': 'Agent Result',
                'verbose_name_plural': 'Agent Results',
                'ordering': ['run', 'index'],
                'unique_together': {('run', 'index')},
            },
        ),
    ]
