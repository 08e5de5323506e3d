"""Module for configuring this Tracking Application."""

from django.apps import AppConfig


class TrackingAppConfig(AppConfig):
    """Tracking Application Configuration."""

    default_auto_field = 'django.db.models.BigAutoField'
    name = 'tracking_app'
