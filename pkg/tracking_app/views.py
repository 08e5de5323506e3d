"""Module containing read-only API views over stored scenario runs."""

from rest_framework import permissions, viewsets

from tracking_app.models import AgentResult, ScenarioRun
from tracking_app.serializers import AgentResultSerializer, ScenarioRunSerializer


class ReadOnlyPermission(permissions.BasePermission):
    """Allows only safe methods; runs are created by management commands."""

    _safe_methods = ['GET', 'HEAD', 'OPTIONS']

    def has_permission(self, request, view) -> bool:
        """Ensure the request does not modify anything.

        Args:
            request: Sent request.
            view: View object.

        Returns:
            bool: True if the method is safe
        """
        return request.method in self._safe_methods


class ScenarioRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Defines viewset for Scenario Run model."""

    queryset = ScenarioRun.objects.prefetch_related('agents')
    serializer_class = ScenarioRunSerializer
    permission_classes = [ReadOnlyPermission]


class AgentResultViewSet(viewsets.ReadOnlyModelViewSet):
    """Defines viewset for Agent Result model."""

    queryset = AgentResult.objects.all()
    serializer_class = AgentResultSerializer
    permission_classes = [ReadOnlyPermission]
