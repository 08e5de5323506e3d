"""Module defining serializers for the application: API models and scenario documents."""

import math

from rest_framework import serializers

from tracking_app.cbf import CbfParams
from tracking_app.exceptions import DegenerateRange
from tracking_app.models import AgentResult, ScenarioRun

FIELDS_ALL = '__all__'
DEGREES_SUFFIX = 'deg'
VECTOR_LENGTH = 3
FEATURE_LENGTH = 4
OPTIONAL_TABLES = ('world', 'noise', 'ukf', 'nmpc', 'cbf')
ANGLE_SLACK = 1e-9


class AgentResultSerializer(serializers.ModelSerializer):
    """Serializer class for Agent Result model."""

    class Meta:
        model = AgentResult
        fields = FIELDS_ALL


class ScenarioRunSerializer(serializers.ModelSerializer):
    """Serializer class for Scenario Run model."""

    agents = AgentResultSerializer(many=True, read_only=True)
    passed = serializers.ReadOnlyField()

    class Meta:
        model = ScenarioRun
        fields = FIELDS_ALL


class AngleField(serializers.Field):
    """Angle in radians, or a string with a ``deg`` suffix such as ``"30deg"``."""

    default_error_messages = {
        'invalid': 'Expected radians or a string like "30deg", got {value!r}.',
    }

    def to_internal_value(self, data) -> float:
        """
        Convert the document value to radians.

        Args:
            data (float | int | str): Raw value.

        Returns:
            float: Angle in radians.
        """
        if isinstance(data, bool):
            self.fail('invalid', value=data)
        if isinstance(data, (int, float)):
            return float(data)
        if isinstance(data, str) and data.strip().endswith(DEGREES_SUFFIX):
            try:
                return math.radians(float(data.strip()[:-len(DEGREES_SUFFIX)]))
            except ValueError:
                self.fail('invalid', value=data)
        self.fail('invalid', value=data)

    def to_representation(self, value) -> float:
        """Angles are represented in radians."""
        return value


def vector_field(length: int = VECTOR_LENGTH, **kwargs) -> serializers.ListField:
    """List of floats with a fixed length."""
    return serializers.ListField(
        child=serializers.FloatField(), min_length=length, max_length=length, **kwargs,
    )


def feature_field(**kwargs) -> serializers.ListField:
    """Four features where the last entry is an angle."""
    return serializers.ListField(
        child=AngleField(), min_length=FEATURE_LENGTH, max_length=FEATURE_LENGTH, **kwargs,
    )


class WorldSerializer(serializers.Serializer):
    """Serializer for the ``[world]`` table."""

    name = serializers.CharField(required=False, default='scenario')
    dt = serializers.FloatField(min_value=1e-6, default=1 / 80)
    duration = serializers.FloatField(min_value=0.0, default=60.0)
    seed = serializers.IntegerField(min_value=0, default=0)


class CameraSerializer(serializers.Serializer):
    """Serializer for the ``[camera]`` table."""

    fx = serializers.FloatField(min_value=0.0)
    fy = serializers.FloatField(min_value=0.0)
    cu = serializers.FloatField()
    cv = serializers.FloatField()
    width = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1)
    pitch = AngleField(default=0.0)
    roll = AngleField(default=0.0)

    def validate(self, attrs):
        """Check the principal point lies inside the image."""
        if attrs['fx'] <= 0 or attrs['fy'] <= 0:
            raise serializers.ValidationError('focal lengths must be positive')
        if not (0 < attrs['cu'] < attrs['width'] and 0 < attrs['cv'] < attrs['height']):
            raise serializers.ValidationError('principal point must lie inside the image')
        return attrs


class NoiseSerializer(serializers.Serializer):
    """Serializer for the ``[noise]`` table."""

    sigma_px = serializers.FloatField(min_value=0.0, default=2.0)
    sigma_d = serializers.FloatField(min_value=0.0, default=0.1)
    sigma_psi = AngleField(default=0.05)
    sigma_gps = serializers.FloatField(min_value=0.0, default=0.02)

    def validate_sigma_psi(self, value):
        """Reject negative deviations."""
        if value < 0:
            raise serializers.ValidationError('must be non-negative')
        return value


class UkfSerializer(serializers.Serializer):
    """Serializer for the ``[ukf]`` table; covariances are per second."""

    alpha = serializers.FloatField(default=0.1)
    beta = serializers.FloatField(default=2.0)
    kappa = serializers.FloatField(default=0.0)
    q_feature = serializers.FloatField(min_value=0.0, default=1e-4)
    q_psi = serializers.FloatField(min_value=0.0, default=1e-4)
    q_position = serializers.FloatField(min_value=0.0, default=1e-3)
    q_velocity = serializers.FloatField(min_value=0.0, default=1e-2)
    window = serializers.FloatField(min_value=0.0, default=1.0)

    def validate_alpha(self, value):
        """Sigma-point spread lies in (0, 1]."""
        if not 0 < value <= 1:
            raise serializers.ValidationError('must lie in (0, 1]')
        return value


class NmpcSerializer(serializers.Serializer):
    """Serializer for the ``[nmpc]`` table; weights are diagonals."""

    horizon = serializers.IntegerField(min_value=1, default=50)
    dt = serializers.FloatField(min_value=1e-6, required=False)
    q_s = vector_field(FEATURE_LENGTH, default=[1.0, 1.0, 100.0, 1.0])
    r_u = vector_field(FEATURE_LENGTH, default=[0.02, 0.03, 0.01, 0.3])
    w_s = vector_field(FEATURE_LENGTH, required=False)
    s_lower = feature_field(default=[-0.84, -0.63, 0.07, -math.pi])
    s_upper = feature_field(default=[0.84, 0.63, 1.0, math.pi])
    u_lower = vector_field(FEATURE_LENGTH, default=[-10.0, -10.0, -10.0, -0.6])
    u_upper = vector_field(FEATURE_LENGTH, default=[10.0, 10.0, 10.0, 0.6])
    max_iterations = serializers.IntegerField(min_value=1, default=30)
    tolerance = serializers.FloatField(min_value=0.0, default=1e-6)

    def validate(self, attrs):
        """Weights are non-negative and boxes ordered."""
        for name in ('q_s', 'r_u', 'w_s'):
            if any(weight < 0 for weight in attrs.get(name, ())):
                raise serializers.ValidationError({name: 'weights must be non-negative'})
        if any(weight <= 0 for weight in attrs['r_u']):
            raise serializers.ValidationError({'r_u': 'control weights must be positive'})
        for low, high in (('s_lower', 's_upper'), ('u_lower', 'u_upper')):
            if any(lo > hi for lo, hi in zip(attrs[low], attrs[high])):
                raise serializers.ValidationError({low: f'exceeds {high}'})
        attrs.setdefault('w_s', list(attrs['q_s']))
        return attrs


class CbfSerializer(serializers.Serializer):
    """Serializer for the ``[cbf]`` table, including the collision-gain gate."""

    r_s = serializers.FloatField(min_value=0.0, default=2.0)
    r_c = serializers.FloatField(min_value=0.0, default=20.0)
    d_s = serializers.FloatField(min_value=0.0, default=20.0)
    theta_star = AngleField(default=math.pi / 6)
    gamma_s = serializers.FloatField(min_value=0.0, default=3.0)
    gamma_c = serializers.FloatField(min_value=0.0, default=1.0)
    gamma_o = serializers.FloatField(min_value=0.0, default=0.1)
    alpha_v = serializers.FloatField(min_value=0.0, default=10.0)
    alpha_omega = serializers.FloatField(min_value=0.0, default=0.6)

    def validate(self, attrs):
        """Check R_s < D_s <= R_c, the margin range and the gain gate."""
        params = cbf_params(attrs)
        try:
            params.check()
        except (DegenerateRange, ValueError) as error:
            raise serializers.ValidationError(str(error))
        return attrs


class SegmentSerializer(serializers.Serializer):
    """Serializer for one ``[[target.segments]]`` entry; no duration means open-ended."""

    duration = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    speed = serializers.FloatField(min_value=0.0)
    lateral_accel = serializers.FloatField(default=0.0)


class TargetSerializer(serializers.Serializer):
    """Serializer for the ``[target]`` table."""

    position = vector_field(default=[0.0, 0.0, 0.0])
    heading = AngleField(default=0.0)
    size = vector_field(default=[4.6, 1.8, 1.5])
    segments = SegmentSerializer(many=True)

    def validate_segments(self, value):
        """Only the last segment may be open-ended."""
        if any(segment['duration'] is None for segment in value[:-1]):
            raise serializers.ValidationError('only the last segment may omit its duration')
        return value


class AgentSerializer(serializers.Serializer):
    """Serializer for one ``[[agents]]`` entry."""

    name = serializers.CharField()
    position = vector_field()
    yaw = AngleField(default=0.0)
    reference = feature_field()

    def validate_position(self, value):
        """Altitude cannot be negative."""
        if value[2] < 0:
            raise serializers.ValidationError('altitude must be non-negative')
        return value


class ObstacleSerializer(serializers.Serializer):
    """Serializer for one ``[[obstacles]]`` entry."""

    center = vector_field()
    half_extents = vector_field(default=[0.5, 0.5, 0.5])

    def validate_half_extents(self, value):
        """Boxes must have volume."""
        if any(extent <= 0 for extent in value):
            raise serializers.ValidationError('half extents must be positive')
        return value


class ScenarioSerializer(serializers.Serializer):
    """Serializer for a whole scenario document."""

    world = WorldSerializer()
    camera = CameraSerializer()
    noise = NoiseSerializer()
    ukf = UkfSerializer()
    nmpc = NmpcSerializer()
    cbf = CbfSerializer()
    target = TargetSerializer()
    agents = AgentSerializer(many=True, allow_empty=False)
    obstacles = ObstacleSerializer(many=True, default=list)

    def to_internal_value(self, data):
        """Validate omitted tables as empty ones so their defaults apply."""
        if isinstance(data, dict):
            data = {**{table: {} for table in OPTIONAL_TABLES}, **data}
        return super().to_internal_value(data)

    def validate(self, attrs):
        """References must lie inside the feature box."""
        lower, upper = attrs['nmpc']['s_lower'], attrs['nmpc']['s_upper']
        for agent in attrs['agents']:
            reference = agent['reference']
            inside = all(lower[k] <= reference[k] <= upper[k] for k in range(3))
            if not inside or abs(reference[3]) > math.pi + ANGLE_SLACK:
                raise serializers.ValidationError(
                    {'agents': f'reference of {agent["name"]} lies outside the feature box'},
                )
        names = [agent['name'] for agent in attrs['agents']]
        if len(set(names)) != len(names):
            raise serializers.ValidationError({'agents': 'agent names must be unique'})
        return attrs


def cbf_params(attrs: dict) -> CbfParams:
    """
    Build barrier parameters from a validated ``[cbf]`` table.

    Args:
        attrs (dict): Validated table.

    Returns:
        CbfParams: The parameters.
    """
    return CbfParams(
        R_s=attrs['r_s'],
        R_c=attrs['r_c'],
        D_s=attrs['d_s'],
        theta_star=attrs['theta_star'],
        gamma_s=attrs['gamma_s'],
        gamma_c=attrs['gamma_c'],
        gamma_o=attrs['gamma_o'],
        alpha_v=attrs['alpha_v'],
        alpha_omega=attrs['alpha_omega'],
    )
