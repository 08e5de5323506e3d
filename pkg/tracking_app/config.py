"""
Scenario configuration: TOML documents validated by serializers and turned
into the frozen dataclasses the numerical code consumes.
"""

import copy
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np
from rest_framework import serializers

from tracking_app.cbf import CbfParams
from tracking_app.estimator import UkfConfig, default_process_covariance, measurement_covariance
from tracking_app.geometry import FeatureState
from tracking_app.nmpc import NmpcConfig
from tracking_app.serializers import ScenarioSerializer, cbf_params
from tracking_app.vision import CameraIntrinsics, NoiseSpec
from tracking_app.world import Obstacle, TargetScript, TargetSegment

logger = logging.getLogger(__name__)

HASH_LENGTH = 12
OVERRIDE_SEPARATOR = '='


@dataclass(frozen=True, eq=False)
class AgentConfig:
    """Initial pose and reference features of one UAV."""

    name: str
    position: np.ndarray
    yaw: float
    reference: FeatureState


@dataclass(frozen=True, eq=False)
class TargetConfig:
    """Initial pose, size and motion script of the target."""

    position: np.ndarray
    heading: float
    size: np.ndarray
    script: TargetScript


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """
    Everything a closed-loop run needs.

    Attributes:
        name (str): Scenario name.
        dt (float): Simulation step, seconds.
        duration (float): Run length, seconds.
        seed (int): Noise seed.
        camera (CameraIntrinsics): Shared camera model.
        mount_pitch (float): Camera mount pitch, radians.
        mount_roll (float): Camera mount roll, radians.
        noise (NoiseSpec): Detector noise.
        ukf (UkfConfig): Estimator parameters.
        window (float): Motion-fit window, seconds.
        nmpc (NmpcConfig): Tracker parameters; the reference is set per agent.
        cbf (CbfParams): Barrier parameters.
        target (TargetConfig): Target.
        agents (tuple[AgentConfig, ...]): UAVs.
        obstacles (tuple[Obstacle, ...]): Static boxes.
        document (dict): Validated document the config was built from.
    """

    name: str
    dt: float
    duration: float
    seed: int
    camera: CameraIntrinsics
    mount_pitch: float
    mount_roll: float
    noise: NoiseSpec
    ukf: UkfConfig
    window: float
    nmpc: NmpcConfig
    cbf: CbfParams
    target: TargetConfig
    agents: tuple
    obstacles: tuple
    document: dict

    @property
    def ticks(self) -> int:
        """Number of simulation steps."""
        return int(round(self.duration / self.dt))

    @property
    def config_hash(self) -> str:
        """Short digest of the validated document."""
        return config_hash(self.document)

    def nmpc_for(self, index: int) -> NmpcConfig:
        """Tracker parameters of one UAV."""
        return replace(self.nmpc, s_star=self.agents[index].reference)


def canonical_json(document: dict) -> str:
    """Stable JSON rendering used for hashing and for ``config.json``."""
    return json.dumps(document, sort_keys=True, indent=2, default=float)


def config_hash(document: dict) -> str:
    """
    Return the first characters of the SHA-256 of a document.

    Args:
        document (dict): Validated document.

    Returns:
        str: Hex digest prefix.
    """
    return hashlib.sha256(canonical_json(document).encode()).hexdigest()[:HASH_LENGTH]


def parse_value(raw: str):
    """
    Interpret an override value with TOML syntax, falling back to a plain string.

    Args:
        raw (str): Text after the ``=``.

    Returns:
        Any: Parsed value.
    """
    try:
        return tomllib.loads(f'value = {raw}')['value']
    except tomllib.TOMLDecodeError:
        return raw.strip()


def apply_overrides(document: dict, overrides) -> dict:
    """
    Set dotted keys (``cbf.gamma_o=0.5``, ``agents.0.yaw="10deg"``) on a copy.

    Args:
        document (dict): Raw document.
        overrides (Iterable[str]): ``path=value`` strings.

    Returns:
        dict: The modified copy.

    Raises:
        serializers.ValidationError: On malformed overrides or unknown list indices.
    """
    result = copy.deepcopy(document)
    for override in overrides:
        path, separator, raw = override.partition(OVERRIDE_SEPARATOR)
        if not separator or not path.strip():
            raise serializers.ValidationError(f'override {override!r} is not key=value')
        keys = path.strip().split('.')
        node = result
        for key in keys[:-1]:
            node = _descend(node, key, override)
        last = keys[-1]
        if isinstance(node, list):
            node[_list_index(node, last, override)] = parse_value(raw)
        else:
            node[last] = parse_value(raw)
    return result


def _list_index(node: list, key: str, override: str) -> int:
    if not key.isdigit() or int(key) >= len(node):
        raise serializers.ValidationError(f'bad list index {key!r} in {override!r}')
    return int(key)


def _descend(node, key: str, override: str):
    if isinstance(node, list):
        return node[_list_index(node, key, override)]
    return node.setdefault(key, {})


def validate_document(document: dict) -> dict:
    """
    Validate a raw document.

    Args:
        document (dict): Raw document.

    Returns:
        dict: Validated data with defaults filled in.

    Raises:
        serializers.ValidationError: With field paths of every problem.
    """
    serializer = ScenarioSerializer(data=document)
    serializer.is_valid(raise_exception=True)
    return json.loads(canonical_json(serializer.validated_data))


def build_scenario(data: dict) -> ScenarioConfig:
    """
    Turn validated data into a scenario configuration.

    Args:
        data (dict): Output of ``validate_document``.

    Returns:
        ScenarioConfig: The configuration.
    """
    world, camera, noise = data['world'], data['camera'], data['noise']
    ukf, nmpc, target = data['ukf'], data['nmpc'], data['target']
    dt = world['dt']
    noise_spec = NoiseSpec(
        sigma_px=noise['sigma_px'],
        sigma_d=noise['sigma_d'],
        sigma_psi=noise['sigma_psi'],
        sigma_gps=noise['sigma_gps'],
        seed=world['seed'],
    )
    ukf_config = UkfConfig(
        alpha=ukf['alpha'],
        beta=ukf['beta'],
        kappa=ukf['kappa'],
        Q=default_process_covariance(
            dt, ukf['q_feature'], ukf['q_psi'], ukf['q_position'], ukf['q_velocity'],
        ),
        R=measurement_covariance(noise_spec),
    )
    nmpc_config = NmpcConfig(
        N_p=nmpc['horizon'],
        dt=nmpc.get('dt', dt),
        Q_s=np.diag(nmpc['q_s']),
        R_u=np.diag(nmpc['r_u']),
        W_s=np.diag(nmpc['w_s']),
        s_lower=np.array(nmpc['s_lower']),
        s_upper=np.array(nmpc['s_upper']),
        u_lower=np.array(nmpc['u_lower']),
        u_upper=np.array(nmpc['u_upper']),
        max_iterations=nmpc['max_iterations'],
        tolerance=nmpc['tolerance'],
    )
    script = TargetScript(tuple(
        TargetSegment(segment['duration'], segment['speed'], segment['lateral_accel'])
        for segment in target['segments']
    ))
    return ScenarioConfig(
        name=world['name'],
        dt=dt,
        duration=world['duration'],
        seed=world['seed'],
        camera=CameraIntrinsics(
            camera['fx'], camera['fy'], camera['cu'], camera['cv'],
            camera['width'], camera['height'],
        ),
        mount_pitch=camera['pitch'],
        mount_roll=camera['roll'],
        noise=noise_spec,
        ukf=ukf_config,
        window=ukf['window'],
        nmpc=nmpc_config,
        cbf=cbf_params(data['cbf']),
        target=TargetConfig(
            position=np.array(target['position']),
            heading=target['heading'],
            size=np.array(target['size']),
            script=script,
        ),
        agents=tuple(
            AgentConfig(
                name=agent['name'],
                position=np.array(agent['position']),
                yaw=agent['yaw'],
                reference=FeatureState.from_array(agent['reference']),
            )
            for agent in data['agents']
        ),
        obstacles=tuple(
            Obstacle(obstacle['center'], obstacle['half_extents'])
            for obstacle in data['obstacles']
        ),
        document=data,
    )


def load_scenario(source, overrides=()) -> ScenarioConfig:
    """
    Read, override, validate and build a scenario.

    Args:
        source (str | Path | dict): TOML file, JSON file (``config.json`` of a
            run) or an already parsed document.
        overrides (Iterable[str]): Dotted ``key=value`` overrides.

    Returns:
        ScenarioConfig: The configuration.

    Raises:
        serializers.ValidationError: If the document is invalid.
    """
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        text = path.read_text(encoding='utf-8')
        document = json.loads(text) if path.suffix == '.json' else tomllib.loads(text)
    config = build_scenario(validate_document(apply_overrides(document, overrides)))
    logger.debug('Loaded scenario %s (%s)', config.name, config.config_hash)
    return config
