"""
Closed-loop scenario runner.

Each tick every UAV runs detect, estimate, fit the target motion, solve the
tracking problem, lift the command to the global frame, build its barrier
rows and filter. UAVs are evaluated concurrently against the same frozen
world snapshot; the world is stepped only after all of them are done.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from tracking_app import logs
from tracking_app.cbf import NeighborView, build_constraints
from tracking_app.config import ScenarioConfig, canonical_json
from tracking_app.estimator import EstimatorState, MotionWindow, TargetEstimator, fit_motion
from tracking_app.exceptions import TickFailed, TrackingError
from tracking_app.geometry import ControlInput, ControlInputGlobal
from tracking_app.metrics import (
    STATUS_COMPLETED, STATUS_FAILED, RunReport, RunTrace, build_report, write_plot_data,
)
from tracking_app.nmpc import ControllerOutput, TrackingController
from tracking_app.safety import FilterResult, augment, filter_command
from tracking_app.vision import Detection, Detector
from tracking_app.world import AgentState, TargetState, WorldState, step_agent, step_target

logger = logging.getLogger(__name__)

TICK_ERRORS = (TrackingError, ArithmeticError, ValueError, LinAlgError)


@dataclass(frozen=True, eq=False)
class AgentTick:
    """
    Everything one UAV produced during one tick.

    Attributes:
        detection (Detection): Its measurement.
        estimate (EstimatorState | None): Posterior, None before the first valid detection.
        output (ControllerOutput | None): Tracker output, None while hovering.
        rows (list[HalfspaceConstraint]): Barrier rows.
        result (FilterResult): The filtered command.
    """

    detection: Detection
    estimate: EstimatorState | None
    output: ControllerOutput | None
    rows: list
    result: FilterResult


def camera_command(u_global: ControlInputGlobal, R_cg: np.ndarray) -> ControlInput:
    """
    Express a filtered global command in the camera frame.

    Args:
        u_global (ControlInputGlobal): Applied command.
        R_cg (np.ndarray): Camera-to-global rotation.

    Returns:
        ControlInput: Camera velocity and rate about the camera y axis.
    """
    velocity = R_cg.T @ np.asarray(u_global.V, dtype=float)
    rate = R_cg.T @ np.asarray(u_global.omega, dtype=float)
    return ControlInput.from_array([*velocity, rate[1]])


class AgentPipeline:
    """
    Detector, estimator, motion fit, tracker and safety filter of one UAV.

    The pipeline sees its own detection, its own attitude and the neighbor
    view cut from the world snapshot, nothing else.
    """

    def __init__(self, index: int, config: ScenarioConfig):
        """
        Create the pipeline of one UAV.

        Args:
            index (int): The UAV.
            config (ScenarioConfig): Scenario.
        """
        self.index = index
        self.config = config
        self.detector = Detector(index, config.camera, config.noise, config.target.size)
        self.estimator = TargetEstimator(config.ukf, config.camera, config.dt, config.noise)
        self.window = MotionWindow(config.window)
        self.controller = TrackingController(config.nmpc_for(index))
        self.last_command = ControlInput()
        self.last_rotation = None

    def _estimate(self, detection: Detection, R_cg: np.ndarray) -> EstimatorState | None:
        if self.estimator.initialized:
            return self.estimator.step(self.last_command, detection, self.last_rotation, R_cg)
        if not detection.valid:
            return None
        self.estimator.initialize_from(detection, R_cg)
        logger.info('Agent %s estimator initialized', self.index)
        return self.estimator.state

    def tick(self, world: WorldState, t: float) -> AgentTick:
        """
        Run one tick against a world snapshot.

        Args:
            world (WorldState): Frozen snapshot.
            t (float): Tick time, seconds.

        Returns:
            AgentTick: Products of the tick.
        """
        R_cg = world.agents[self.index].R_cg
        detection = self.detector.detect(world)
        estimate = self._estimate(detection, R_cg)
        view = NeighborView.from_world(world, self.index, self.config.cbf)
        if estimate is None:
            output = None
            u_hat = ControlInputGlobal.zero()
            rows = build_constraints(view, self.config.cbf, None)
        else:
            self.window.push(t, estimate.r_q, estimate.V_q)
            velocity, acceleration = fit_motion(self.window)
            output = self.controller.command(
                estimate.features, R_cg.T @ velocity, R_cg.T @ acceleration,
            )
            u_hat = augment(output.command, R_cg)
            rows = build_constraints(view, self.config.cbf, estimate.r_q)
        result = filter_command(u_hat, rows, self.config.cbf)
        self.last_command = camera_command(result.u, R_cg)
        self.last_rotation = R_cg
        return AgentTick(detection, estimate, output, rows, result)


def initial_world(config: ScenarioConfig) -> WorldState:
    """
    Place UAVs, target and obstacles at t = 0.

    Args:
        config (ScenarioConfig): Scenario.

    Returns:
        WorldState: Initial snapshot.
    """
    agents = tuple(
        AgentState(agent.position, agent.yaw, config.mount_pitch, config.mount_roll)
        for agent in config.agents
    )
    target = TargetState.start(config.target.position, config.target.heading, config.target.script)
    return WorldState(0.0, agents, target, config.obstacles)


def run_directory(config: ScenarioConfig, out_dir) -> Path:
    """Artifact directory of a run: ``<out_dir>/<config hash>-seed<seed>``."""
    return Path(out_dir) / f'{config.config_hash}-seed{config.seed}'


class ScenarioRunner:
    """Tick-synchronous closed loop over every UAV of a scenario."""

    def __init__(self, config: ScenarioConfig, out_dir=None, workers: int = 1):
        """
        Prepare a run.

        Args:
            config (ScenarioConfig): Scenario.
            out_dir (str | Path | None): Root directory for artifacts; nothing
                is written when None.
            workers (int): Threads evaluating UAVs within a tick.
        """
        self.config = config
        self.workers = max(1, int(workers))
        self.run_dir = run_directory(config, out_dir) if out_dir is not None else None
        self.pipelines = [AgentPipeline(index, config) for index in range(len(config.agents))]
        self.trace = RunTrace(config)

    def _evaluate(self, executor, world: WorldState, tick: int, t: float) -> list:
        if executor is None:
            futures = None
        else:
            futures = [executor.submit(pipeline.tick, world, t) for pipeline in self.pipelines]
        outcomes = []
        for index, pipeline in enumerate(self.pipelines):
            try:
                if futures is None:
                    outcomes.append(pipeline.tick(world, t))
                else:
                    outcomes.append(futures[index].result())
            except TICK_ERRORS as error:
                raise TickFailed(tick, index, error) from error
        return outcomes

    def _record(self, log, t: float, outcomes) -> None:
        for index, outcome in enumerate(outcomes):
            self.trace.record_detection(t, index, outcome.detection)
            if outcome.estimate is not None:
                self.trace.record_estimate(t, index, outcome.estimate.features)
            if log is None:
                continue
            log.log_detection(t, index, outcome.detection)
            if outcome.estimate is not None:
                log.log_estimate(t, index, outcome.estimate)
            if outcome.output is not None:
                log.log_nmpc(t, index, outcome.output)
            log.log_constraints(t, index, outcome.rows, outcome.result.slacks)
            log.log_filter(t, index, outcome.result, outcome.rows)
        self.trace.record_filter([outcome.result for outcome in outcomes])

    def _advance(self, world: WorldState, outcomes, tick: int) -> WorldState:
        config = self.config
        agents = tuple(
            step_agent(agent, outcome.result.u, config.dt)
            for agent, outcome in zip(world.agents, outcomes)
        )
        target = step_target(world.target, config.dt, config.target.script)
        return WorldState((tick + 1) * config.dt, agents, target, world.obstacles)

    def _loop(self, log, executor) -> WorldState:
        world = initial_world(self.config)
        for tick in range(self.config.ticks):
            t = tick * self.config.dt
            self._sample(log, t, world)
            outcomes = self._evaluate(executor, world, tick, t)
            self._record(log, t, outcomes)
            world = self._advance(world, outcomes, tick)
        self._sample(log, world.time, world)
        return world

    def _sample(self, log, t: float, world: WorldState) -> None:
        self.trace.record_world(t, world)
        if log is not None:
            log.log_world(t, world)

    def run(self) -> RunReport:
        """
        Run the scenario to the end.

        Returns:
            RunReport: Metrics and audits of the completed run.

        Raises:
            TickFailed: If a tick raised; its ``report`` holds the partial report.
        """
        config = self.config
        logger.info(
            'Running %s (%s, seed %s, %s ticks) into %s',
            config.name, config.config_hash, config.seed, config.ticks, self.run_dir,
        )
        log = logs.RunLog(self.run_dir) if self.run_dir is not None else None
        if log is not None:
            (self.run_dir / logs.CONFIG_FILE).write_text(
                canonical_json(config.document) + '\n', encoding='utf-8',
            )
            log.log_obstacles(config.obstacles)
        pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else nullcontext()
        failure = None
        with log if log is not None else nullcontext(), pool as executor:
            try:
                self._loop(log, executor)
            except TickFailed as error:
                logger.error('Run aborted: %s', error)
                failure = error
        report = build_report(
            self.trace, self.run_dir, STATUS_FAILED if failure else STATUS_COMPLETED,
        )
        if self.run_dir is not None:
            write_plot_data(self.trace, self.run_dir)
            logs.write_json(self.run_dir / logs.REPORT_FILE, report.to_dict())
        logger.info(
            'Finished %s: status %s, audits %s', config.name, report.status, report.audits,
        )
        if failure is not None:
            failure.report = report
            raise failure
        return report


def run(config: ScenarioConfig, out_dir=None, workers: int = 1) -> RunReport:
    """
    Run a scenario.

    Args:
        config (ScenarioConfig): Scenario.
        out_dir (str | Path | None): Root directory for artifacts.
        workers (int): Threads evaluating UAVs within a tick.

    Returns:
        RunReport: Metrics and audits.
    """
    return ScenarioRunner(config, out_dir, workers).run()
