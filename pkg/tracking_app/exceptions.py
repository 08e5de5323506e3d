"""Module defining the errors raised by the tracking pipeline."""


class TrackingError(Exception):
    """Base class of every error raised by the tracking library."""


class NonPositiveDepth(TrackingError):
    """The target lies on or behind the camera plane (Z <= 0 or x3 <= 0)."""


class DegenerateHeading(TrackingError):
    """The target moves too slowly for its heading to be defined."""


class ScriptExhausted(TrackingError):
    """The target script has no segment covering the queried time."""


class CovarianceNotPSD(TrackingError):
    """The estimator covariance has no Cholesky factor even after jitter."""


class InsufficientSamples(TrackingError):
    """The motion window holds too few samples for a polynomial fit."""


class NotConverged(TrackingError):
    """The NMPC solver hit its iteration limit.

    Attributes:
        solution: Best iterate found before giving up.
    """

    def __init__(self, message: str, solution=None):
        """
        Keep the best iterate next to the message.

        Args:
            message (str): Human readable description.
            solution (OcpSolution | None): Best iterate found.
        """
        super().__init__(message)
        self.solution = solution


class InfeasibleInitialState(TrackingError):
    """The initial feature vector lies outside the state box beyond the margin."""


class DegenerateRange(TrackingError):
    """The consideration distance does not exceed the safety radius."""


class DegenerateGeometry(TrackingError):
    """A vector entering an occlusion angle has (numerically) zero length."""


class QpInfeasible(TrackingError):
    """No point satisfies every row of the quadratic program.

    Attributes:
        rows: Indices of the rows that block each other.
    """

    def __init__(self, message: str, rows: tuple[int, ...] = ()):
        """
        Keep the blocking subset next to the message.

        Args:
            message (str): Human readable description.
            rows (tuple[int, ...]): Indices of the blocking rows.
        """
        super().__init__(message)
        self.rows = rows


class IterationLimit(TrackingError):
    """The quadratic program solver ran out of iterations."""


class NoValidDetections(TrackingError):
    """A metric needs at least one valid detection and got none."""


class TickFailed(TrackingError):
    """A closed-loop tick failed; carries the context of the failure.

    Attributes:
        tick: Index of the failed tick.
        agent: Index of the agent being processed, None for world updates.
        report: Partial run report, attached by the runner.
    """

    def __init__(self, tick: int, agent: int | None, cause: Exception):
        """
        Describe the failure with its tick and agent.

        Args:
            tick (int): Index of the failed tick.
            agent (int | None): Index of the agent, if any.
            cause (Exception): The original error.
        """
        super().__init__(f'tick {tick}, agent {agent}: {cause}')
        self.tick = tick
        self.agent = agent
        self.cause = cause
        self.report = None
