"""Exception hierarchy shared across the package."""


class SatDelayError(Exception):
    """Base class for every error raised by this package."""


class ZeroRowSum(SatDelayError):
    """An agent has no in-neighbors, so a normalized law is undefined."""

    def __init__(self, agent):
        super().__init__(f"agent {agent} has zero in-degree (row sum 0)")
        self.agent = agent


class InvalidTopology(SatDelayError):
    """Adjacency data violates the topology invariants."""


class ConvergenceFailure(SatDelayError):
    """An iterative linear-algebra routine failed to converge."""

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class DelayOrderViolation(SatDelayError):
    """An analysis that assumes tau1 <= tau2 received tau1 > tau2."""


class UnsupportedLaw(SatDelayError):
    """The requested analysis is not defined for this control law."""


class InadmissibleTopology(SatDelayError):
    """The graph/law pairing admits no order reduction."""


class NonFiniteState(SatDelayError):
    """A simulated state left the representable range."""

    def __init__(self, t):
        super().__init__(f"state left +/-1e12 at t={t:.6g} s")
        self.t = t


class WindowTooLong(SatDelayError):
    """The analysis window exceeds the trajectory duration."""


class AmplitudeBelowDelta(SatDelayError):
    """Describing function queried below the saturation level."""


class TargetOutOfRange(SatDelayError):
    """Requested describing-function value outside (0, 1]."""


class NoCrossing(SatDelayError):
    """The loop phase never reaches -pi in the scanned band."""


class PeerTimeout(SatDelayError):
    """A neighbor stayed silent for too many steps."""

    def __init__(self, peer):
        super().__init__(f"peer {peer} silent for more than the allowed steps")
        self.peer = peer


class BarrierTimeout(SatDelayError):
    """The start barrier did not complete in time."""


class SpawnFailure(SatDelayError):
    """Agent processes could not be started."""


class LogGap(SatDelayError):
    """Merged netbed logs are missing too many samples."""
