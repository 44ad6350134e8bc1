"""Exception types shared across the package."""


class TddDynamicsError(Exception):
    """Base class for all package errors."""


class ExplosionError(TddDynamicsError):
    """Raised when a path or class count would exceed its configured cap."""

    def __init__(self, count, cap, what="paths"):
        self.count = count
        self.cap = cap
        self.what = what
        super().__init__(f"{what} count {count} exceeds cap {cap}")


class CfgFormatError(TddDynamicsError, ValueError):
    """Malformed graph text."""


class InvalidGraphError(TddDynamicsError, ValueError):
    """Raised when an operation needs a valid graph and gets an invalid one."""

    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid control flow graph: {detail}")


class ConsistencyError(TddDynamicsError, ValueError):
    """Two point specifications map the same input to different outputs."""

    def __init__(self, first, second):
        self.pair = (first, second)
        super().__init__(f"inconsistent point specifications: {first} vs {second}")


class InputExhausted(TddDynamicsError):
    """The decision sequence ran out before the walk reached the exit."""


class PathUnlabeled(TddDynamicsError, KeyError):
    """The labeler has no output for a path fingerprint."""


class DegenerateInput(TddDynamicsError, ValueError):
    """Both class sets are empty, so the stability ratio is 0/0."""


class ZeroSeparation(TddDynamicsError, ValueError):
    """Twin trajectories coincide at the reference step."""


class InsufficientNeighbors(TddDynamicsError):
    """Too few reference points have a usable neighbourhood."""

    def __init__(self, valid, total):
        self.valid = valid
        self.total = total
        super().__init__(
            f"only {valid} of {total} reference points have enough neighbours"
        )


class ShortTraceError(TddDynamicsError, ValueError):
    """Series too short for the requested analysis."""


class ConfigError(TddDynamicsError, ValueError):
    """Invalid scenario configuration."""


class SchemaError(TddDynamicsError, ValueError):
    """A trajectory CSV does not match the expected schema."""
