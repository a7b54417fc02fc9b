"""Exception types shared across the package.

The CLI maps these onto exit codes: SchemaError -> 2, NumericError -> 3,
CapacityError -> 4.
"""


class NfsimError(Exception):
    pass


class InvalidArgumentError(NfsimError, ValueError):
    pass


class SchemaError(NfsimError, ValueError):
    """Configuration file violates the documented schema."""


class NumericError(NfsimError, ArithmeticError):
    """A computation produced non-finite or inadmissible values."""


class CapacityError(NfsimError):
    """Requested state space or workload exceeds the configured limits."""


class TruncationError(NfsimError):
    """A-priori truncation tail bound is violated."""


class EnvelopeUnavailableError(NfsimError):
    """Input current not declared bounded; no thinning envelope exists."""


class NoTransitionError(NfsimError):
    """Total jump rate is zero; the state is frozen until rates change."""


class ClosureRequiredError(NfsimError):
    """Moment equations do not close for a non-affine gain."""
