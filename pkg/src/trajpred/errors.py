"""Exception types shared across the package."""


class TrajpredError(Exception):
    """Base class for all package errors."""


class SchemaError(TrajpredError):
    """Input table is missing a required column or has a malformed row."""


class IntegrityError(TrajpredError):
    """Track data violates an integrity constraint (duplicates, bad steps)."""


class FrameRangeError(TrajpredError):
    """A queried (vehicle, frame) pair is not covered by the data."""


class DimensionError(TrajpredError):
    """Tensor shapes do not agree for the requested operation."""


class NumericError(TrajpredError):
    """A non-finite value appeared where a finite one is required."""


class ConfigError(TrajpredError):
    """A configuration is inconsistent or infeasible."""


class UsageError(TrajpredError):
    """Bad command-line usage or unknown config key."""
