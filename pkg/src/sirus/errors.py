"""Exception hierarchy shared across the package."""


class SirusError(Exception):
    """Base class for all package errors."""


class DataError(SirusError):
    """Dataset ingestion or schema problem."""


class InvalidPathError(SirusError):
    """A rule path with an empty region (contradictory constraints)."""


class DegenerateRuleError(SirusError):
    """A rule whose inside or outside region covers no training point."""


class TuningError(SirusError):
    """Threshold tuning cannot proceed (e.g. no admissible grid values)."""
