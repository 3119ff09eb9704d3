"""Exception hierarchy shared across the package.

Exit-code mapping lives in the CLI: ConfigError/DataError -> 2,
NumericError -> 3.
"""


class PhyresError(Exception):
    """Base class for all package errors."""


class ConfigError(PhyresError):
    """Invalid or inconsistent configuration."""


class DataError(PhyresError):
    """Malformed input data (parse errors, schema violations)."""


class NumericError(PhyresError):
    """Non-finite values or failed numerical procedures."""


class CalibrationError(NumericError):
    """Physics-parameter calibration could not produce a finite optimum."""
