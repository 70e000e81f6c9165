"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
DegeneracyError -> 4.
"""


class TsnecwmError(Exception):
    """Base class for all package errors."""


class ConfigError(TsnecwmError):
    """Invalid configuration (bad column spec, unknown model code, ...)."""


class DataError(TsnecwmError):
    """Invalid input data (missing file, non-numeric cell, ragged row, ...)."""


class DegeneracyError(TsnecwmError):
    """Numerical degeneracy (duplicate points, singular scatter, collapsed EM run)."""
