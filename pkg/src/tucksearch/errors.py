"""Exception types shared across the package.

The CLI maps these onto process exit codes: bad arguments (ValueError) -> 1,
DataFormatError / CostResolutionError -> 2, NumericError -> 3.
"""


class DataFormatError(Exception):
    """A file or structured input failed parsing or validation."""


class CostResolutionError(LookupError):
    """A (layer, rank pair) could not be resolved against a cost table."""


class NumericError(RuntimeError):
    """A numeric routine failed to converge or produced invalid values."""
