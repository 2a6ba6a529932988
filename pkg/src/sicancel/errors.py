"""Exception types shared across the package.

The CLI maps these onto process exit codes (configuration 2, numeric 3,
data/file format 4); the HTTP service maps them onto status codes.
"""


class ConfigurationError(ValueError):
    """Invalid parameter combination or malformed configuration input."""


class NumericError(ArithmeticError):
    """Numerical failure: rank-deficient solve, divergence, non-finite loss."""


class DataFormatError(IOError):
    """Corrupt or unrecognised dataset / model / memory-image file."""
