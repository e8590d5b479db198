"""Exception types shared across the package.

Everything subclasses ValueError so generic callers can catch one type.
"""


class InvalidInputError(ValueError):
    """Input violates a value-level precondition (non-finite, off-simplex, bad label)."""


class ShapeError(ValueError):
    """Array shape or size is incompatible with the operation."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class InsufficientDataError(ValueError):
    """Not enough stored samples to satisfy the request."""


class ParseError(ValueError):
    """Malformed on-disk data."""


class OracleError(ValueError):
    """The finite-difference probe hit a non-finite function value."""


class DivergenceError(ValueError):
    """Training produced non-finite gradients or parameters."""
