"""Exception taxonomy shared across the package."""


class DomainError(ValueError):
    """A mathematical argument lies outside the function's domain."""


class UsageError(ValueError):
    """An API was called with structurally invalid arguments."""


class NumericsError(ArithmeticError):
    """A computation produced or encountered non-finite values, or a
    numerical routine failed to converge."""


class DataError(ValueError):
    """A dataset file or schema is malformed."""


class SplitError(ValueError):
    """A train/test split would be degenerate."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
