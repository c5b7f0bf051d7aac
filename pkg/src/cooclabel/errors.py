"""Exception types shared across the package."""


class DataError(ValueError):
    """Raised for invalid data, malformed files, or numerical failures.

    Messages are prefixed with the failing module so CLI users can tell
    where a pipeline broke.
    """
