"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or model declaration.

    ``path`` locates the offending key, e.g. ``driver.coords[0].jumps[1].alpha``.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DivergenceError(RuntimeError):
    """An integration produced a non-finite state."""

    def __init__(self, message: str, where: float | int | None = None):
        self.where = where
        super().__init__(message)


class InstabilityError(RuntimeError):
    """The explicit density stepper detected blow-up."""
