class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SamplingError(RuntimeError):
    """No eligible negative item exists for a user."""

    def __init__(self, user: int, message: str = "no eligible negative items"):
        self.user = user
        super().__init__(f"user {user}: {message}")


class NonFiniteGradientError(FloatingPointError):
    """A loss or gradient became NaN/inf; the epoch is aborted."""
