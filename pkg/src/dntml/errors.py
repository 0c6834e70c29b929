class InvalidParameterError(ValueError):
    """A parameter is outside its documented domain."""


class InvalidActionError(ValueError):
    """An action cannot be applied to the current environment state."""


class OrderingError(ValueError):
    """A timestamped input arrived out of order."""


class ConfigError(ValueError):
    """An experiment configuration failed validation.

    ``path`` is the dotted key path of the offending entry, when known.
    """

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
