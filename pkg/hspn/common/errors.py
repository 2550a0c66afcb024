class SizeLimitError(ValueError):
    """Raised when an exact solver is asked for a problem larger than it accepts."""


class ContainerFormatError(ValueError):
    """Raised when a sample file or checkpoint cannot be parsed or has an unknown format/version."""


class NonFiniteLossError(RuntimeError):
    """Raised when a training loss becomes NaN or infinite."""

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path
