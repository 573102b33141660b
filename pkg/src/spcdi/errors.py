class InvalidArgument(ValueError):
    """An argument violates an operation's precondition."""


class FormatError(ValueError):
    """A serialized artifact is malformed.

    ``offset`` is the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DivergedError(RuntimeError):
    """Reconstruction produced a non-finite residual.

    The diagnostics collected up to the failure are attached.
    """

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class SamplingWarning(UserWarning):
    """A propagation kernel is undersampled on the requested grid."""
