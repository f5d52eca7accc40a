"""Exception types shared across the toolkit."""


class TidiffError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(TidiffError, ValueError):
    """Tensor or image shapes do not agree where they must."""


class NumericError(TidiffError, RuntimeError):
    """A computation produced NaN/Inf where finite values are required."""


class SamplingError(NumericError):
    """Numeric failure during the sampling loop, with the step attached."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (at sampling step {step})")
        self.step = step


class TrainingAbortedError(NumericError):
    """Training hit a non-finite loss and stopped, with the step attached."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (at training step {step})")
        self.step = step


class FileFormatError(TidiffError, ValueError):
    """Base class for binary file format violations."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FileFormatError):
    """File declares an unsupported format version."""


class TruncatedPayloadError(FileFormatError):
    """File ended before the declared payload was complete."""


class ChecksumError(FileFormatError):
    """Trailing checksum does not match the file contents."""


class SplitLeakError(TidiffError, ValueError):
    """The same case id appears in splits that must be disjoint."""
