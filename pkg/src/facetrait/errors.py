"""Exception hierarchy shared by every facetrait module."""


class FacetraitError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(FacetraitError, ValueError):
    """An argument violates an operation's preconditions (shape, range, length)."""


class ValidationError(FacetraitError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateInputError(ValidationError):
    pass


class StorageError(FacetraitError, OSError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class FormatError(FacetraitError, ValueError):
    """File or artifact bytes do not follow the expected container layout."""


class TruncationError(FormatError):
    pass


class LabelError(FormatError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CorruptionError(FormatError):
    """Checksum mismatch on a model container."""


class ParseError(FacetraitError, ValueError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class SplitError(FacetraitError, ValueError):
    pass


class TrainingError(FacetraitError, RuntimeError):
    pass


class NumericError(TrainingError):
    pass


class DecodeError(FacetraitError, ValueError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class ExtractionError(FacetraitError, RuntimeError):
    pass


class LayoutError(FacetraitError, ValueError):
    pass


class EmptyResultError(FacetraitError, RuntimeError):
    pass
