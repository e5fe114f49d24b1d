"""Exception types raised across the package."""


class RDCError(ValueError):
    pass


class MalformedHeader(RDCError):
    pass


class NonFiniteValue(RDCError):
    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"non-finite value in row {row}")


class DuplicateId(RDCError):
    def __init__(self, ident: str):
        self.ident = ident
        super().__init__(f"duplicate id {ident!r}")


class EmptyClass(RDCError):
    def __init__(self, label: int):
        self.label = label
        super().__init__(f"class {label} has no rows")


class ZeroVector(RDCError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has zero norm")


class InsufficientClasses(RDCError):
    pass


class InsufficientRowsInClass(RDCError):
    def __init__(self, label: int, have: int, need: int):
        self.label = label
        super().__init__(f"class {label} has {have} rows, episode needs {need}")


class MissingRow(RDCError):
    pass


class DimensionMismatch(RDCError):
    pass


class ShapeMismatch(RDCError):
    pass


class IndexOutOfRange(RDCError):
    pass


class DegenerateRow(RDCError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"encoding row {row} is all zero")


class DivergenceDetected(RDCError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"loss became non-finite at epoch {epoch}")


class EpisodeFailed(RDCError):
    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"episode {index} failed: {type(cause).__name__}: {cause}")
