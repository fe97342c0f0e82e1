"""Exception hierarchy shared across the pipeline.

The CLI prints ``type(exc).__name__`` on stderr, so class names are part of
the public interface.
"""


class PlaError(Exception):
    pass


class MissingAttribute(PlaError):
    def __init__(self, name):
        super().__init__(f"record lacks attribute {name!r}")
        self.name = name


class DegenerateToken(PlaError):
    pass


class ConvergenceFailure(PlaError):
    pass


class UnknownToken(PlaError):
    pass


class ShapeMismatch(PlaError, ValueError):
    pass


class InvalidStep(PlaError, ValueError):
    pass


class MissingOutcome(PlaError):
    def __init__(self, wafer_id):
        super().__init__(f"wafer {wafer_id!r} has no outcome")
        self.wafer_id = wafer_id


class IndexOutOfRange(PlaError, IndexError):
    pass


class LengthMismatch(PlaError, ValueError):
    pass


class NonFiniteLoss(PlaError, FloatingPointError):
    pass


class InvalidConfig(PlaError, ValueError):
    pass


class CsvSchemaError(PlaError):
    def __init__(self, path, row, column, message):
        super().__init__(f"{path}: row {row}, column {column!r}: {message}")
        self.path = path
        self.row = row
        self.column = column


class StaleCheckpoint(PlaError):
    pass


class MixedConfigHash(PlaError):
    pass


class FoldTooSmall(PlaError):
    pass
