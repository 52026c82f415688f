"""Exception hierarchy.

``InputError`` subclasses describe bad arguments or files (CLI exit code 1);
``SolverError`` subclasses describe failures inside an otherwise valid run
(CLI exit code 2).
"""


class SiteClusterError(Exception):
    pass


class InputError(SiteClusterError, ValueError):
    pass


class SolverError(SiteClusterError, RuntimeError):
    pass


class ZeroVectorError(InputError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has zero norm and cannot be normalized")
        self.row = row


class DimensionMismatch(InputError):
    pass


class EmptyCandidateSet(InputError):
    pass


class InvalidQuantile(InputError):
    pass


class KTooLarge(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class InstanceTooLarge(InputError):
    pass


class LengthMismatch(InputError):
    pass


class BadMagic(InputError):
    pass


class TruncatedFile(InputError):
    pass


class NonFiniteValue(InputError):
    def __init__(self, row: int, col: int, source: str = ""):
        where = f" in {source}" if source else ""
        super().__init__(f"non-finite value at row {row}, column {col}{where}")
        self.row = row
        self.col = col


class RejectionBudgetExceeded(SolverError):
    pass


class NoUnusedSites(SolverError):
    pass


class SweepFailed(SolverError):
    pass
