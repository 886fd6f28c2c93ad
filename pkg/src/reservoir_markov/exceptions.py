"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`ReservoirMarkovError`; most also derive from ``ValueError`` so that
callers validating user input can catch the builtin.
"""


class ReservoirMarkovError(Exception):
    """Base class for all package errors."""


# -- matrices and chains ---------------------------------------------------

class InvalidMatrixError(ReservoirMarkovError, ValueError):
    pass


class NonSquareError(InvalidMatrixError):
    pass


class NegativeEntryError(InvalidMatrixError):
    pass


class RowSumOutOfToleranceError(InvalidMatrixError):
    pass


class NotErgodicError(ReservoirMarkovError, ValueError):
    pass


class NotIrreducibleError(NotErgodicError):
    """More than one closed class, so the stationary law is not unique."""


class SingularSystemError(ReservoirMarkovError, ArithmeticError):
    pass


class TargetUnreachableError(ReservoirMarkovError, ValueError):
    """The target class cannot be reached from the start with probability one."""


class StateIndexError(ReservoirMarkovError, IndexError):
    pass


# -- model construction ----------------------------------------------------

class DegenerateInflowError(ReservoirMarkovError, ValueError):
    pass


class ZeroP0Error(DegenerateInflowError):
    pass


class UnstableError(ReservoirMarkovError, ValueError):
    pass


class TruncationNotConvergedError(ReservoirMarkovError, ArithmeticError):
    pass


class OutOfDomainError(ReservoirMarkovError, ValueError):
    pass


class NoConvergenceError(ReservoirMarkovError, ArithmeticError):
    pass


class ZeroAtomError(ReservoirMarkovError, ValueError):
    pass


class InvalidModelError(ReservoirMarkovError, ValueError):
    pass


# -- dependability / resilience --------------------------------------------

class StartInEmptyClassError(ReservoirMarkovError, ValueError):
    pass


class EmptyUnreachableError(TargetUnreachableError):
    pass


class TopUnreachableError(TargetUnreachableError):
    pass


class E3UnreachableError(TargetUnreachableError):
    pass


class E1UnreachableError(TargetUnreachableError):
    pass


# -- simulation ------------------------------------------------------------

class InvalidStartError(ReservoirMarkovError, ValueError):
    pass


class UnknownMetricError(ReservoirMarkovError, KeyError):
    pass


# -- data ingestion --------------------------------------------------------

class DataError(ReservoirMarkovError, ValueError):
    pass


class PartialYearError(DataError):
    pass


class NegativeFlowError(DataError):
    pass


class TooFewYearsError(DataError):
    pass


class TooShortError(DataError):
    pass


class MissingColumnsError(DataError):
    pass
