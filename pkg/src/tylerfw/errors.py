"""Exception hierarchy shared by all tylerfw modules."""


class TylerFWError(Exception):
    """Base class for all errors raised by this package."""


class PositiveDefinitenessLost(TylerFWError):
    """A matrix that must be positive definite failed a Cholesky factorization."""


class NumericalBreakdown(TylerFWError):
    """A quantity that must stay positive (e.g. x_i^T Q^{-1} x_i) became <= 0."""


class DenominatorNonPositive(TylerFWError):
    """The step-size or Sherman-Morrison denominator became non-positive."""


class ZeroOperator(TylerFWError):
    """The power method was handed an operator that annihilates its start vector."""

    def __init__(self, start_vector):
        super().__init__("operator application vanished on the start vector")
        self.start_vector = start_vector


class NotDescent(TylerFWError):
    """The FW direction candidate failed its descent certificate within budget."""


class Converged(TylerFWError):
    """Signal: the gradient vanished, the current iterate solves the TME equation."""


class AssumptionCheckFailed(TylerFWError):
    """The dataset failed a necessary condition for the estimator to exist."""


class IterationFailure(TylerFWError):
    """A solver iteration failed; carries the partial trace and last state.

    Raised by the solve loops when an inner operation breaks down (lost
    positive definiteness, non-positive denominators). `trace` holds the
    rows recorded before the failure, `q_last` / `objective_last` the last
    valid iterate.
    """

    def __init__(self, cause, trace, q_last, objective_last):
        super().__init__(f"iteration failed: {cause!r}")
        self.cause = cause
        self.trace = trace
        self.q_last = q_last
        self.objective_last = objective_last


class ZeroVectorInput(TylerFWError):
    """A data column is the zero vector and cannot be normalized."""

    def __init__(self, index):
        super().__init__(f"column {index} is the zero vector")
        self.index = index


class DatasetFileError(TylerFWError):
    """Base class for dataset file parsing failures."""


class MalformedHeader(DatasetFileError):
    pass


class DimensionMismatch(DatasetFileError):
    pass


class NonFiniteEntry(DatasetFileError):
    def __init__(self, row, col):
        super().__init__(f"non-finite entry at row {row}, column {col}")
        self.row = row
        self.col = col
