"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`SelbiasError`
so callers (and the CLI) can tell data/model problems apart from bugs.
"""


class SelbiasError(Exception):
    """Base class for all package errors."""


# graph
class GraphError(SelbiasError):
    pass


class CycleError(GraphError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("edges form a cycle: " + " -> ".join(self.cycle))


class DuplicateNodeError(GraphError):
    pass


class UnknownEndpointError(GraphError):
    pass


class UnknownNodeError(GraphError):
    pass


class OverlapError(GraphError):
    pass


class MultipleTreatmentsError(GraphError):
    pass


class RoleError(GraphError):
    """A graph lacks (or has too many of) a node role an operation needs."""


class GraphParseError(GraphError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


# criteria
class CriterionError(SelbiasError):
    pass


class UnobservedInAdjustmentError(CriterionError):
    pass


class PostTreatmentAdjustmentError(CriterionError):
    pass


class SubsetError(CriterionError):
    pass


class InvalidAdjustmentError(CriterionError):
    pass


# formula
class FormulaError(SelbiasError):
    pass


class FormulaSyntaxError(FormulaError, SyntaxError):
    def __init__(self, text, position, message):
        self.text = text
        self.position = position
        pointer = " " * position + "^"
        super().__init__(f"{message} at column {position + 1}\n  {text}\n  {pointer}")


class DuplicatePredictorError(FormulaError):
    pass


class ResponseInPredictorsError(FormulaError):
    pass


# data
class DataError(SelbiasError):
    pass


class MissingColumnError(DataError):
    pass


class InvariantViolation(DataError):
    def __init__(self, row, column, reason):
        self.row = row
        self.column = column
        self.reason = reason
        where = f"row {row}, " if row is not None else ""
        super().__init__(f"{where}column {column!r}: {reason}")


class NonBinaryError(InvariantViolation):
    pass


class EmptySelectionError(DataError):
    pass


# glm
class FitError(SelbiasError):
    pass


class SeparationError(FitError):
    pass


class RankDeficientError(FitError):
    pass


class NonConvergenceError(FitError):
    pass


class MissingPredictorError(FitError):
    pass


# estimators / inference
class EstimationError(SelbiasError):
    pass


class EmptyArmError(EstimationError):
    pass


class EmptyStratumError(EstimationError):
    def __init__(self, message, cell=None, failed=None):
        self.cell = cell
        self.failed = failed
        super().__init__(message)


class NonDiscreteError(EstimationError):
    pass


class PositivityError(EstimationError):
    pass


class SingularJacobianError(EstimationError):
    pass


class NotSolvedError(EstimationError):
    pass


class ZeroVarianceError(EstimationError):
    pass


# sim
class SimError(SelbiasError):
    pass


class DgpError(SimError):
    pass


class NonBinaryDgpError(DgpError):
    pass


class TooManyVariablesError(DgpError):
    pass


class ConfigError(SimError):
    pass
