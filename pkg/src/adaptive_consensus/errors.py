"""Exception hierarchy shared by every module of the package."""


class ConsensusError(Exception):
    """Base class for all package errors."""


class InvalidNode(ConsensusError):
    pass


class InvalidEdge(ConsensusError):
    pass


class NotZPattern(ConsensusError):
    """Matrix has a positive off-diagonal entry."""


class NotMMatrix(ConsensusError):
    pass


class ScalingNotFound(ConsensusError):
    pass


class SynthesisInfeasible(ConsensusError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NumericalFailure(ConsensusError):
    pass


class InvalidEpsilon(ConsensusError):
    pass


class ModeMismatch(ConsensusError):
    pass


class InvalidLeakage(ConsensusError):
    pass


class IncompleteNeighborhood(ConsensusError):
    pass


class InvalidModel(ConsensusError):
    pass


class DimensionError(ConsensusError):
    pass


class InsufficientData(ConsensusError):
    pass


class StructuralAssumptionFailed(ConsensusError):
    pass


class DivergenceDetected(ConsensusError):
    def __init__(self, t, message=None):
        super().__init__(message or f"state diverged at t={t:.6g}")
        self.t = t


class ScenarioError(ConsensusError):
    """Schema or consistency violation in a scenario document.

    ``path`` is a slash-separated location of the offending field.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
