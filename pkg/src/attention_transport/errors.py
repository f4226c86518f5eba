"""Exception hierarchy shared by every module of the package."""


class AttentionTransportError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(AttentionTransportError, ValueError):
    pass


class DimensionMismatch(AttentionTransportError, ValueError):
    pass


class InvalidMeasure(AttentionTransportError, ValueError):
    pass


class SolverFailure(AttentionTransportError, RuntimeError):
    pass


class UnequalSizes(AttentionTransportError, ValueError):
    pass


class NonUniformWeights(AttentionTransportError, ValueError):
    pass


class ProductTooLarge(AttentionTransportError, ValueError):
    pass


class PotentialOverflow(AttentionTransportError, OverflowError):
    """Raised when a potential's exponent exceeds 700 natural-log units."""


class KeyNotFound(AttentionTransportError, KeyError):
    pass


class KeyCollision(AttentionTransportError, ValueError):
    pass


class ZeroEps(AttentionTransportError, ArithmeticError):
    """The lower bound of a potential underflows to zero in double precision."""

    def __init__(self, log_eps: float):
        super().__init__(f"eps_G underflows to 0 (log eps_G = {log_eps:.6g})")
        self.log_eps = log_eps


class Infeasible(AttentionTransportError, ValueError):
    pass


class MaxIterExceeded(AttentionTransportError, RuntimeError):
    pass


class SupportMismatch(AttentionTransportError, ValueError):
    pass


class NoFeasibleSamples(AttentionTransportError, RuntimeError):
    pass


class DegenerateGrid(AttentionTransportError, ValueError):
    pass


class SampleBudgetTooSmall(AttentionTransportError, ValueError):
    pass


class AllPairsDegenerate(AttentionTransportError, RuntimeError):
    pass


class IndexOutOfRange(AttentionTransportError, IndexError):
    pass


class TNotInNeighborhood(AttentionTransportError, ValueError):
    pass


class ConfigError(AttentionTransportError, ValueError):
    pass
