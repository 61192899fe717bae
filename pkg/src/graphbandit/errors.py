"""Exception hierarchy shared across the package."""


class GraphBanditError(Exception):
    """Base class for all library-specific errors."""


class ZeroAggregateNorm(GraphBanditError):
    """Neighborhood feature sum has (numerically) zero norm at some node."""

    def __init__(self, node: int):
        super().__init__(f"aggregate feature sum at node {node} has zero norm")
        self.node = node


class LengthMismatch(GraphBanditError):
    """Permutation length does not match the graph's node count."""


class ShrinkNotAllowed(GraphBanditError):
    """Padding target is smaller than the current node count."""


class DomainError(GraphBanditError):
    """Scalar input outside the admissible interval."""


class NotUnitNorm(GraphBanditError):
    """Kernel input vector is not unit-norm."""


class DimensionMismatch(GraphBanditError):
    """Operands disagree on feature dimension or node count."""


class TooManyNodes(GraphBanditError):
    """Brute-force permutation sum requested beyond its hard node cap."""


class CholeskyFailure(GraphBanditError):
    """Matrix not positive definite even after jitter escalation."""


class NumericalFailure(GraphBanditError):
    """An eigensolve or related numerical routine did not converge."""


class SingularDesign(GraphBanditError):
    """Dual design matrix could not be factorized."""


class EmptyPlausibleSet(GraphBanditError):
    """Phased elimination was asked to act on an empty candidate set."""


class NonFiniteLoss(GraphBanditError):
    """Training loss became NaN or infinite (divergence guard)."""


class IndexOutOfRange(GraphBanditError):
    """Reward table queried at an invalid domain index."""
