"""Exception hierarchy shared by the library and the command line."""


class LisReduceError(Exception):
    """Base class for all errors raised by :mod:`lisreduce`."""


class ConfigError(LisReduceError, ValueError):
    """Invalid experiment configuration or CLI input (exit code 2)."""


class NumericalError(LisReduceError, ArithmeticError):
    """A factorization or solve failed numerically (exit code 3)."""


class IndefiniteMatrixError(NumericalError):
    """A matrix expected to be positive definite is not."""


class SingularSystemError(NumericalError):
    """A (full or reduced) system matrix is singular to working precision."""


class RankError(NumericalError):
    """The requested rank exceeds the numerical rank of the operator.

    Attributes
    ----------
    requested : int
        Rank asked for by the caller.
    achievable : int
        Largest rank supported by the data at the truncation threshold.
    """

    def __init__(self, requested, achievable, what="operator"):
        self.requested = int(requested)
        self.achievable = int(achievable)
        super().__init__(
            f"requested rank {self.requested} exceeds numerical rank of {what} "
            f"(achievable rank: {self.achievable})"
        )
