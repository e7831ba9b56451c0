"""Exception hierarchy.

Configuration problems map to CLI exit code 2, numeric/divergence problems to
exit code 3 (see :mod:`ergosde.cli`).
"""


class ErgoSdeError(Exception):
    """Base class for all package errors."""


class ConfigError(ErgoSdeError, ValueError):
    """Unknown benchmark, missing parameter, bad config key or value."""


class NumericError(ErgoSdeError, ArithmeticError):
    """Non-finite values or a failed factorization."""


class DivergenceError(NumericError):
    """A simulated state became non-finite or left the explosion radius."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"trajectory diverged at step {step}")


class RankError(NumericError):
    """Requested spectral order exceeds the numerical rank of the kernel matrix."""

    def __init__(self, order, rank):
        self.order = order
        self.rank = rank
        super().__init__(f"order M={order} exceeds numerical rank r_N={rank}")


class DegeneracyError(NumericError):
    """The projected diffusion estimate is not positive definite."""


class UnsupportedKernelError(ErgoSdeError, TypeError):
    """The kernel has no closed-form gradient bound L(x)."""


class InconclusiveScalingError(NumericError):
    """Every point of an error-scaling sweep sits below its noise floor.

    The partially filled report is attached as ``report``.
    """

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
