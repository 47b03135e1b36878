"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`L2G2GError`,
so callers (and the CLI) can separate contract violations from bugs.
"""


class L2G2GError(Exception):
    """Base class for all package errors."""


class ParameterError(L2G2GError, ValueError):
    """An argument is outside its documented range."""


class ContractViolation(L2G2GError, ValueError):
    """A precondition on the inputs does not hold (shapes, coverage, ...)."""


class SizeError(L2G2GError, ValueError):
    """A requested object is larger than the configured maximum."""


class FormatError(L2G2GError, ValueError):
    """A text file does not follow the expected format."""


class DegenerateOverlapError(L2G2GError):
    """The overlap between two patches does not determine a rotation."""

    def __init__(self, pair, sigma_ratio):
        self.pair = tuple(pair)
        self.sigma_ratio = float(sigma_ratio)
        super().__init__(
            f"degenerate overlap between patches {self.pair[0]} and {self.pair[1]}: "
            f"sigma_min/sigma_max = {self.sigma_ratio:.3e}"
        )


class SyncError(L2G2GError):
    """Synchronization did not converge."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class TrainingError(L2G2GError):
    """Training produced a non-finite loss or a failed synchronization."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class MetricError(L2G2GError, ValueError):
    """A ranking metric was asked for on single-class labels."""
