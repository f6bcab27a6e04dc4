"""Exception hierarchy shared by all turblab modules."""


class TurblabError(Exception):
    """Base class for every error raised by the package."""


class ContractViolation(TurblabError):
    """An operation was called outside its precondition."""


class ParameterError(TurblabError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class CFLViolation(TurblabError):
    """Requested time step exceeds the advective/reactive stability limit."""

    def __init__(self, courant, limit=0.5, what="advective"):
        self.courant = float(courant)
        self.limit = float(limit)
        super().__init__(
            f"{what} Courant number {self.courant:.4g} exceeds limit {self.limit:g}; "
            f"reduce dt by at least a factor {self.courant / self.limit:.3g}"
        )


class SolverAbort(TurblabError):
    """A trajectory could not be continued (NaN, boundary budget exhausted, ...)."""

    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class ConfigError(TurblabError):
    """Invalid experiment configuration."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message if key is None else f"{key}: {message}")
