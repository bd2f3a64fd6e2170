"""Exception types shared across the package."""


class SimOSSBError(Exception):
    """Base class for all package errors."""


class DimensionError(SimOSSBError, ValueError):
    """Vector lengths disagree with the number of goods."""


class ParameterError(SimOSSBError, ValueError):
    """An argument is outside its admissible range."""


class ConfigurationError(SimOSSBError, ValueError):
    """An experiment or environment configuration is invalid."""


class CapabilityError(SimOSSBError, RuntimeError):
    """The request exceeds what an exact/exhaustive routine supports."""


class GridMismatchError(SimOSSBError, ValueError):
    """Two predictions live on different price grids."""


class SpecParseError(SimOSSBError, ValueError):
    """A strategy string could not be parsed."""

    def __init__(self, message, token=None):
        super().__init__(message)
        self.token = token


class IncompleteGameError(SimOSSBError, LookupError):
    """Payoff table lacks profiles needed for a computation."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(str(p) for p in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"missing {len(self.missing)} profile(s): {shown}{more}")
