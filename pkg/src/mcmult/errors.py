"""Exception types raised across the package."""


class MCMulTError(Exception):
    """Base class for all package errors."""


class DimensionError(MCMulTError, ValueError):
    pass


class ConfigError(MCMulTError, ValueError):
    pass


class DegenerateMaskError(MCMulTError, ValueError):
    """A softmax row had every entry masked out."""


class ContractError(MCMulTError, ValueError):
    """A caller violated an operation's precondition."""


class SchedulingError(MCMulTError, RuntimeError):
    """A layer asked for a sibling scale that has not been computed yet."""


class DatasetLoadError(MCMulTError, OSError):
    pass


class TrainingError(MCMulTError, RuntimeError):
    pass
