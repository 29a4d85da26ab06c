"""Exception types shared across the toolkit."""


class SparseDriftError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SparseDriftError, ValueError):
    """A numeric parameter is outside its valid range."""


class SpecError(SparseDriftError, ValueError):
    """A generator / plan specification is internally inconsistent."""


class DataError(SparseDriftError, ValueError):
    """Input data violates a contract (shape, dtype, missing cells, parse)."""


class ConfigError(SparseDriftError, ValueError):
    """An experiment configuration is invalid."""


class ImputationError(SparseDriftError, ValueError):
    """Imputation cannot produce a complete matrix (e.g. fully missing feature)."""


class SelectionError(SparseDriftError, ValueError):
    """Imputer selection cannot run; fall back to the distribution defaults."""
