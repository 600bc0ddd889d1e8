"""Exception hierarchy shared across the package."""


class QuiverVLMCError(Exception):
    """Base class for all package errors."""


class InputError(QuiverVLMCError, ValueError):
    """Malformed arguments: unknown edges, inadmissible words, bad depths."""


class DomainError(QuiverVLMCError, ValueError):
    """A parameter point lies outside the model's parameter box."""


class ModelValidityError(QuiverVLMCError):
    """The extension law is not a valid stochastic law."""


class DegeneracyError(QuiverVLMCError):
    """A regularity hypothesis fails: reducible chain, zero fiber mass, singular system."""


class EstimatorDegeneracyError(DegeneracyError):
    """A simulated estimate could not be formed (e.g. an unvisited visible state)."""


class ConfigError(QuiverVLMCError, ValueError):
    """The analysis configuration file is invalid."""
