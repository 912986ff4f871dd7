"""Semantic exception hierarchy shared across the package."""

from __future__ import annotations


class HitTimesError(Exception):
    """Base error for this package."""


class ValidationError(HitTimesError, ValueError):
    """Inputs violate a contract: domain, shape, or consistency checks."""


class NumericalDriftError(HitTimesError, FloatingPointError):
    """Accumulated floating error exceeded the mass-balance tolerance."""


class ProbabilityUnderflowError(HitTimesError):
    """A chained exact probability underflowed below 1e-300."""


class BudgetExceededError(HitTimesError):
    """A requested exact computation exceeds the configured size budget."""


class InsufficientDataError(HitTimesError):
    """A Monte-Carlo estimate has fewer observations than required."""


class SamplingError(HitTimesError):
    """A sampler produced a value outside its supported range."""


class ConfigError(ValidationError):
    """An experiment configuration failed schema validation."""
