"""Exception hierarchy shared by all featdecomp modules.

The CLI maps these onto exit codes: usage/parameter problems exit 2,
data/format problems exit 3, training divergence exits 4.
"""

from __future__ import annotations


class FeatdecompError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FeatdecompError, ValueError):
    """An operation was called with invalid parameters (e.g. k > N)."""


class ConfigurationError(FeatdecompError, ValueError):
    """Inconsistent configuration across components (e.g. a label whose group is unmapped)."""


class FeatureFormatError(FeatdecompError, ValueError):
    """A feature or checkpoint file violates its on-disk format."""


class DataError(FeatdecompError, ValueError):
    """Data content is invalid (non-finite values, missing classes)."""


class StateError(FeatdecompError, RuntimeError):
    """An operation was invoked on an object missing required state (e.g. no forward cache)."""


class CapabilityError(FeatdecompError, RuntimeError):
    """A model was asked for an output its retained subgraph cannot produce."""


class DivergenceError(FeatdecompError, RuntimeError):
    """Training produced a non-finite loss. Carries the offending breakdown."""

    def __init__(self, message: str, breakdown=None, state=None):
        super().__init__(message)
        self.breakdown = breakdown
        self.state = state
