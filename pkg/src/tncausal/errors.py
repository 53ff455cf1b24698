"""Exception hierarchy shared by every module.

Anything deriving from :class:`ValidationError` maps to CLI exit code 3.
Inconsistent models are reported through typed result objects instead of
exceptions (see :mod:`tncausal.cm`).
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DuplicateFactorError(ValidationError):
    pass


class UnknownFactorError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class NotPSDError(ValidationError):
    pass


class NotHermitianError(ValidationError):
    pass


class DanglingEdgeError(ValidationError):
    pass


class NonlinearMapError(ValidationError):
    pass


class CyclicGraphError(ValidationError):
    pass


class NonDisjointSetsError(ValidationError):
    pass


class FamilyTooLargeError(ValidationError):
    """Exhaustive enumeration would exceed the configured edge budget."""


class ZeroOperatorError(ValidationError):
    pass


class NotSubnormalizedError(ValidationError):
    pass


class NotIsometryError(ValidationError):
    pass


class OddLegCountError(ValidationError):
    pass


class RegionOnBoundaryError(ValidationError):
    pass


class RetainedCycleError(ValidationError):
    pass


class AllSamplesInconsistentError(RuntimeError):
    """Every sampled intervention or operator pair had a vanishing normalizer."""
