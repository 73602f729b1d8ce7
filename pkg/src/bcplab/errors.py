"""Exception types raised across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """An input violates a documented precondition or type invariant."""


class UndefinedSimilarityError(ValidationError):
    """A similarity (or signature) was requested for empty sets."""


class CapacityError(ValidationError):
    """A construction would exceed the id type or a configured memory cap."""
