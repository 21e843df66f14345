"""Exception types shared across the package."""

from __future__ import annotations


class NamejoinError(Exception):
    """Base class for all namejoin errors."""


class EmptyName(NamejoinError):
    """A name was empty or whitespace-only."""


class EmptySource(NamejoinError):
    """An input stream or file contained no usable records."""


class FormatError(NamejoinError):
    """A file or stream did not match its documented format."""


class VersionMismatch(FormatError):
    """A persisted file declares a format version this build cannot read."""


class ShapeMismatch(NamejoinError):
    """Array dimensions disagree with what an operation requires."""


class DimensionMismatch(ShapeMismatch):
    """Vectors of differing dimensionality were mixed."""


class ZeroVector(NamejoinError):
    """A zero vector cannot be normalized."""


class EmptySequence(NamejoinError):
    """An encoder input had no valid steps."""


class EmptyInput(NamejoinError):
    """An operation received an empty collection where items are required."""


class EmptyBatch(EmptyInput):
    """A training batch or triplet list was empty."""


class EmptyColumn(EmptyInput):
    """A join column contained no usable values."""


class EmptyCatalog(EmptyInput):
    """An item catalog contained no items."""


class TooFewIdentities(NamejoinError):
    """Not enough identities to produce the requested split."""


class NonFiniteLoss(NamejoinError):
    """Training encountered a NaN or infinite loss or gradient."""
