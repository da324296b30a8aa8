"""Exception types shared across the package."""


class BpbError(Exception):
    """Base class for all package errors."""


class InputError(BpbError, ValueError):
    """A caller-supplied argument violates a documented precondition."""


class DimensionMismatchError(InputError):
    """Vector/functional/operator dimensions do not match the space."""


class UnsupportedDimensionError(InputError):
    """The requested operation is outside its supported dimension range."""


class InvalidSpaceError(InputError):
    """The norming family does not define a norm (rank-deficient, empty...)."""


class InvalidStructureError(InputError):
    """A declared property-beta structure fails its defining constraints."""


class RefusalError(BpbError):
    """A construction refuses to run because its hypotheses cannot be
    certified for the given input.  Carries a human-readable reason."""

    def __init__(self, reason, **details):
        super().__init__(reason)
        self.reason = reason
        self.details = details


class ConstructionError(BpbError):
    """Internal failure of a search that is expected to always succeed."""
