"""Exception hierarchy shared by all phasegeo modules."""


class PhaseGeoError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class DimensionError(PhaseGeoError, ValueError):
    """Array shapes or sizes do not agree with the problem dimensions."""


class ModelMismatchError(PhaseGeoError, ValueError):
    """Inputs are incompatible with the requested measurement model."""


class CapacityError(PhaseGeoError):
    """A dense object would exceed the configured size cap."""


class DegeneratePointError(PhaseGeoError):
    """The point is too close to the origin for the requested construction."""

    exit_code = 4


class ConsistencyError(PhaseGeoError):
    """An internal numerical consistency check failed."""

    exit_code = 4


class DataError(PhaseGeoError, ValueError):
    """Non-finite or otherwise malformed numerical input."""


class ContractError(PhaseGeoError, ValueError):
    """An operation precondition (symmetry, sign, range) was violated."""
