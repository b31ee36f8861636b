"""Exception taxonomy shared by every module in the package."""


class LfppError(Exception):
    """Base class for all package errors."""


class InvalidSpec(LfppError):
    """Lattice or parameter specification violates a structural requirement."""


class InvalidArgument(LfppError):
    """Operation argument lies outside its documented domain."""


class OutOfDomain(LfppError):
    """Geometric object does not fit inside the lattice domain."""


class MollificationTooFine(LfppError):
    """Smoothing scale below the lattice resolution floor (2 * spacing)."""


class EmptyRegion(LfppError):
    """Region resolves to zero lattice sites."""


class OutOfRegion(LfppError):
    """Query point lies outside the active region mask."""


class DegenerateAnnulus(LfppError):
    """Annulus too thin or malformed to carry a separating cycle."""


class InsufficientTrials(LfppError):
    """Monte Carlo configuration requests fewer trials than the floor (20)."""


class DegenerateFit(LfppError):
    """Estimate ladder too short or too narrow for exponent regression."""
