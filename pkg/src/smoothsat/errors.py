"""Exception hierarchy shared across the package."""


class SmoothSatError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SmoothSatError, ValueError):
    """Operands disagree on the ambient dimension or on vector lengths."""


class InvalidInput(SmoothSatError, ValueError):
    """Malformed user input (files, flags, parameter ranges)."""


class NumericalFailure(SmoothSatError, RuntimeError):
    """A numerical procedure could not produce a reliable result."""


class SingularSystem(NumericalFailure):
    """The fitting system is singular; carries which solvability condition failed."""

    def __init__(self, message, condition=None, singular_value=None):
        super().__init__(message)
        self.condition = condition
        self.singular_value = singular_value


class KSingular(NumericalFailure):
    """Full smoothness matrix too ill-conditioned for the direct inverse path."""


class BadDummyDesign(NumericalFailure):
    """Dummy points fail to make the extended design matrix nonsingular."""


class RankDeficientObservations(NumericalFailure):
    """Observation design cannot identify the knot values."""


class NonUnimodal(NumericalFailure):
    """Grid scan found multiple local minima; carries their locations."""

    def __init__(self, message, minima=()):
        super().__init__(message)
        self.minima = tuple(minima)


class UnsortedOrDuplicateKnots(SmoothSatError, ValueError):
    """1D knots must be strictly ascending."""


class CollinearCenters(NumericalFailure):
    """Thin-plate centers are collinear; the affine block is rank deficient."""


class BasisSelectionError(NumericalFailure):
    """Rank inclusion exhausted its candidate stream without completing a basis."""
