"""Exception hierarchy.

Two families matter to callers: ``DomainError`` means the inputs violate a
precondition (bad parameters, not at a grazing/resonant point), while
``NumericalFailure`` means a solver or continuation gave up.  The CLI maps
them to exit codes 3 and 4.
"""


class GrazingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GrazingError):
    """Inputs outside the region where an operation is defined."""


class NumericalFailure(GrazingError):
    """A root-finder, Newton solve or continuation did not succeed."""

    def __init__(self, message="", partial=None):
        super().__init__(message)
        # Whatever was computed before the failure (samples, events, ...).
        self.partial = partial


# -- model / maps ---------------------------------------------------------

class InvalidParameters(DomainError, ValueError):
    pass


class ExtensionExceeded(DomainError):
    """The extended flow left the declared smooth-extension region."""


class StencilOutOfDomain(DomainError):
    pass


class NoSectionCrossing(NumericalFailure):
    pass


class TangentCrossing(NoSectionCrossing):
    """Crossing found but the flow is nearly tangent to the section there."""


class InverseNotFound(NumericalFailure):
    pass


# -- mps --------------------------------------------------------------------

class NoConvergence(NumericalFailure):
    pass


class SingularJacobian(NumericalFailure):
    pass


class TooCloseToGrazing(DomainError):
    pass


# -- continuation -----------------------------------------------------------

class BranchLost(NumericalFailure):
    pass


class LeftNeighbourhood(NumericalFailure):
    pass


class CurveLost(NumericalFailure):
    pass


class TangentDegenerate(NumericalFailure):
    pass


class FixedPointLost(NumericalFailure):
    pass


class NoResonanceInRange(DomainError):
    pass


# -- theory -----------------------------------------------------------------

class BracketFailed(NumericalFailure):
    pass


class NotGrazing(DomainError):
    pass


class NotAtResonance(DomainError):
    pass


class DegenerateDenominator(DomainError):
    pass


# -- scan -------------------------------------------------------------------

class ChatterStall(NumericalFailure):
    pass
