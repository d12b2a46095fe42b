"""Exception types shared across the toolkit.

Every error raised on a numerical/structural failure path derives from
:class:`ToolkitError` so callers can catch the whole family; sweeps catch
them per row instead of aborting.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all toolkit failures."""


class InvalidInputError(ToolkitError, ValueError):
    """Malformed or inconsistent arguments (dimension mismatches, empty sets)."""


class EvaluationError(ToolkitError):
    """A coefficient map returned something unusable (non-finite, wrong shape)."""


class NotFoundError(ToolkitError, KeyError):
    """Catalog lookup with an unknown name."""


class SingularViscosityError(ToolkitError):
    """B_dd is numerically singular at the given parameters."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class HypothesisViolationError(ToolkitError):
    """A structural hypothesis the construction relies on fails numerically."""


class DegenerateFrequencyError(ToolkitError, ValueError):
    """Zero frequency where a direction is required."""


class NearAxisError(ToolkitError):
    """An eigenvalue sits too close to the imaginary axis to split against.

    Carries the offending eigenvalue(s) so sweeps can report them per row.
    """

    def __init__(self, message, eigenvalues=()):
        super().__init__(message)
        self.eigenvalues = tuple(eigenvalues)


class ContourCollisionError(ToolkitError):
    """An eigenvalue lies too close to the quadrature contour."""


class ClusterSplitError(ToolkitError):
    """Spectral clusters are not separated as the block structure requires."""

    def __init__(self, message, eigenvalues=()):
        super().__init__(message)
        self.eigenvalues = tuple(eigenvalues)


class InvalidRadiusError(ToolkitError, ValueError):
    """Cluster balls of the requested radius overlap."""


class SeparationError(ToolkitError):
    """Stable/unstable eigenvalue counts changed across probe points."""


class ExtensionFailureError(ToolkitError):
    """Limit-extension sequence did not converge; carries the gap trace."""

    def __init__(self, message, gap_trace=()):
        super().__init__(message)
        self.gap_trace = tuple(gap_trace)


class DegenerateRootError(ToolkitError):
    """A root treated as simple has a vanishing leading derivative."""


class StructureError(ToolkitError):
    """Rank/Jordan-structure tests contradict the assumed block layout."""


class ConstructionFailureError(ToolkitError):
    """A feasibility search exhausted its budget; names the failed inequality."""

    def __init__(self, message, inequality=None):
        super().__init__(message)
        self.inequality = inequality


class CertificationFailureError(ToolkitError):
    """A certificate margin went negative; carries the offending grid point."""

    def __init__(self, message, point=None, margins=None):
        super().__init__(message)
        self.point = point
        self.margins = margins


class InternalConsistencyError(ToolkitError):
    """Cross-checked dimensions or invariants disagree (likely a usage bug)."""


class InsufficientDataError(ToolkitError):
    """Not enough successful rows to fit the requested quantity."""


class ConjugationFailureError(ToolkitError):
    """The conjugator grew instead of decaying toward the constant limit."""


class InvertibilityError(ToolkitError):
    """A matrix that must be inverted is numerically singular."""


class InvalidTrajectoryError(ToolkitError, ValueError):
    """A trajectory violates the decay precondition of the energy audit."""


class NumericalFailureError(ToolkitError):
    """A backend solve (Lyapunov/Sylvester/ODE) failed to produce a result."""
