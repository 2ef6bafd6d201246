"""
Exception hierarchy shared by the solvers, the analysis layer and the CLI.

The CLI maps these onto exit codes:
- PhysicalConstraintError -> 3 (the experiment cannot be set up as requested)
- SolverError, AnalysisError -> 4 (a run started and had to abort)
"""


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class PhysicalConstraintError(SimulationError, ValueError):
    """The requested discretization or scenario violates a physical constraint."""


class GridError(PhysicalConstraintError):
    """Invalid grid bounds/counts, or fields living on different grids."""


class ResolutionError(PhysicalConstraintError):
    """The grid does not resolve the oscillations or the envelope scale."""


class DomainError(PhysicalConstraintError):
    """Initial data carries too much mass near the periodic boundary."""


class FrameError(PhysicalConstraintError):
    """The moving frame is undefined for the requested problem."""


class SolverError(SimulationError):
    """A solver run aborted."""


class NonFiniteError(SolverError):
    """A NaN or infinity appeared in a state, field or potential value."""


class MassDriftError(SolverError):
    """Relative L2 mass drift exceeded its tolerance."""


class BoundaryMassError(SolverError):
    """Mass reached the periodic boundary during a run (domain too small)."""


class ClosureError(SolverError):
    """The Gaussian closure lost positivity of tau or got an invalid amplitude."""


class AnalysisError(SimulationError):
    """A measurement or fit could not be produced from the data."""


class FitError(AnalysisError):
    """Too few usable points for a slope fit."""


class MomentError(AnalysisError):
    """A moment integral is dominated by the domain boundary."""
