"""Exception types shared across the solver modules.

Grid/mesh problems that a finer resolution would fix are distinguished from
hard solver failures so the CLI can map them to different exit codes.
"""


class ResolutionError(RuntimeError):
    """Base for errors that signal 'refine the mesh', not a code bug."""


class AssumptionViolation(ResolutionError):
    """A grid edge is crossed more than once, or a cell's interior region
    is disconnected."""


class AmbiguousTopology(ResolutionError):
    """Corner-sign pattern of a quadrant admits no single consistent
    boundary recovery."""


class InvertedElement(ResolutionError):
    """Moving boundary vertices onto the curve flipped a triangle."""


class StencilUnavailable(ResolutionError):
    """Too few potential-carrying cells to build a one-sided derivative."""


class GeometryDegenerate(RuntimeError):
    """A clipped cell polygon collapsed below three vertices."""


class DegenerateGradient(RuntimeError):
    """Level-set gradient vanishes where a normal was requested."""


class OutsideDomain(RuntimeError):
    """Query point is not contained in any mesh triangle."""


class SolverError(RuntimeError):
    """Base for linear-algebra failures."""


class SingularSystem(SolverError):
    """No interior unknown available to pin the pure-Neumann nullspace."""


class SingularLocalSystem(SolverError):
    """Element-local elimination block is not invertible."""


class ZeroPivot(SolverError):
    """ILU(0) hit a zero pivot; the assembly is broken or unpinned."""


class Breakdown(SolverError):
    """BiCGSTAB scalar recurrence collapsed twice."""


class MaxIterationsExceeded(SolverError):
    """Iteration budget exhausted before reaching the tolerance."""
