"""Two solvers for the 2D elliptic Neumann problem on implicitly bounded
domains (embedded-boundary finite volumes on a Cartesian grid, hybridized
mixed finite elements on quadtree triangle meshes) plus the benchmark harness
that cross-compares them."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    PerturbedCircle,
    StarBoundary,
    test1_boundary,
    test2_boundary,
)
