"""Implicit star-shaped boundaries, the manufactured solution, and robust
curve/segment primitives shared by both discretizations.

Boundaries are level sets b(x, y) = rho - r(theta) written in polar
coordinates about a center point: negative inside, positive outside, zero on
the curve.  Because every supported curve is star-shaped about its center
(amplitude < base radius), projection onto the curve along a ray is exact and
any sufficiently short straight segment crosses the curve at most once.

The grid and mesh modules only rely on the ``level`` / ``grad`` methods, so
tests can substitute simple synthetic level sets (half planes, corner cuts)
where closed-form clipped geometry is known.

All evaluation functions broadcast over numpy arrays; the scalar wrappers
mirror the operation contracts exercised by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DegenerateGradient

# Parameter tolerance for every bisection root-find in this module.
BISECT_TOL = 1e-12

# The computational bounding box shared by all grids and quadtrees.
BOX_LO = -1.0
BOX_HI = 1.0


class RadialLevelSet:
    """Level set rho - r(theta) about (cx, cy); subclasses define r."""

    def radius(self, theta):
        raise NotImplementedError

    def radius_prime(self, theta):
        raise NotImplementedError

    def level(self, x, y):
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        rho = np.hypot(dx, dy)
        theta = np.arctan2(dy, dx)
        return rho - self.radius(theta)

    def grad(self, x, y):
        """Analytic gradient of the level function, shape (..., 2).

        grad b = rho_hat - r'(theta) grad theta; undefined at the center.
        """
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        rho2 = dx * dx + dy * dy
        rho = np.sqrt(rho2)
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = np.arctan2(dy, dx)
            rp = self.radius_prime(theta)
            gx = dx / rho + rp * dy / rho2
            gy = dy / rho - rp * dx / rho2
        return np.stack([gx, gy], axis=-1)

    def project(self, p):
        """Point on the curve hit by the ray center -> p (exact)."""
        theta = np.arctan2(p[1] - self.cy, p[0] - self.cx)
        r = float(self.radius(theta))
        return np.array(
            [self.cx + r * np.cos(theta), self.cy + r * np.sin(theta)]
        )

    def project_many(self, pts):
        theta = np.arctan2(pts[:, 1] - self.cy, pts[:, 0] - self.cx)
        r = self.radius(theta)
        return np.stack(
            [self.cx + r * np.cos(theta), self.cy + r * np.sin(theta)], axis=-1
        )

    def grad_bound(self) -> float:
        """Upper bound on |grad level| away from the center, used to size
        the band of grid edges that can touch the curve."""
        rp_max = self._radius_prime_bound()
        rho_min = max(self.r0 - abs(self.eps), 1e-9)
        return float(np.sqrt(1.0 + (rp_max / rho_min) ** 2))


@dataclass(frozen=True)
class PerturbedCircle(RadialLevelSet):
    """r(theta) = r0 + eps * cos(k * theta), a smooth wavy circle."""

    r0: float
    eps: float = 0.0
    k: int = 0
    cx: float = 0.0
    cy: float = 0.0

    kind: ClassVar[str] = "perturbed_circle"

    def __post_init__(self):
        if not (0.0 <= abs(self.eps) < self.r0):
            raise ValueError("need |eps| < r0 for a star-shaped curve")

    def radius(self, theta):
        return self.r0 + self.eps * np.cos(self.k * theta)

    def radius_prime(self, theta):
        return -self.eps * self.k * np.sin(self.k * theta)

    def _radius_prime_bound(self):
        return abs(self.eps) * self.k


@dataclass(frozen=True)
class StarBoundary(RadialLevelSet):
    """r(theta) = r0 + eps * cos(k * theta)**3; flat valleys and sharper
    lobes than the plain perturbed circle."""

    r0: float
    eps: float = 0.0
    k: int = 0
    cx: float = 0.0
    cy: float = 0.0

    kind: ClassVar[str] = "star"

    def __post_init__(self):
        if not (0.0 <= abs(self.eps) < self.r0):
            raise ValueError("need |eps| < r0 for a star-shaped curve")

    def radius(self, theta):
        return self.r0 + self.eps * np.cos(self.k * theta) ** 3

    def radius_prime(self, theta):
        c = np.cos(self.k * theta)
        return -3.0 * self.eps * self.k * c * c * np.sin(self.k * theta)

    def _radius_prime_bound(self):
        # max of 3 cos^2 sin over theta is 3 * 2 / (3 sqrt(3)) < 1.155
        return 1.155 * abs(self.eps) * self.k


_KINDS = {cls.kind: cls for cls in (PerturbedCircle, StarBoundary)}


def test1_boundary() -> PerturbedCircle:
    """Boundary of the first comparison problem (five gentle lobes)."""
    return PerturbedCircle(r0=0.5, eps=0.05, k=5)


def test2_boundary() -> PerturbedCircle:
    """Boundary of the second, more convoluted comparison problem."""
    return PerturbedCircle(r0=0.45, eps=0.12, k=7)


def level(boundary, x, y):
    """Signed level value: negative inside, positive outside, zero on the
    curve.  Broadcasts over array inputs."""
    return boundary.level(x, y)


def outward_normal(boundary, p):
    """Unit outward normal at a point on (or very near) the curve."""
    g = boundary.grad(p[0], p[1])
    norm = float(np.hypot(g[0], g[1]))
    if not np.isfinite(norm) or norm < 1e-14:
        raise DegenerateGradient(f"level gradient vanishes at {p}")
    return g / norm


def segment_intersection(boundary, p0, p1, tol=BISECT_TOL):
    """Intersection of the curve with the segment p0-p1, or None.

    Endpoint level signs must differ for a crossing; equal signs return None
    (at most one crossing per segment on the grids this runs on).  The root
    is bisected to parameter tolerance ``tol``.
    """
    b0 = float(boundary.level(p0[0], p0[1]))
    b1 = float(boundary.level(p1[0], p1[1]))
    if b0 == 0.0:
        return np.array([p0[0], p0[1]], dtype=float)
    if b1 == 0.0:
        return np.array([p1[0], p1[1]], dtype=float)
    if (b0 > 0.0) == (b1 > 0.0):
        return None
    t = bisect_on_segments(
        boundary,
        np.array([[p0[0], p0[1]]]),
        np.array([[p1[0], p1[1]]]),
        np.array([b0]),
        tol,
    )[0]
    return np.array([p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])])


def bisect_on_segments(boundary, P0, P1, b0, tol=BISECT_TOL):
    """Vectorized bisection: parameters t in (0, 1) with level == 0 on each
    segment P0[i] -> P1[i].  ``b0`` holds level values at the P0 ends, whose
    signs must differ from those at P1."""
    m = len(P0)
    lo = np.zeros(m)
    hi = np.ones(m)
    neg_at_lo = np.asarray(b0) < 0.0
    span = P1 - P0
    nit = max(1, int(np.ceil(np.log2(1.0 / tol))))
    for _ in range(nit):
        mid = 0.5 * (lo + hi)
        pm = P0 + mid[:, None] * span
        bm = boundary.level(pm[:, 0], pm[:, 1])
        take_lo = (bm < 0.0) == neg_at_lo
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    return 0.5 * (lo + hi)


def project_to_boundary(boundary, p):
    """Project a point onto the curve along the ray from the star center."""
    return boundary.project(p)


# --- manufactured solution: phi = exp((x^2 + y^2) / 2) ----------------------


def phi_exact(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(0.5 * (x * x + y * y))


def grad_exact(x, y):
    """Gradient of the manufactured solution, shape (..., 2)."""
    p = phi_exact(x, y)
    return np.stack([np.asarray(x) * p, np.asarray(y) * p], axis=-1)


def laplacian_exact(x, y):
    """f of the elliptic problem: Laplacian of the manufactured solution."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (2.0 + x * x + y * y) * phi_exact(x, y)


def exact_eval(p):
    """(phi, grad phi, Laplacian phi) at a single point."""
    x, y = float(p[0]), float(p[1])
    return phi_exact(x, y), grad_exact(x, y), laplacian_exact(x, y)


def neumann_g(boundary, p):
    """Outward normal derivative of the manufactured solution at a boundary
    point, using the analytic level-set normal."""
    n = outward_normal(boundary, p)
    g = grad_exact(p[0], p[1])
    return float(n[0] * g[0] + n[1] * g[1])


# --- config round-trip -------------------------------------------------------


def boundary_to_config(boundary) -> dict:
    """Serialize a boundary as decimal-text fields."""
    return {
        "kind": boundary.kind,
        "r0": "%.17g" % boundary.r0,
        "epsilon": "%.17g" % boundary.eps,
        "k": str(boundary.k),
        "center_x": "%.17g" % boundary.cx,
        "center_y": "%.17g" % boundary.cy,
    }


def boundary_from_config(cfg: dict):
    kind = cfg["kind"]
    if kind not in _KINDS:
        raise ValueError(f"unknown boundary kind {kind!r}")
    return _KINDS[kind](
        r0=float(cfg["r0"]),
        eps=float(cfg["epsilon"]),
        k=int(cfg["k"]),
        cx=float(cfg.get("center_x", 0.0)),
        cy=float(cfg.get("center_y", 0.0)),
    )
