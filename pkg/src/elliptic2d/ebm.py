"""Embedded-boundary finite-volume discretization on a uniform Cartesian
grid.

Cells are labeled INTERNAL / PARTIAL / EXTERNAL against an implicit boundary.
Partial cells carry clipped-polygon geometry (volume, centroid, partial-edge
data, boundary chord) and their fluxes are 9-point aperture-weighted stencils
that linearly interpolate between neighboring centered differences.  The
boundary chord carries the Neumann flux.  Potentials live at regular cell
centers even when those fall outside the domain; gradients are recovered at
every potential-carrying center by centered differences or one-sided
parabolic fits, and at chord midpoints by extrapolating centered differences
along the two grid directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import (
    AssumptionViolation,
    GeometryDegenerate,
    SingularSystem,
    StencilUnavailable,
)
from .sparse import CsrMatrix, csr_from_triplets

INTERNAL, PARTIAL, EXTERNAL = 0, 1, 2
EDGE_FULL, EDGE_PARTIAL, EDGE_EXTERNAL = 0, 1, 2

# Partial cells below this volume fraction of h^2 get their intersection
# points slid outward until the clipped volume reaches the threshold.
V_MIN_FRACTION = 0.01

# Interior sample points per grid edge for the multiple-crossing check.
_EDGE_SAMPLES = 8


@dataclass(frozen=True)
class CartesianGrid:
    """n x n uniform cells covering [-1, 1]^2; n a power of two."""

    n: int

    def __post_init__(self):
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ValueError("grid size must be a power of two >= 2")

    @property
    def h(self) -> float:
        return (geometry.BOX_HI - geometry.BOX_LO) / self.n

    @property
    def corners_1d(self) -> np.ndarray:
        return geometry.BOX_LO + self.h * np.arange(self.n + 1)

    @property
    def centers_1d(self) -> np.ndarray:
        return geometry.BOX_LO + self.h * (np.arange(self.n) + 0.5)

    def cell_center(self, i: int, j: int) -> np.ndarray:
        return np.array(
            [
                geometry.BOX_LO + self.h * (i + 0.5),
                geometry.BOX_LO + self.h * (j + 0.5),
            ]
        )


@dataclass
class CellEdge:
    kind: int
    center: np.ndarray | None
    length: float


@dataclass
class PartialCellGeom:
    """Clipped geometry of one boundary-cut cell.

    ``edges`` are ordered (-x, +x, -y, +y); the chord is the straight
    segment between the two grid-edge intersection points with its outward
    unit normal.
    """

    volume: float
    centroid: np.ndarray
    edges: tuple
    chord_p0: np.ndarray
    chord_p1: np.ndarray
    chord_mid: np.ndarray
    chord_len: float
    chord_normal: np.ndarray


@dataclass
class CellClassification:
    """Classification plus partial-cell geometry for one grid/boundary pair.

    ``row_of`` maps cells to linear-system rows (-1 for EXTERNAL).  When
    ``boundary`` is None the domain is the full box and every cell is
    INTERNAL (used by patch tests)."""

    grid: CartesianGrid
    boundary: object | None
    cls: np.ndarray
    row_of: np.ndarray
    rows: np.ndarray  # (m, 2) cell indices per row
    partial: dict
    corner_level: np.ndarray | None
    subresolution_edges: int = 0
    removed_slivers: int = 0
    # per-cell, per-side (-x, +x, -y, +y) flag: flux comes from the Neumann
    # data because the cell across was removed as a sliver
    neumann_side: np.ndarray | None = None
    _inside: np.ndarray | None = None
    _hcross: np.ndarray | None = None
    _vcross: np.ndarray | None = None

    @property
    def n_unknowns(self) -> int:
        return len(self.rows)

    @property
    def n_internal(self) -> int:
        return int(np.count_nonzero(self.cls == INTERNAL))

    @property
    def n_partial(self) -> int:
        return int(np.count_nonzero(self.cls == PARTIAL))


def _polygon_area_centroid(pts: np.ndarray):
    x = pts[:, 0]
    y = pts[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    if abs(area) < 1e-300:
        return 0.0, pts.mean(axis=0)
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return area, np.array([cx, cy])


def classify_cells(grid: CartesianGrid, boundary) -> CellClassification:
    """Label every cell and compute partial-cell geometry.

    Raises AssumptionViolation when the corner-sign topology of some cell is
    inconsistent with a single boundary chord (disconnected inside region,
    saddle patterns, crossing counts other than 0 or 2) and
    GeometryDegenerate when a clipped polygon collapses.  Sub-resolution
    dips of the curve across a single edge keep the endpoint-sign topology
    and are only counted (``subresolution_edges``).
    """
    if boundary is None:
        return _classify_box(grid)
    n = grid.n
    h = grid.h
    xs = grid.corners_1d
    ys = grid.corners_1d

    Xc, Yc = np.meshgrid(xs, ys, indexing="ij")
    corner_lv = boundary.level(Xc, Yc)
    inside = corner_lv < 0.0

    n_dips = _count_subresolution_edges(boundary, xs, ys, corner_lv, h)

    # Crossing parameters; NaN where an edge is not crossed.  Horizontal
    # edges run (i, j) -> (i+1, j); vertical edges (i, j) -> (i, j+1).
    hcross = np.full((n, n + 1), np.nan)
    vcross = np.full((n + 1, n), np.nan)

    hmask = inside[:-1, :] != inside[1:, :]
    idx = np.argwhere(hmask)
    if len(idx):
        p0 = np.stack([xs[idx[:, 0]], ys[idx[:, 1]]], axis=-1)
        p1 = np.stack([xs[idx[:, 0] + 1], ys[idx[:, 1]]], axis=-1)
        t = geometry.bisect_on_segments(
            boundary, p0, p1, corner_lv[idx[:, 0], idx[:, 1]]
        )
        hcross[idx[:, 0], idx[:, 1]] = t

    vmask = inside[:, :-1] != inside[:, 1:]
    idx = np.argwhere(vmask)
    if len(idx):
        p0 = np.stack([xs[idx[:, 0]], ys[idx[:, 1]]], axis=-1)
        p1 = np.stack([xs[idx[:, 0]], ys[idx[:, 1] + 1]], axis=-1)
        t = geometry.bisect_on_segments(
            boundary, p0, p1, corner_lv[idx[:, 0], idx[:, 1]]
        )
        vcross[idx[:, 0], idx[:, 1]] = t

    ncross = (
        hmask[:, :-1].astype(np.int8)
        + hmask[:, 1:]
        + vmask[:-1, :]
        + vmask[1:, :]
    )
    in_corners = (
        inside[:-1, :-1].astype(np.int8)
        + inside[1:, :-1]
        + inside[:-1, 1:]
        + inside[1:, 1:]
    )

    centers = grid.centers_1d
    Xm, Ym = np.meshgrid(centers, centers, indexing="ij")
    center_inside = boundary.level(Xm, Ym) < 0.0

    cls = np.full((n, n), PARTIAL, dtype=np.uint8)
    cls[(in_corners == 4) & (ncross == 0) & center_inside] = INTERNAL
    cls[(in_corners == 0) & (ncross == 0) & ~center_inside] = EXTERNAL

    bad = np.argwhere((ncross != 0) & (ncross != 2))
    if len(bad):
        i, j = bad[0]
        raise AssumptionViolation(
            f"cell ({i},{j}) has {ncross[i, j]} edge crossings; "
            "inside region is disconnected or grid too coarse"
        )
    mixed = np.argwhere((ncross == 0) & (in_corners % 4 != 0))
    if len(mixed):
        i, j = mixed[0]
        raise AssumptionViolation(
            f"cell ({i},{j}) has mixed corner signs but no crossings"
        )
    odd = np.argwhere((in_corners == 4) & (ncross == 2))
    if len(odd):
        i, j = odd[0]
        raise AssumptionViolation(
            f"cell ({i},{j}) is crossed but all corners are inside"
        )

    cc = CellClassification(
        grid=grid,
        boundary=boundary,
        cls=cls,
        row_of=np.empty(0),
        rows=np.empty(0),
        partial={},
        corner_level=corner_lv,
        subresolution_edges=n_dips,
        neumann_side=np.zeros((n, n, 4), dtype=bool),
        _inside=inside,
        _hcross=hcross,
        _vcross=vcross,
    )
    _build_partial_geometry(cc)
    _remove_small_cells(cc)
    _finalize_rows(cc)
    return cc


def _classify_box(grid: CartesianGrid) -> CellClassification:
    n = grid.n
    cls = np.full((n, n), INTERNAL, dtype=np.uint8)
    cc = CellClassification(
        grid=grid,
        boundary=None,
        cls=cls,
        row_of=np.empty(0),
        rows=np.empty(0),
        partial={},
        corner_level=None,
    )
    _finalize_rows(cc)
    return cc


def _finalize_rows(cc: CellClassification) -> None:
    n = cc.grid.n
    row_of = np.full((n, n), -1, dtype=np.int64)
    cells = np.argwhere(cc.cls != EXTERNAL)
    row_of[cells[:, 0], cells[:, 1]] = np.arange(len(cells))
    cc.row_of = row_of
    cc.rows = cells


def _count_subresolution_edges(boundary, xs, ys, corner_lv, h) -> int:
    """Count grid edges whose sampled sign pattern shows more crossings than
    the endpoint signs imply.

    Near tangency points the curve can dip across an edge and back within a
    fraction of h at any resolution, so these events are tolerated: the
    reconstruction keeps the endpoint-sign topology and the ignored sliver
    perturbs the geometry at higher order.  Topology-breaking patterns
    (disconnected cell interiors) are still rejected in classify_cells."""
    lip = boundary.grad_bound() if hasattr(boundary, "grad_bound") else 4.0
    band = 2.0 * lip * h
    ts = (np.arange(_EDGE_SAMPLES + 2)) / (_EDGE_SAMPLES + 1)
    total = 0

    for horizontal in (True, False):
        cl = corner_lv if horizontal else corner_lv.T
        near = np.minimum(np.abs(cl[:-1, :]), np.abs(cl[1:, :])) <= band
        idx = np.argwhere(near)
        if not len(idx):
            continue
        a0 = xs[idx[:, 0]]
        b0 = ys[idx[:, 1]]
        pa = a0[:, None] + ts[None, :] * h
        if horizontal:
            lv = boundary.level(pa, b0[:, None])
        else:
            lv = boundary.level(b0[:, None], pa)
        sgn = lv < 0.0
        changes = np.count_nonzero(sgn[:, 1:] != sgn[:, :-1], axis=1)
        expect = (cl[:-1, :] < 0) != (cl[1:, :] < 0)
        total += int(np.count_nonzero(changes > expect[idx[:, 0], idx[:, 1]]))
    return total


def _cell_cycle(cc: CellClassification, i: int, j: int):
    """Perimeter cycle of cell (i, j) in counterclockwise order.

    Yields ("corner", point, inside) and ("cross", point, edge_ref) items,
    where edge_ref identifies the crossed grid edge for later adjustment.
    """
    xs = cc.grid.corners_1d
    h = cc.grid.h
    inside = cc._inside
    hcross = cc._hcross
    vcross = cc._vcross

    def corner(ii, jj):
        return ("corner", np.array([xs[ii], xs[jj]]), bool(inside[ii, jj]))

    def hedge(ii, jj):
        t = hcross[ii, jj]
        if np.isnan(t):
            return None
        return ("cross", np.array([xs[ii] + t * h, xs[jj]]), ("h", ii, jj))

    def vedge(ii, jj):
        t = vcross[ii, jj]
        if np.isnan(t):
            return None
        return ("cross", np.array([xs[ii], xs[jj] + t * h]), ("v", ii, jj))

    items = [
        corner(i, j),
        hedge(i, j),
        corner(i + 1, j),
        vedge(i + 1, j),
        corner(i + 1, j + 1),
        hedge(i, j + 1),
        corner(i, j + 1),
        vedge(i, j),
    ]
    return [it for it in items if it is not None]


def _clip_cell(cc: CellClassification, i: int, j: int):
    """Inside polygon of a partial cell plus its two chord endpoints.

    Returns (polygon points, crossing edge refs in walk order)."""
    cycle = _cell_cycle(cc, i, j)
    k0 = next(k for k, it in enumerate(cycle) if it[0] == "cross")
    cycle = cycle[k0:] + cycle[:k0]
    arcs = []
    cur = [cycle[0]]
    for it in cycle[1:]:
        cur.append(it)
        if it[0] == "cross":
            arcs.append(cur)
            cur = [it]
    cur.append(cycle[0])
    arcs.append(cur)
    if len(arcs) != 2:
        raise AssumptionViolation(
            f"cell ({i},{j}) has {len(arcs)} boundary arcs"
        )
    poly = None
    refs = None
    for arc in arcs:
        mids = arc[1:-1]
        if mids and all(it[2] for it in mids):
            if poly is not None:
                raise AssumptionViolation(
                    f"cell ({i},{j}) inside region is ambiguous"
                )
            poly = [it[1] for it in arc]
            refs = (arc[0][2], arc[-1][2])
        elif mids and any(it[2] for it in mids):
            raise AssumptionViolation(
                f"cell ({i},{j}) mixes inside/outside corners on one arc"
            )
    if poly is None:
        raise GeometryDegenerate(
            f"cell ({i},{j}) clipped polygon has no inside corners"
        )
    return np.array(poly), refs


def _edge_info(cc: CellClassification, i: int, j: int):
    """Per-side (FULL/PARTIAL/EXTERNAL) data for partial cell (i, j),
    ordered (-x, +x, -y, +y)."""
    xs = cc.grid.corners_1d
    h = cc.grid.h
    inside = cc._inside

    def one(c0, c1, t):
        in0 = bool(inside[c0])
        in1 = bool(inside[c1])
        p0 = np.array([xs[c0[0]], xs[c0[1]]])
        p1 = np.array([xs[c1[0]], xs[c1[1]]])
        if np.isnan(t):
            if in0 and in1:
                return CellEdge(EDGE_FULL, 0.5 * (p0 + p1), h)
            if not in0 and not in1:
                return CellEdge(EDGE_EXTERNAL, None, 0.0)
            raise AssumptionViolation(
                f"edge of cell ({i},{j}) has mixed signs but no crossing"
            )
        px = p0 + t * (p1 - p0)
        pin = p0 if in0 else p1
        return CellEdge(
            EDGE_PARTIAL, 0.5 * (px + pin), float(np.linalg.norm(pin - px))
        )

    west = one((i, j), (i, j + 1), cc._vcross[i, j])
    east = one((i + 1, j), (i + 1, j + 1), cc._vcross[i + 1, j])
    south = one((i, j), (i + 1, j), cc._hcross[i, j])
    north = one((i, j + 1), (i + 1, j + 1), cc._hcross[i, j + 1])
    return (west, east, south, north)


def _partial_geom(cc: CellClassification, i: int, j: int) -> PartialCellGeom:
    poly, refs = _clip_cell(cc, i, j)
    if len(poly) < 3:
        raise GeometryDegenerate(f"cell ({i},{j}) polygon has {len(poly)} points")
    area, centroid = _polygon_area_centroid(poly)
    if area <= 0.0:
        raise GeometryDegenerate(f"cell ({i},{j}) polygon area {area:.3e}")
    p_exit = poly[0]
    p_entry = poly[-1]
    chord = p_entry - p_exit
    clen = float(np.linalg.norm(chord))
    mid = 0.5 * (p_exit + p_entry)
    if clen > 0.0:
        nrm = np.array([chord[1], -chord[0]]) / clen
    else:
        nrm = np.array([0.0, 0.0])
    g = cc.boundary.grad(mid[0], mid[1])
    if float(nrm @ g) < 0.0:
        nrm = -nrm
    return PartialCellGeom(
        volume=area,
        centroid=centroid,
        edges=_edge_info(cc, i, j),
        chord_p0=p_exit,
        chord_p1=p_entry,
        chord_mid=mid,
        chord_len=clen,
        chord_normal=nrm,
    )


def _build_partial_geometry(cc: CellClassification) -> None:
    cc.partial = {}
    for i, j in np.argwhere(cc.cls == PARTIAL):
        cc.partial[(int(i), int(j))] = _partial_geom(cc, int(i), int(j))


def _remove_small_cells(cc: CellClassification) -> None:
    """Drop partial cells whose clipped volume is below V_MIN_FRACTION * h^2.

    Removed cells become EXTERNAL; the inside sub-segments of their grid
    edges become part of the domain boundary and carry the Neumann flux for
    the adjacent retained cells (flagged in ``neumann_side``).  Retained
    volumes never change, so one pass suffices.
    """
    n = cc.grid.n
    target = V_MIN_FRACTION * cc.grid.h ** 2
    small = [key for key, g in cc.partial.items() if g.volume < target]
    # opposite-side index for (-x, +x, -y, +y)
    opposite = (1, 0, 3, 2)
    side_offsets = ((-1, 0), (1, 0), (0, -1), (0, 1))
    for i, j in small:
        geom = cc.partial.pop((i, j))
        cc.cls[i, j] = EXTERNAL
        cc.removed_slivers += 1
        for side, (di, dj) in enumerate(side_offsets):
            if geom.edges[side].kind == EDGE_EXTERNAL:
                continue
            ni, nj = i + di, j + dj
            if not (0 <= ni < n and 0 <= nj < n):
                raise AssumptionViolation(
                    "sliver cell touches the grid frame"
                )
            if cc.cls[ni, nj] != EXTERNAL:
                cc.neumann_side[ni, nj, opposite[side]] = True


# --- stencils and assembly ---------------------------------------------------


def flux_stencil(d: int, r, h: float) -> np.ndarray:
    """3x3 coefficient matrix for the interpolated flux along direction d.

    ``r`` points from the cell center to the center of the (partial) edge
    carrying the flux; entry [1, 1] is the anchor cell and index offsets are
    (x, y).  With the aperture a = |r_d'| / h the flux blends the centered
    difference across the edge with the one in the next row/column.  The
    stencil evaluates the *outward* normal derivative when r points outward.
    """
    r = np.asarray(r, dtype=float)
    dp = 1 - d
    a = abs(r[dp]) / h
    if a > 0.5 + 1e-12:
        raise ValueError(f"aperture {a} exceeds 1/2; r is not an edge vector")
    sd = 1 if r[d] >= 0.0 else -1
    sp = 1 if r[dp] >= 0.0 else -1
    c = np.zeros((3, 3))

    def put(off_d, off_p, val):
        off = [0, 0]
        off[d] = off_d
        off[dp] = off_p
        c[1 + off[0], 1 + off[1]] += val

    put(0, 0, (a - 1.0) / h)
    put(sd, 0, (1.0 - a) / h)
    put(0, sp, -a / h)
    put(sd, sp, a / h)
    return c


def assemble_ebm(cc: CellClassification, f, g, pin_phi):
    """Assemble the finite-volume system L(phi) = f.

    ``f(x, y)`` is the source (evaluated at centroids of partial cells and
    centers of internal ones), ``g(point, normal) -> d(phi)/dn`` supplies the
    Neumann flux on boundary chords (or on box faces when the domain is the
    whole box), and ``pin_phi(point)`` gives the exact potential used to pin
    one interior cell against the pure-Neumann nullspace.

    Returns (CsrMatrix, rhs, pin_row).
    """
    grid = cc.grid
    n = grid.n
    h = grid.h
    row_of = cc.row_of
    m = cc.n_unknowns
    if m == 0:
        raise SingularSystem("no interior or partial cells")

    rows_t: list[np.ndarray] = []
    cols_t: list[np.ndarray] = []
    vals_t: list[np.ndarray] = []
    rhs = np.zeros(m)

    centers = grid.centers_1d

    # internal rows: 5-point Laplacian; sides facing the box frame or a
    # removed sliver carry the Neumann flux instead of a coupling
    ii, jj = np.nonzero(cc.cls == INTERNAL)
    r0 = row_of[ii, jj]
    inv_h2 = 1.0 / (h * h)
    rhs[r0] = f(centers[ii], centers[jj])
    diag = np.zeros(len(ii))
    side_order = ((0, -1, 0), (0, 1, 1), (1, -1, 2), (1, 1, 3))
    for axis, sign, side in side_order:
        di = sign if axis == 0 else 0
        dj = sign if axis == 1 else 0
        ni = ii + di
        nj = jj + dj
        in_grid = (ni >= 0) & (ni < n) & (nj >= 0) & (nj < n)
        if cc.neumann_side is not None:
            data_side = cc.neumann_side[ii, jj, side]
        else:
            data_side = np.zeros(len(ii), dtype=bool)
        if cc.boundary is None:
            data_side = data_side | ~in_grid
        elif not np.all(in_grid):
            raise AssumptionViolation(
                "internal cell touches the grid frame; boundary is not "
                "strictly interior"
            )
        if np.any(data_side):
            ex = centers[ii[data_side]] + (0.5 * h * sign if axis == 0 else 0.0)
            ey = centers[jj[data_side]] + (0.5 * h * sign if axis == 1 else 0.0)
            nrm = np.zeros(2)
            nrm[axis] = sign
            gv = np.array(
                [g(np.array([px, py]), nrm) for px, py in zip(ex, ey)]
            )
            rhs[r0[data_side]] -= gv * h * inv_h2
        use = ~data_side
        nb = row_of[ni[use], nj[use]]
        if np.any(nb < 0):
            raise AssumptionViolation("internal cell adjacent to an external cell")
        rows_t.append(r0[use])
        cols_t.append(nb)
        vals_t.append(np.full(int(use.sum()), inv_h2))
        diag[use] -= inv_h2
    rows_t.append(r0)
    cols_t.append(r0)
    vals_t.append(diag)

    # partial rows; side order matches PartialCellGeom.edges (-x, +x, -y, +y)
    side_axes = (0, 0, 1, 1)
    side_signs = (-1, 1, -1, 1)
    pr: list[int] = []
    pc: list[int] = []
    pv: list[float] = []
    for (i, j), geom in cc.partial.items():
        row = int(row_of[i, j])
        inv_v = 1.0 / geom.volume
        center = np.array([centers[i], centers[j]])
        rhs[row] = float(f(geom.centroid[0], geom.centroid[1]))
        for side, (axis, sign, edge) in enumerate(
            zip(side_axes, side_signs, geom.edges)
        ):
            if edge.kind == EDGE_EXTERNAL:
                continue
            if cc.neumann_side is not None and cc.neumann_side[i, j, side]:
                # the cell across was a removed sliver: this sub-segment is
                # domain boundary now and carries the Neumann flux
                nrm = np.zeros(2)
                nrm[axis] = sign
                rhs[row] -= g(edge.center, nrm) * edge.length * inv_v
                continue
            c = flux_stencil(axis, edge.center - center, h)
            if not _stencil_resolvable(row_of, n, i, j, c):
                # interpolation partner was removed: fall back to the plain
                # centered difference across the edge
                r0v = np.zeros(2)
                r0v[axis] = sign * 0.5 * h
                c = flux_stencil(axis, r0v, h)
            scale = edge.length * inv_v
            for oi in range(3):
                for oj in range(3):
                    w = c[oi, oj]
                    if w == 0.0:
                        continue
                    ci = i + oi - 1
                    cj = j + oj - 1
                    if not (0 <= ci < n and 0 <= cj < n) or row_of[ci, cj] < 0:
                        raise AssumptionViolation(
                            f"stencil of cell ({i},{j}) needs a missing "
                            f"potential at ({ci},{cj}); refine the grid"
                        )
                    pr.append(row)
                    pc.append(int(row_of[ci, cj]))
                    pv.append(w * scale)
        gv = g(geom.chord_mid, geom.chord_normal)
        rhs[row] -= geom.chord_len * gv * inv_v
    rows_t.append(np.array(pr, dtype=np.int64))
    cols_t.append(np.array(pc, dtype=np.int64))
    vals_t.append(np.array(pv))

    # pin the interior cell nearest the domain center
    pin_row = _pin_row(cc)
    rows = np.concatenate(rows_t)
    cols = np.concatenate(cols_t)
    vals = np.concatenate(vals_t)
    keep = rows != pin_row
    rows = np.concatenate([rows[keep], [pin_row]])
    cols = np.concatenate([cols[keep], [pin_row]])
    vals = np.concatenate([vals[keep], [1.0]])
    pi, pj = cc.rows[pin_row]
    rhs[pin_row] = float(pin_phi(grid.cell_center(pi, pj)))

    return csr_from_triplets(m, rows, cols, vals), rhs, pin_row


def _stencil_resolvable(row_of, n, i, j, c) -> bool:
    for oi in range(3):
        for oj in range(3):
            if c[oi, oj] == 0.0:
                continue
            ci = i + oi - 1
            cj = j + oj - 1
            if not (0 <= ci < n and 0 <= cj < n) or row_of[ci, cj] < 0:
                return False
    return True


def _pin_row(cc: CellClassification) -> int:
    if cc.boundary is None:
        target = np.zeros(2)
    else:
        target = np.array([cc.boundary.cx, cc.boundary.cy])
    ii, jj = np.nonzero(cc.cls == INTERNAL)
    if len(ii) == 0:
        raise SingularSystem("no internal cell available for pinning")
    centers = cc.grid.centers_1d
    d2 = (centers[ii] - target[0]) ** 2 + (centers[jj] - target[1]) ** 2
    k = int(np.argmin(d2))
    return int(cc.row_of[ii[k], jj[k]])


# --- gradient recovery -------------------------------------------------------


@dataclass
class EbmSolution:
    """Solved potentials with recovered gradients.

    ``grad`` is (n, n, 2) with NaN at external cells; boundary arrays are
    aligned with ``boundary_cells`` (the partial cells in row order)."""

    classification: CellClassification
    potentials: np.ndarray
    grad: np.ndarray
    boundary_cells: list
    boundary_points: np.ndarray
    boundary_grads: np.ndarray


def recover_gradients(cc: CellClassification, x: np.ndarray) -> EbmSolution:
    """Second-order gradients at every potential-carrying cell center and at
    each boundary chord midpoint."""
    n = cc.grid.n
    h = cc.grid.h
    pot = np.full((n, n), np.nan)
    pot[cc.rows[:, 0], cc.rows[:, 1]] = x
    avail = cc.row_of >= 0

    grad = np.full((n, n, 2), np.nan)
    centered = [None, None]
    for axis in range(2):
        g, cent = _component(pot, avail, h, axis)
        grad[:, :, axis] = g
        centered[axis] = cent

    centers = cc.grid.centers_1d
    stations = [
        [np.nonzero(~np.isnan(centered[0][:, j]))[0] for j in range(n)],
        [np.nonzero(~np.isnan(centered[1][i, :]))[0] for i in range(n)],
    ]

    # cells whose own row/column had too few potentials fall back to the
    # same cross-line procedure used for boundary points
    holes = np.argwhere(avail & np.isnan(grad).any(axis=2))
    for i, j in holes:
        point = np.array([centers[i], centers[j]])
        for axis in range(2):
            if np.isnan(grad[i, j, axis]):
                grad[i, j, axis] = _offline_component(
                    centered[axis], stations[axis], centers, point, axis
                )

    bcells = sorted(cc.partial.keys(), key=lambda ij: cc.row_of[ij[0], ij[1]])
    bp = np.zeros((len(bcells), 2))
    bg = np.zeros((len(bcells), 2))
    for k, (i, j) in enumerate(bcells):
        mid = cc.partial[(i, j)].chord_mid
        bp[k] = mid
        bg[k, 0] = _offline_component(centered[0], stations[0], centers, mid, 0)
        bg[k, 1] = _offline_component(centered[1], stations[1], centers, mid, 1)

    return EbmSolution(
        classification=cc,
        potentials=x,
        grad=grad,
        boundary_cells=bcells,
        boundary_points=bp,
        boundary_grads=bg,
    )


def _component(pot, avail, h, axis):
    """One gradient component on the full grid: centered differences where
    possible, else the derivative of the parabola through the three nearest
    collinear potentials."""
    p = pot if axis == 0 else pot.T
    a = avail if axis == 0 else avail.T
    n = p.shape[0]
    g = np.full_like(p, np.nan)
    cent = np.full_like(p, np.nan)

    am = np.zeros_like(a)
    ap = np.zeros_like(a)
    am[1:, :] = a[:-1, :]
    ap[:-1, :] = a[1:, :]
    both = a & am & ap
    pm = np.full_like(p, np.nan)
    pp = np.full_like(p, np.nan)
    pm[1:, :] = p[:-1, :]
    pp[:-1, :] = p[1:, :]
    cent[both] = (pp[both] - pm[both]) / (2.0 * h)
    g[both] = cent[both]

    app = np.zeros_like(a)
    app[:-2, :] = a[2:, :]
    ppp = np.full_like(p, np.nan)
    ppp[:-2, :] = p[2:, :]
    fwd = a & ap & app & ~both
    g[fwd] = (-3.0 * p[fwd] + 4.0 * pp[fwd] - ppp[fwd]) / (2.0 * h)

    amm = np.zeros_like(a)
    amm[2:, :] = a[:-2, :]
    pmm = np.full_like(p, np.nan)
    pmm[2:, :] = p[:-2, :]
    bwd = a & am & amm & ~both & ~fwd
    g[bwd] = (3.0 * p[bwd] - 4.0 * pm[bwd] + pmm[bwd]) / (2.0 * h)

    if axis == 1:
        g = g.T
        cent = cent.T
    return g, cent


def _offline_component(cent, stations, centers, point, axis):
    """Gradient component at a point off the potential lattice: on each of
    the two lines of cell centers nearest the point, linearly
    inter/extrapolate the two closest centered differences along the line,
    then interpolate the line values across to the point.  Used for boundary
    chord midpoints and for cells whose own line is too fragmented."""
    # coordinates: "along" the component axis, "across" the other one
    along = point[axis]
    across = point[1 - axis]
    n = len(centers)
    h = centers[1] - centers[0]

    line_vals = []
    line_pos = []
    for j in sorted(range(n), key=lambda j: abs(centers[j] - across)):
        if abs(centers[j] - across) > 4.0 * h:
            break
        st = stations[j]
        if len(st) < 2:
            continue
        k = np.searchsorted(centers[st], along)
        cand = st[max(0, k - 2) : k + 2]
        cand = sorted(cand, key=lambda i: abs(centers[i] - along))[:2]
        # reject distant station pairs: extrapolating from another part of
        # the domain along a fragmented line is meaningless
        if len(cand) < 2 or abs(centers[cand[1]] - along) > 6.0 * h:
            continue
        i1, i2 = cand
        v1 = cent[i1, j] if axis == 0 else cent[j, i1]
        v2 = cent[i2, j] if axis == 0 else cent[j, i2]
        t = (along - centers[i1]) / (centers[i2] - centers[i1])
        line_vals.append(v1 + t * (v2 - v1))
        line_pos.append(centers[j])
        if len(line_vals) == 2:
            break
    if len(line_vals) < 2:
        raise StencilUnavailable(
            f"no two usable center lines near {point} for axis {axis}"
        )
    t = (across - line_pos[0]) / (line_pos[1] - line_pos[0])
    return line_vals[0] + t * (line_vals[1] - line_vals[0])


def save_gradient_grid(path, sol: EbmSolution) -> None:
    """Plain-text dump: one record per cell 'i j class gx gy'."""
    cc = sol.classification
    n = cc.grid.n
    with open(path, "w") as fh:
        for i in range(n):
            for j in range(n):
                c = int(cc.cls[i, j])
                gx, gy = sol.grad[i, j]
                if c == EXTERNAL:
                    gx = gy = 0.0
                fh.write(f"{i} {j} {c} {gx:.17g} {gy:.17g}\n")
