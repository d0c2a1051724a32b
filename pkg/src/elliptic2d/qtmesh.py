"""Quadtree-based triangle mesh generation with marching-squares boundary
recovery, plus point location by tree descent and mesh walking.

The box [-1, 1]^2 is partitioned into a 2:1-balanced quadtree whose
boundary-crossing quadrants are refined to the maximum level (a uniform mesh
is the special case min_level == max_level).  Full interior quadrants are
split into two triangles, or center-fanned when hanging nodes from finer
neighbors sit on their sides.  Partial quadrants recover the boundary from
the corner-sign pattern, one crossing per (sub-)edge, and triangulate the
inside polygon; the crossing vertices are then projected exactly onto the
curve.

Quadrant corners, hanging nodes, and quadrant centers are addressed on an
integer lattice so shared vertices deduplicate exactly, with no epsilon
merging; crossing vertices are keyed by the finest sub-edge that carries
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import AmbiguousTopology, InvertedElement, OutsideDomain

INSIDE, BOUNDARY, OUTSIDE = 0, 1, 2

# Relative area floor below which a fan triangle counts as degenerate.
_AREA_EPS = 1e-14

# Crossings closer than this (edge parameter) to an endpoint are snapped
# onto it; the lattice vertex then becomes a boundary vertex and degenerate
# sliver polygons collapse by index deduplication.
_SNAP_TOL = 1e-9


@dataclass
class Quadtree:
    """Leaves of a balanced quadtree keyed by (level, ix, iy)."""

    min_level: int
    max_level: int
    leaves: dict

    def leaf_containing(self, x: float, y: float):
        """Key of the leaf containing (x, y), clipped into the box."""
        x = min(max(x, geometry.BOX_LO), geometry.BOX_HI)
        y = min(max(y, geometry.BOX_LO), geometry.BOX_HI)
        for lvl in range(self.max_level + 1):
            m = 1 << lvl
            size = (geometry.BOX_HI - geometry.BOX_LO) / m
            ix = min(int((x - geometry.BOX_LO) / size), m - 1)
            iy = min(int((y - geometry.BOX_LO) / size), m - 1)
            if (lvl, ix, iy) in self.leaves:
                return (lvl, ix, iy)
        raise OutsideDomain(f"no leaf contains ({x}, {y})")


def _quad_origin(lvl: int, ix: int, iy: int):
    size = (geometry.BOX_HI - geometry.BOX_LO) / (1 << lvl)
    return geometry.BOX_LO + ix * size, geometry.BOX_LO + iy * size, size


# sample fractions used to decide whether a quadrant is crossed
_FR = np.linspace(0.0, 1.0, 5)
_SAMPLE_PTS = np.array([(u, v) for u in _FR for v in _FR])


def _quad_status(boundary, lvl: int, ix: int, iy: int) -> int:
    x0, y0, size = _quad_origin(lvl, ix, iy)
    pts = np.array([x0, y0]) + _SAMPLE_PTS * size
    lv = boundary.level(pts[:, 0], pts[:, 1])
    if np.all(lv < 0.0):
        return INSIDE
    if np.all(lv >= 0.0):
        return OUTSIDE
    return BOUNDARY


def build_quadtree(boundary, min_level: int, max_level: int) -> Quadtree:
    """Refine boundary-crossing quadrants to max_level, others to min_level,
    then restore the 2:1 edge balance."""
    if not (0 < min_level <= max_level):
        raise ValueError("need 0 < min_level <= max_level")
    leaves: dict = {}

    def visit(lvl, ix, iy):
        if lvl < min_level:
            split = True
        elif lvl >= max_level:
            split = False
        else:
            split = _quad_status(boundary, lvl, ix, iy) == BOUNDARY
        if split:
            for dx in (0, 1):
                for dy in (0, 1):
                    visit(lvl + 1, 2 * ix + dx, 2 * iy + dy)
        else:
            leaves[(lvl, ix, iy)] = None

    visit(0, 0, 0)
    tree = Quadtree(min_level=min_level, max_level=max_level, leaves=leaves)
    if min_level != max_level:
        _balance(tree)
    _assign_status(tree, boundary)
    return tree


def _leaf_or_ancestor(leaves, lvl, ix, iy):
    """Leaf key covering quadrant (lvl, ix, iy), or None if subdivided."""
    l, x, y = lvl, ix, iy
    while l >= 0:
        if (l, x, y) in leaves:
            return (l, x, y)
        l -= 1
        x >>= 1
        y >>= 1
    return None


def _side_neighbor_key(lvl, ix, iy, side):
    m = 1 << lvl
    nx = ix + (-1 if side == 0 else (1 if side == 1 else 0))
    ny = iy + (-1 if side == 2 else (1 if side == 3 else 0))
    if not (0 <= nx < m and 0 <= ny < m):
        return None
    return (lvl, nx, ny)


def _balance(tree: Quadtree) -> None:
    leaves = tree.leaves
    queue = list(leaves.keys())
    while queue:
        key = queue.pop()
        if key not in leaves:
            continue
        lvl, ix, iy = key
        for side in range(4):
            nk = _side_neighbor_key(lvl, ix, iy, side)
            if nk is None:
                continue
            cover = _leaf_or_ancestor(leaves, *nk)
            if cover is None or lvl - cover[0] < 2:
                continue
            # split the too-coarse neighbor into four leaves
            del leaves[cover]
            cl, cx, cy = cover
            for dx in (0, 1):
                for dy in (0, 1):
                    ck = (cl + 1, 2 * cx + dx, 2 * cy + dy)
                    leaves[ck] = None
                    queue.append(ck)
            queue.append(key)
            break


def _assign_status(tree: Quadtree, boundary) -> None:
    """Vectorized inside/outside/boundary labels for every leaf."""
    by_level: dict = {}
    for key in tree.leaves:
        by_level.setdefault(key[0], []).append(key)
    for lvl, keys in by_level.items():
        m = 1 << lvl
        size = (geometry.BOX_HI - geometry.BOX_LO) / m
        org = np.array([(k[1], k[2]) for k in keys], dtype=float)
        org = geometry.BOX_LO + org * size
        pts = org[:, None, :] + _SAMPLE_PTS[None, :, :] * size
        lv = boundary.level(pts[..., 0], pts[..., 1])
        neg = lv < 0.0
        allin = neg.all(axis=1)
        allout = (~neg).all(axis=1)
        for k, ain, aout in zip(keys, allin, allout):
            tree.leaves[k] = INSIDE if ain else (OUTSIDE if aout else BOUNDARY)


@dataclass
class TriMesh:
    """Conforming triangle mesh with edge adjacency.

    ``edge_tris[e]`` holds the one or two triangles sharing edge ``e`` (-1
    when absent); ``tri_neighbors[t, k]`` is the triangle across the edge
    (triangles[t, k], triangles[t, (k+1) % 3]).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    tri_neighbors: np.ndarray
    boundary_vertex: np.ndarray
    leaf_seed: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    def interior_edge_mask(self) -> np.ndarray:
        return self.edge_tris[:, 1] >= 0


class _MeshBuilder:
    def __init__(self, max_level: int):
        self.max_level = max_level
        self.key_to_index: dict = {}
        self.points: list = []
        self.is_boundary: list = []
        self.triangles: list = []
        self.leaf_seed: dict = {}

    def grid_vertex(self, gx: int, gy: int) -> int:
        """Vertex on the doubled integer lattice (units of box/2^(L+1))."""
        key = ("g", gx, gy)
        idx = self.key_to_index.get(key)
        if idx is None:
            u = (geometry.BOX_HI - geometry.BOX_LO) / (1 << (self.max_level + 1))
            idx = len(self.points)
            self.key_to_index[key] = idx
            self.points.append(
                (geometry.BOX_LO + gx * u, geometry.BOX_LO + gy * u)
            )
            self.is_boundary.append(False)
        return idx

    def crossing_vertex(self, key, point) -> int:
        idx = self.key_to_index.get(key)
        if idx is None:
            idx = len(self.points)
            self.key_to_index[key] = idx
            self.points.append((float(point[0]), float(point[1])))
            self.is_boundary.append(True)
        return idx

    def add_triangle(self, v0: int, v1: int, v2: int, leafkey) -> None:
        self.triangles.append((v0, v1, v2))
        self.leaf_seed.setdefault(leafkey, len(self.triangles) - 1)


def _subedges_of_side(tree, lvl, ix, iy, side):
    """Finest sub-edges of one quadrant side, in walk order for that side.

    Returns a list of (gx0, gy0, gx1, gy1) in doubled-lattice units; two
    entries when the across-neighbor is finer, one otherwise."""
    shift = 1 << (tree.max_level + 1 - lvl)
    x0, y0 = ix * shift, iy * shift
    x1, y1 = x0 + shift, y0 + shift
    corners = {
        0: ((x0, y0), (x0, y1)),  # -x side, walked +y
        1: ((x1, y0), (x1, y1)),  # +x side, walked +y
        2: ((x0, y0), (x1, y0)),  # -y side, walked +x
        3: ((x0, y1), (x1, y1)),  # +y side, walked +x
    }[side]
    nk = _side_neighbor_key(lvl, ix, iy, side)
    split = False
    if nk is not None and _leaf_or_ancestor(tree.leaves, *nk) is None:
        split = True  # neighbor is refined: hanging node at our midpoint
    (ax, ay), (bx, by) = corners
    if not split:
        return [(ax, ay, bx, by)]
    mx, my = (ax + bx) // 2, (ay + by) // 2
    return [(ax, ay, mx, my), (mx, my, bx, by)]


def _collect_edges_and_crossings(tree: Quadtree, boundary):
    """Level values at lattice corners and one crossing per signed sub-edge."""
    u = (geometry.BOX_HI - geometry.BOX_LO) / (1 << (tree.max_level + 1))
    corner_level: dict = {}
    subedges: dict = {}

    def corner(gx, gy):
        v = corner_level.get((gx, gy))
        if v is None:
            v = float(
                boundary.level(
                    geometry.BOX_LO + gx * u, geometry.BOX_LO + gy * u
                )
            )
            corner_level[(gx, gy)] = v
        return v

    for (lvl, ix, iy), status in tree.leaves.items():
        if status == OUTSIDE:
            continue
        for side in range(4):
            for gx0, gy0, gx1, gy1 in _subedges_of_side(tree, lvl, ix, iy, side):
                axis = 0 if gy0 == gy1 else 1
                key = (axis, gx0, gy0, gx1, gy1)
                if key in subedges:
                    continue
                subedges[key] = (corner(gx0, gy0), corner(gx1, gy1))

    crossings: dict = {}
    keys = [k for k, (l0, l1) in subedges.items() if (l0 < 0) != (l1 < 0)]
    if keys:
        arr = np.array([k[1:] for k in keys], dtype=float) * u + geometry.BOX_LO
        p0 = arr[:, 0:2]
        p1 = arr[:, 2:4]
        b0 = np.array([subedges[k][0] for k in keys])
        t = geometry.bisect_on_segments(boundary, p0, p1, b0)
        pts = p0 + t[:, None] * (p1 - p0)
        for k, tk, p in zip(keys, t, pts):
            if tk < _SNAP_TOL:
                crossings[k] = ("snap", k[1], k[2])
            elif tk > 1.0 - _SNAP_TOL:
                crossings[k] = ("snap", k[3], k[4])
            else:
                crossings[k] = p
    return corner_level, crossings


def triangulate(tree: Quadtree, boundary) -> TriMesh:
    """Triangulate interior and boundary quadrants into a conforming mesh.

    Full quadrants become two triangles (or a center fan when hanging nodes
    are present); partial quadrants fan their inside polygon.  Raises
    AmbiguousTopology when a quadrant's sign pattern cannot be recovered.
    """
    corner_level, crossings = _collect_edges_and_crossings(tree, boundary)
    b = _MeshBuilder(tree.max_level)

    for key in sorted(tree.leaves.keys()):
        status = tree.leaves[key]
        if status == OUTSIDE:
            continue
        cycle = _leaf_cycle(tree, key, corner_level, crossings, b)
        ncross = sum(1 for item in cycle if item[1] == "x")
        if ncross == 0:
            flags = {it[2] for it in cycle if it[1] == "g"}
            if flags == {True}:
                _triangulate_full(tree, key, cycle, b)
            elif flags == {False}:
                continue  # grazing contact only; nothing to mesh
            else:
                raise AmbiguousTopology(
                    f"quadrant {key} mixes corner signs without crossings"
                )
        else:
            _triangulate_partial(tree, key, cycle, ncross, b, boundary)

    return _finalize(b)


def _leaf_cycle(tree, key, corner_level, crossings, b: _MeshBuilder):
    """Perimeter nodes of a leaf in counterclockwise order.

    Items are (vertex index, flag, inside) with flag "g" for lattice nodes
    and "x" for crossings."""
    lvl, ix, iy = key
    items = []
    # sides in CCW walk order: -y (+x), +x (+y), +y (-x), -x (-y)
    for side, reverse in ((2, False), (1, False), (3, True), (0, True)):
        subs = _subedges_of_side(tree, lvl, ix, iy, side)
        if reverse:
            subs = [(s[2], s[3], s[0], s[1]) for s in reversed(subs)]
        for gx0, gy0, gx1, gy1 in subs:
            vi = b.grid_vertex(gx0, gy0)
            items.append((vi, "g", corner_level[(gx0, gy0)] < 0.0))
            axis = 0 if gy0 == gy1 else 1
            ck = (
                (axis, gx0, gy0, gx1, gy1)
                if (gx0, gy0) < (gx1, gy1)
                else (axis, gx1, gy1, gx0, gy0)
            )
            p = crossings.get(ck)
            if p is None:
                continue
            if isinstance(p, tuple) and p[0] == "snap":
                vi = b.grid_vertex(p[1], p[2])
                b.is_boundary[vi] = True
                items.append((vi, "x", False))
            else:
                items.append((b.crossing_vertex(("c",) + ck, p), "x", False))
    return items


def _triangulate_full(tree, key, cycle, b: _MeshBuilder):
    lvl, ix, iy = key
    nodes = [it[0] for it in cycle if it[1] == "g"]
    if len(nodes) == 4:
        b.add_triangle(nodes[0], nodes[1], nodes[2], key)
        b.add_triangle(nodes[0], nodes[2], nodes[3], key)
        return
    shift = 1 << (tree.max_level + 1 - lvl)
    cx = ix * shift + shift // 2
    cy = iy * shift + shift // 2
    center = b.grid_vertex(cx, cy)
    for k in range(len(nodes)):
        b.add_triangle(center, nodes[k], nodes[(k + 1) % len(nodes)], key)


def _triangulate_partial(tree, key, cycle, ncross, b: _MeshBuilder, boundary):
    if ncross not in (2, 4):
        raise AmbiguousTopology(
            f"quadrant {key} has {ncross} boundary crossings"
        )
    # rotate so the cycle starts at a crossing, then split into arcs
    k0 = next(k for k, it in enumerate(cycle) if it[1] == "x")
    cyc = cycle[k0:] + cycle[:k0]
    arcs = []
    cur = [cyc[0]]
    for it in cyc[1:]:
        cur.append(it)
        if it[1] == "x":
            arcs.append(cur)
            cur = [it]
    cur.append(cyc[0])
    arcs.append(cur)

    def arc_inside(arc):
        mids = arc[1:-1]
        if not mids:
            return None
        flags = {it[2] for it in mids}
        if len(flags) != 1:
            raise AmbiguousTopology(
                f"quadrant {key} mixes inside and outside nodes on one arc"
            )
        return flags.pop()

    polys = []
    if ncross == 2:
        ins = [arc for arc in arcs if arc_inside(arc)]
        if len(ins) != 1:
            raise AmbiguousTopology(
                f"quadrant {key} has {len(ins)} inside arcs"
            )
        polys.append([it[0] for it in ins[0]])
    else:
        # saddle: the center sample decides whether the two inside arcs
        # connect through the quadrant
        lvl, ix, iy = key
        x0, y0, size = _quad_origin(lvl, ix, iy)
        center_in = (
            float(boundary.level(x0 + 0.5 * size, y0 + 0.5 * size)) < 0.0
        )
        inside_flags = [arc_inside(arc) for arc in arcs]
        if sum(1 for f in inside_flags if f) != 2:
            raise AmbiguousTopology(f"quadrant {key} saddle is inconsistent")
        if center_in:
            poly = []
            for arc, f in zip(arcs, inside_flags):
                if f:
                    poly.extend(it[0] for it in arc)
            # drop consecutive duplicates introduced by shared crossings
            polys.append(_dedup_cyclic(poly))
        else:
            for arc, f in zip(arcs, inside_flags):
                if f:
                    polys.append([it[0] for it in arc])

    for poly in polys:
        _fan_polygon(poly, key, b)


def _dedup_cyclic(seq):
    out = []
    for v in seq:
        if not out or out[-1] != v:
            out.append(v)
    if len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _fan_polygon(poly, key, b: _MeshBuilder) -> None:
    """Fan a simple CCW polygon from one of its vertices; fall back to a
    centroid fan when no vertex sees the whole polygon."""
    deduped = _dedup_cyclic(poly)
    if len(deduped) < 3:
        if len(deduped) < len(poly):
            return  # sliver collapsed by crossing snap; nothing to mesh
        raise AmbiguousTopology(f"quadrant {key} produced a degenerate polygon")
    poly = deduped
    pts = np.array([b.points[v] for v in poly])
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1])) ** 2 + 1e-300

    m = len(poly)
    for apex in range(m):
        ok = True
        for k in range(m - 2):
            u = pts[(apex + k + 1) % m] - pts[apex]
            v = pts[(apex + k + 2) % m] - pts[apex]
            if 0.5 * (u[0] * v[1] - u[1] * v[0]) <= _AREA_EPS * scale:
                ok = False
                break
        if ok:
            for k in range(m - 2):
                b.add_triangle(
                    poly[apex],
                    poly[(apex + k + 1) % m],
                    poly[(apex + k + 2) % m],
                    key,
                )
            return

    area, centroid = _poly_area_centroid(pts)
    if area <= 0.0:
        raise AmbiguousTopology(f"quadrant {key} polygon is inverted")
    c = b.crossing_vertex(("fc", key), centroid)
    b.is_boundary[c] = False
    for k in range(m):
        b.add_triangle(c, poly[k], poly[(k + 1) % m], key)


def _poly_area_centroid(pts: np.ndarray):
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(cross.sum())
    if abs(area) < 1e-300:
        return 0.0, pts.mean(axis=0)
    cx = float(((x + xn) * cross).sum()) / (6 * area)
    cy = float(((y + yn) * cross).sum()) / (6 * area)
    return area, np.array([cx, cy])


def _finalize(b: _MeshBuilder) -> TriMesh:
    vertices = np.array(b.points, dtype=float)
    triangles = np.array(b.triangles, dtype=np.int64)
    used = np.zeros(len(vertices), dtype=bool)
    used[triangles.ravel()] = True
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    vertices = vertices[used]
    boundary_vertex = np.array(b.is_boundary, dtype=bool)[used]
    triangles = remap[triangles]
    leaf_seed = dict(b.leaf_seed)

    mesh = TriMesh(
        vertices=vertices,
        triangles=triangles,
        edges=np.empty((0, 2), dtype=np.int64),
        edge_tris=np.empty((0, 2), dtype=np.int64),
        tri_neighbors=np.empty((0, 3), dtype=np.int64),
        boundary_vertex=boundary_vertex,
        leaf_seed=leaf_seed,
    )
    build_adjacency(mesh)
    return mesh


def build_adjacency(mesh: TriMesh) -> None:
    """Edge table and triangle neighbor map; validates 2-manifoldness."""
    tris = mesh.triangles
    edge_index: dict = {}
    edges: list = []
    edge_tris: list = []
    neighbors = -np.ones((len(tris), 3), dtype=np.int64)
    for t, (a, bb, c) in enumerate(tris):
        for k, (u, v) in enumerate(((a, bb), (bb, c), (c, a))):
            key = (u, v) if u < v else (v, u)
            e = edge_index.get(key)
            if e is None:
                edge_index[key] = len(edges)
                edges.append(key)
                edge_tris.append([t, -1])
            else:
                if edge_tris[e][1] != -1:
                    raise AmbiguousTopology(
                        f"edge {key} is shared by more than two triangles"
                    )
                edge_tris[e][1] = t
    for e, (t0, t1) in enumerate(edge_tris):
        if t1 == -1:
            continue
        for t, other in ((t0, t1), (t1, t0)):
            a, bb, c = tris[t]
            u, v = edges[e]
            for k, (p, q) in enumerate(((a, bb), (bb, c), (c, a))):
                if (min(p, q), max(p, q)) == (u, v):
                    neighbors[t, k] = other
    mesh.edges = np.array(edges, dtype=np.int64)
    mesh.edge_tris = np.array(edge_tris, dtype=np.int64)
    mesh.tri_neighbors = neighbors


def postprocess(mesh: TriMesh, boundary) -> TriMesh:
    """Move boundary-flagged vertices exactly onto the curve.

    Raises InvertedElement if any triangle flips; the mesh is modified in
    place and also returned."""
    bm = mesh.boundary_vertex
    if np.any(bm):
        mesh.vertices[bm] = boundary.project_many(mesh.vertices[bm])
    areas = mesh.areas()
    if np.any(areas <= 0.0):
        t = int(np.argmin(areas))
        raise InvertedElement(
            f"triangle {t} inverted after boundary projection "
            f"(area {areas[t]:.3e})"
        )
    return mesh


def build_mesh(boundary, min_level: int, max_level: int):
    """Tree, triangulation, and boundary projection in one call."""
    tree = build_quadtree(boundary, min_level, max_level)
    mesh = triangulate(tree, boundary)
    postprocess(mesh, boundary)
    return tree, mesh


# --- point location ----------------------------------------------------------


def barycentric(mesh: TriMesh, t: int, p) -> np.ndarray:
    a, b, c = mesh.vertices[mesh.triangles[t]]
    m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    rhs = np.array([p[0] - a[0], p[1] - a[1]])
    try:
        lam = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError:
        return np.array([-1.0, -1.0, -1.0])
    return np.array([1.0 - lam[0] - lam[1], lam[0], lam[1]])


def point_locate(
    mesh: TriMesh,
    tree: Quadtree,
    p,
    tol: float = 1e-12,
    seed: int | None = None,
):
    """Triangle containing p: tree descent for a starting triangle, then a
    greedy walk along edge adjacency, falling back to an exhaustive scan.

    Raises OutsideDomain when the scan confirms no triangle contains p.
    """
    start = seed
    if start is None:
        try:
            leaf = tree.leaf_containing(p[0], p[1])
            start = mesh.leaf_seed.get(leaf)
        except OutsideDomain:
            start = None
    if start is not None:
        t = start
        budget = mesh.n_triangles
        while budget > 0:
            lam = barycentric(mesh, t, p)
            k = int(np.argmin(lam))
            if lam[k] >= -tol:
                return t
            # the walk crosses the edge opposite vertex k, which is local
            # edge (k+1) in the (v_k, v_k+1) numbering
            nxt = mesh.tri_neighbors[t, (k + 1) % 3]
            if nxt < 0:
                break
            t = int(nxt)
            budget -= 1
    t = _scan(mesh, p, tol)
    if t is None:
        raise OutsideDomain(f"point ({p[0]}, {p[1]}) is outside the mesh")
    return t


def _min_bary_all(mesh: TriMesh, p) -> np.ndarray:
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (
        b[:, 1] - a[:, 1]
    )
    px = p[0] - a[:, 0]
    py = p[1] - a[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = ((c[:, 1] - a[:, 1]) * px - (c[:, 0] - a[:, 0]) * py) / det
        l2 = (-(b[:, 1] - a[:, 1]) * px + (b[:, 0] - a[:, 0]) * py) / det
    l0 = 1.0 - l1 - l2
    lam = np.stack([l0, l1, l2], axis=1)
    lam[~np.isfinite(lam)] = -np.inf
    return lam.min(axis=1)

def _scan(mesh: TriMesh, p, tol: float):
    mb = _min_bary_all(mesh, p)
    t = int(np.argmax(mb))
    return t if mb[t] >= -tol else None


def locate_nearest(mesh: TriMesh, p):
    """Triangle with the least barycentric violation; for evaluating fields
    at points marginally outside the triangulated domain."""
    mb = _min_bary_all(mesh, p)
    return int(np.argmax(mb))


# --- serialization -----------------------------------------------------------


def save_mesh(path, mesh: TriMesh) -> None:
    """Plain-text format: 'nv nt ne' header, vertex lines 'x y flag',
    triangle lines 'v0 v1 v2', edge lines 'v0 v1 t_left t_right'."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.edges)}\n")
        for (x, y), bf in zip(mesh.vertices, mesh.boundary_vertex):
            fh.write(f"{x:.17g} {y:.17g} {int(bf)}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        for (u, v), (t0, t1) in zip(mesh.edges, mesh.edge_tris):
            fh.write(f"{u} {v} {t0} {t1}\n")


def load_mesh(path) -> TriMesh:
    with open(path) as fh:
        nv, nt, ne = map(int, fh.readline().split())
        vertices = np.empty((nv, 2))
        bflag = np.zeros(nv, dtype=bool)
        for i in range(nv):
            xs, ys, fs = fh.readline().split()
            vertices[i] = (float(xs), float(ys))
            bflag[i] = fs == "1"
        triangles = np.empty((nt, 3), dtype=np.int64)
        for t in range(nt):
            triangles[t] = [int(s) for s in fh.readline().split()]
        for _ in range(ne):
            fh.readline()
    mesh = TriMesh(
        vertices=vertices,
        triangles=triangles,
        edges=np.empty((0, 2), dtype=np.int64),
        edge_tris=np.empty((0, 2), dtype=np.int64),
        tri_neighbors=np.empty((0, 3), dtype=np.int64),
        boundary_vertex=bflag,
    )
    build_adjacency(mesh)
    return mesh
