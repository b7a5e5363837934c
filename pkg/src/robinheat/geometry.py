"""Domains and P1 meshes with explicit boundary structure.

A :class:`Mesh` is a simplicial mesh in one or two dimensions that also
stores its boundary facets, each with an outward unit normal and a surface
measure. In one dimension the boundary of an interval is a pair of atoms of
weight one (counting measure on the endpoints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay

from .errors import InvalidPolygon, NonObtuseUnachievable

RIGHT_ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty interval [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with counterclockwise vertex order."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(tuple(float(c) for c in v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        _validate_polygon(np.array(verts))

    @property
    def array(self):
        return np.array(self.vertices, dtype=float)

    @property
    def perimeter(self):
        v = self.array
        return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))

    @property
    def area(self):
        return _signed_area(self.array)


def unit_square():
    return Polygon(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


def l_shape():
    return Polygon(((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)))


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - 1e-14 <= c[0] <= max(a[0], b[0]) + 1e-14
                and min(a[1], b[1]) - 1e-14 <= c[1] <= max(a[1], b[1]) + 1e-14)

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True
    for d, a, b, c in ((d1, q1, q2, p1), (d2, q1, q2, p2), (d3, p1, p2, q1), (d4, p1, p2, q2)):
        if abs(d) < 1e-14 and on_segment(a, b, c):
            return True
    return False


def _validate_polygon(v):
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise InvalidPolygon("polygon needs at least 3 two-dimensional vertices")
    k = len(v)
    for i in range(k):
        for j in range(i + 1, k):
            if j == i + 1 or (i == 0 and j == k - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % k], v[j], v[(j + 1) % k]):
                raise InvalidPolygon(f"edges {i} and {j} intersect")
    if _signed_area(v) <= 0:
        raise InvalidPolygon("vertices must be counterclockwise with positive area")


@dataclass(frozen=True, eq=False)
class BoundaryFacet:
    nodes: tuple
    normal: np.ndarray
    measure: float
    cell: int


@dataclass(frozen=True, eq=False)
class MeshQuality:
    h_max: float
    max_angle: float
    non_obtuse: bool


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh.

    Attributes
    ----------
    nodes : ndarray, shape (N, dim)
    cells : ndarray of int, shape (C, dim + 1)
    facets : tuple of BoundaryFacet
    """

    nodes: np.ndarray
    cells: np.ndarray
    facets: tuple = field(default=())

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        cells = np.array(self.cells, dtype=np.intp)
        nodes.setflags(write=False)
        cells.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "cells", cells)
        if not self.facets:
            object.__setattr__(self, "facets", tuple(_find_facets(nodes, cells)))

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @cached_property
    def cell_measures(self):
        return _cell_measures(self.nodes, self.cells)

    @cached_property
    def boundary_nodes(self):
        idx = sorted({i for f in self.facets for i in f.nodes})
        return np.array(idx, dtype=np.intp)

    @cached_property
    def interior_nodes(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def boundary_measure(self):
        return float(sum(f.measure for f in self.facets))

    @cached_property
    def adjacency(self):
        """Node adjacency as a symmetric sparse boolean matrix."""
        rows, cols = [], []
        k = self.cells.shape[1]
        for a in range(k):
            for b in range(k):
                if a != b:
                    rows.append(self.cells[:, a])
                    cols.append(self.cells[:, b])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        adj = sparse.coo_matrix((np.ones(len(r), dtype=bool), (r, c)),
                                shape=(self.n_nodes, self.n_nodes)).tocsr()
        return adj

    def components(self):
        """Connected-component label per node."""
        _, labels = connected_components(self.adjacency, directed=False)
        return labels

    @property
    def is_connected(self):
        return len(np.unique(self.components())) == 1

    def distances(self):
        diff = self.nodes[:, None, :] - self.nodes[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def edges(self):
        """Unique undirected edges, with the number of cells sharing each."""
        k = self.cells.shape[1]
        if k == 2:
            e = np.sort(self.cells, axis=1)
        else:
            e = np.sort(np.vstack([self.cells[:, [0, 1]], self.cells[:, [1, 2]],
                                   self.cells[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts


def _cell_measures(nodes, cells):
    if cells.shape[1] == 2:
        return np.abs(nodes[cells[:, 1], 0] - nodes[cells[:, 0], 0])
    p0, p1, p2 = nodes[cells[:, 0]], nodes[cells[:, 1]], nodes[cells[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _find_facets(nodes, cells):
    facets = []
    if cells.shape[1] == 2:
        count = np.bincount(cells.ravel(), minlength=len(nodes))
        for ci, (i, j) in enumerate(cells):
            for here, there in ((i, j), (j, i)):
                if count[here] == 1:
                    sign = 1.0 if nodes[here, 0] > nodes[there, 0] else -1.0
                    facets.append(BoundaryFacet((int(here),), np.array([sign]), 1.0, ci))
        facets.sort(key=lambda f: (nodes[f.nodes[0], 0], f.nodes[0]))
        return facets
    owner = {}
    for ci, tri in enumerate(cells):
        for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            owner.setdefault(key, []).append((ci, tri[a], tri[b], tri[c]))
    for key in sorted(owner):
        hits = owner[key]
        if len(hits) != 1:
            continue
        ci, a, b, c = hits[0]
        pa, pb, pc = nodes[a], nodes[b], nodes[c]
        t = pb - pa
        length = float(np.hypot(*t))
        normal = np.array([t[1], -t[0]]) / length
        if np.dot(normal, pc - pa) > 0:
            normal = -normal
        facets.append(BoundaryFacet((int(a), int(b)), normal, length, ci))
    return facets


def mesh_quality(mesh):
    """Longest edge and largest interior angle over all cells."""
    edges, _ = mesh.edges()
    lengths = np.linalg.norm(mesh.nodes[edges[:, 0]] - mesh.nodes[edges[:, 1]], axis=1)
    h_max = float(lengths.max())
    if mesh.dim == 1:
        return MeshQuality(h_max, 0.0, True)
    p = mesh.nodes[mesh.cells]
    max_angle = 0.0
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        max_angle = max(max_angle, float(np.max(np.arccos(np.clip(cosang, -1, 1)))))
    return MeshQuality(h_max, max_angle, max_angle <= math.pi / 2 + RIGHT_ANGLE_TOL)


def interval_mesh(a, b, n):
    x = np.linspace(a, b, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x, cells)


def rectangle_grid(x0, x1, y0, y1, nx, ny, keep=None):
    """Right-triangle grid on a rectangle; optionally keep only some cells.

    ``keep(cx, cy)`` receives the cell centres and returns a boolean mask.
    Every triangle has legs parallel to the axes, hence is non-obtuse.
    """
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    if keep is not None:
        cx = 0.5 * (xs[ii] + xs[ii + 1])
        cy = 0.5 * (ys[jj] + ys[jj + 1])
        mask = np.asarray(keep(cx, cy), dtype=bool)
        ii, jj = ii[mask], jj[mask]
    n00, n10 = nid(ii, jj), nid(ii + 1, jj)
    n01, n11 = nid(ii, jj + 1), nid(ii + 1, jj + 1)
    tris = np.vstack([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    return _compact(pts, tris)


def _compact(pts, tris):
    used = np.unique(tris)
    remap = -np.ones(len(pts), dtype=np.intp)
    remap[used] = np.arange(len(used))
    return Mesh(pts[used], remap[tris])


def refined_triangle(vertices, n):
    """Uniform n-fold refinement of a single triangle (affine image of a lattice)."""
    p0, p1, p2 = (np.asarray(v, dtype=float) for v in vertices)
    pts, index = [], {}
    for j in range(n + 1):
        for i in range(n + 1 - j):
            index[i, j] = len(pts)
            pts.append(p0 + (i / n) * (p1 - p0) + (j / n) * (p2 - p0))
    tris = []
    for j in range(n):
        for i in range(n - j):
            tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j + 2 <= n:
                tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return Mesh(np.array(pts), np.array(tris))


def disjoint_union(*meshes):
    """Mesh whose node set is the disjoint union of the inputs' node sets."""
    nodes, cells, offset = [], [], 0
    for m in meshes:
        nodes.append(m.nodes)
        cells.append(m.cells + offset)
        offset += m.n_nodes
    return Mesh(np.vstack(nodes), np.vstack(cells))


def _point_in_polygon(pts, v):
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    k = len(v)
    for i in range(k):
        (xa, ya), (xb, yb) = v[i], v[(i + 1) % k]
        crosses = (ya > y) != (yb > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xa + (y - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (x < xint)
    return inside


def _distance_to_boundary(pts, v):
    d = np.full(len(pts), np.inf)
    k = len(v)
    for i in range(k):
        a, b = v[i], v[(i + 1) % k]
        ab = b - a
        t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.minimum(d, np.linalg.norm(pts - proj, axis=1))
    return d


def _grid_fit(coords, lo, hi, h):
    # smallest uniform subdivision with spacing <= h that hits every coordinate
    width = hi - lo
    n0 = max(1, math.ceil(width / h - 1e-12))
    for n in range(n0, 8 * n0 + 1):
        step = width / n
        k = (coords - lo) / step
        if np.all(np.abs(k - np.round(k)) < 1e-9):
            return n
    return None


def _structured_rectilinear(poly, h):
    v = poly.array
    nxt = np.roll(v, -1, axis=0)
    axis_aligned = np.all((np.abs(v[:, 0] - nxt[:, 0]) < 1e-14) | (np.abs(v[:, 1] - nxt[:, 1]) < 1e-14))
    if not axis_aligned:
        return None
    x0, y0 = v.min(axis=0)
    x1, y1 = v.max(axis=0)
    nx = _grid_fit(v[:, 0], x0, x1, h)
    ny = _grid_fit(v[:, 1], y0, y1, h)
    if nx is None or ny is None:
        return None
    return rectangle_grid(x0, x1, y0, y1, nx, ny,
                          keep=lambda cx, cy: _point_in_polygon(np.column_stack([cx, cy]), v))


def _boundary_samples(v, h):
    pts = []
    k = len(v)
    for i in range(k):
        a, b = v[i], v[(i + 1) % k]
        n = max(1, math.ceil(np.linalg.norm(b - a) / h - 1e-12))
        for s in range(n):
            pts.append(a + (s / n) * (b - a))
    return np.array(pts)


def _lattice_points(v, h):
    lo, hi = v.min(axis=0), v.max(axis=0)
    dy = h * math.sqrt(3) / 2
    rows = []
    y = lo[1] + dy / 2
    r = 0
    while y < hi[1]:
        shift = 0.5 * h if r % 2 else 0.0
        xs = np.arange(lo[0] + shift + h / 2, hi[0], h)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
        y += dy
        r += 1
    pts = np.vstack(rows) if rows else np.zeros((0, 2))
    keep = _point_in_polygon(pts, v) & (_distance_to_boundary(pts, v) > 0.6 * h)
    return pts[keep]


def _break_ties(pts, tris, tol=1e-12):
    """Flip co-circular interior edges so the diagonal holds the lowest node index."""
    tris = [list(t) for t in tris]
    changed = True
    while changed:
        changed = False
        owner = {}
        for ti, t in enumerate(tris):
            for a in range(3):
                key = tuple(sorted((t[a], t[(a + 1) % 3])))
                owner.setdefault(key, []).append(ti)
        for (a, b), ts in owner.items():
            if len(ts) != 2:
                continue
            t1, t2 = tris[ts[0]], tris[ts[1]]
            c = next(n for n in t1 if n not in (a, b))
            d = next(n for n in t2 if n not in (a, b))
            quad = (a, b, c, d)
            if min(quad) in (a, b):
                continue
            P = pts[[a, b, c, d]]
            m = np.column_stack([P[:3, 0] - P[3, 0], P[:3, 1] - P[3, 1],
                                 np.sum((P[:3] - P[3]) ** 2, axis=1)])
            scale = np.max(np.abs(P - P.mean(axis=0))) ** 4
            if abs(np.linalg.det(m)) > tol * scale:
                continue
            tris[ts[0]] = [c, d, a]
            tris[ts[1]] = [d, c, b]
            changed = True
            break
    out = np.array(tris)
    # restore counterclockwise orientation
    p = pts[out]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    out[cross < 0] = out[cross < 0][:, [0, 2, 1]]
    return out


def _conforming_delaunay(poly, h, max_rounds=8):
    v = poly.array
    bpts = _boundary_samples(v, h)
    ipts = _lattice_points(v, h)
    for _ in range(max_rounds):
        pts = np.vstack([bpts, ipts])
        tri = Delaunay(pts)
        tris = tri.simplices
        p = pts[tris]
        area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        tris = tris[area > 1e-12 * h * h]
        cent = pts[tris].mean(axis=1)
        tris = tris[_point_in_polygon(cent, v)]
        edges = {tuple(sorted((t[a], t[(a + 1) % 3]))) for t in tris for a in range(3)}
        nb = len(bpts)
        missing = [i for i in range(nb) if tuple(sorted((i, (i + 1) % nb))) not in edges]
        if not missing:
            return Mesh(pts, _break_ties(pts, tris))
        # split missing boundary segments and try again
        new = []
        for i in range(nb):
            new.append(bpts[i])
            if i in missing:
                new.append(0.5 * (bpts[i] + bpts[(i + 1) % nb]))
        bpts = np.array(new)
    raise InvalidPolygon("could not recover the polygon boundary in the triangulation")


def build_mesh(spec, h_target, require_non_obtuse=False):
    """Mesh an :class:`Interval` or :class:`Polygon` at target size ``h_target``.

    Rectilinear polygons whose corners fit a grid get a right-triangle grid,
    triangles get a uniform refinement, anything else a conforming Delaunay
    mesh. With ``require_non_obtuse`` the result is rejected unless every
    angle is at most 90 degrees.
    """
    if not h_target > 0:
        raise ValueError("h_target must be positive")
    if isinstance(spec, Interval):
        n = max(1, math.ceil((spec.b - spec.a) / h_target - 1e-12))
        return interval_mesh(spec.a, spec.b, n)
    if not isinstance(spec, Polygon):
        raise TypeError(f"unsupported domain {spec!r}")
    mesh = _structured_rectilinear(spec, h_target)
    if mesh is None and len(spec.vertices) == 3:
        v = spec.array
        longest = max(np.linalg.norm(v[i] - v[(i + 1) % 3]) for i in range(3))
        mesh = refined_triangle(v, max(1, math.ceil(longest / h_target - 1e-12)))
    if mesh is None:
        mesh = _conforming_delaunay(spec, h_target)
    if require_non_obtuse:
        q = mesh_quality(mesh)
        if not q.non_obtuse:
            raise NonObtuseUnachievable(
                f"max angle {math.degrees(q.max_angle):.3f} deg exceeds 90 at h={h_target}")
    return mesh


def write_mesh(mesh, path):
    """Write node, cell and facet tables as plain text."""
    with open(path, "w") as fh:
        fh.write(f"# dim {mesh.dim}\n# nodes {mesh.n_nodes}\n")
        for i, p in enumerate(mesh.nodes):
            fh.write(f"{i} " + " ".join(f"{c:.17g}" for c in p) + "\n")
        fh.write(f"# cells {len(mesh.cells)}\n")
        for i, c in enumerate(mesh.cells):
            fh.write(f"{i} " + " ".join(str(int(k)) for k in c) + "\n")
        fh.write(f"# facets {len(mesh.facets)}\n")
        for f in mesh.facets:
            fh.write(" ".join(str(k) for k in f.nodes) + " | "
                     + " ".join(f"{c:.17g}" for c in f.normal) + f" | {f.measure:.17g}\n")
