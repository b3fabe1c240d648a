"""Conforming triangular meshes and longest-edge bisection.

A :class:`Mesh` is built once from vertex coordinates and a connectivity
array and is treated as an immutable value afterwards: refinement returns
a new mesh.  Edge topology is derived on construction.  Edges are numbered
by the lexicographic order of their sorted vertex pairs, which makes the
ordering stable when refinement appends vertices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh input or a broken refinement."""


class Mesh:
    """Conforming 2D triangulation.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    triangles : array_like of int, shape (nt, 3)
        Vertex ids.  Clockwise triangles are reoriented.
    parent : array_like of int, shape (nt,), optional
        Element id, in the mesh this one was refined from, of each
        triangle's ancestor.

    Attributes
    ----------
    edges : ndarray, shape (ne, 2)
        Sorted vertex pairs, lexicographically ordered.
    edge_elements : ndarray, shape (ne, 2)
        Incident elements; the second entry is -1 on the boundary.
    element_edges : ndarray, shape (nt, 3)
        Local edge ``i`` is the side opposite local vertex ``i``.
    boundary_edges : ndarray of bool, shape (ne,)
    refinement_edge : ndarray, shape (nt,)
        Local index of the longest edge, ties broken by smallest edge id.
    """

    def __init__(self, vertices, triangles, parent=None):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        nv = len(vertices)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
            raise MeshError("triangle vertex id out of range")
        if len({tuple(sorted(t)) for t in triangles.tolist()}) != len(triangles):
            raise MeshError("duplicate triangle")
        if np.any((triangles[:, 0] == triangles[:, 1]) | (triangles[:, 1] == triangles[:, 2])
                  | (triangles[:, 0] == triangles[:, 2])):
            raise MeshError("degenerate triangle (repeated vertex)")

        area2 = _signed_area2(vertices, triangles)
        # degenerate relative to the triangle's own size, so deep refinement is fine
        x = vertices[triangles]
        longest2 = np.max(np.sum((x - np.roll(x, 1, axis=1)) ** 2, axis=2), axis=1)
        bad = np.flatnonzero(np.abs(area2) <= 1e-12 * longest2)
        if bad.size:
            raise MeshError(f"zero-area triangle(s): {bad[:5].tolist()}")
        flip = area2 < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge (more than two incident triangles)")

        nt = len(triangles)
        element_edges = inverse.reshape(nt, 3)
        owners = np.repeat(np.arange(nt), 3)
        edge_elements = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        edge_elements[sorted_edges[first], 0] = owners[order][first]
        edge_elements[sorted_edges[~first], 1] = owners[order][~first]

        self.vertices = vertices
        self.triangles = triangles
        self.edges = edges
        self.edge_elements = edge_elements
        self.element_edges = element_edges
        self.boundary_edges = edge_elements[:, 1] < 0
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)

        elen2 = self.edge_lengths[element_edges] ** 2
        # strict total order: longer first, then smaller edge id
        best = np.zeros(nt, dtype=np.int64)
        for j in (1, 2):
            longer = elen2[:, j] > elen2[np.arange(nt), best]
            tie = (elen2[:, j] == elen2[np.arange(nt), best]) & (
                element_edges[:, j] < element_edges[np.arange(nt), best])
            best = np.where(longer | tie, j, best)
        self.refinement_edge = best

        for arr in (self.vertices, self.triangles, self.edges, self.edge_elements,
                    self.element_edges, self.boundary_edges, self.refinement_edge):
            arr.setflags(write=False)

    def __repr__(self):
        return f"Mesh(nv={self.n_vertices}, nt={self.n_elements}, ne={self.n_edges})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * _signed_area2(self.vertices, self.triangles)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_K, the longest edge length of each element."""
        return self.edge_lengths[self.element_edges].max(axis=1)

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """Gradients of the three local hat functions, shape (nt, 3, 2)."""
        x = self.vertices[self.triangles]
        nxt = x[:, [1, 2, 0]]
        prv = x[:, [2, 0, 1]]
        d = nxt - prv
        grads = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return -grads / (2.0 * self.areas)[:, None, None]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.edges[self.boundary_edges].ravel()] = True
        return flags

    @cached_property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertices)

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normal of each edge, pointing out of ``edge_elements[:, 0]``."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1) / self.edge_lengths[:, None]
        owner = self.edge_elements[:, 0]
        centroid = self.vertices[self.triangles[owner]].mean(axis=1)
        mid = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        inward = np.einsum("ij,ij->i", n, centroid - mid) > 0
        n[inward] *= -1
        return n

    @cached_property
    def _vertex_elements(self):
        nt = self.n_elements
        order = np.argsort(self.triangles.ravel(), kind="stable")
        elems = (np.arange(3 * nt) // 3)[order]
        counts = np.bincount(self.triangles.ravel(), minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, elems

    def vertex_elements(self, v: int) -> np.ndarray:
        """Elements having ``v`` as a vertex."""
        offsets, elems = self._vertex_elements
        return elems[offsets[v]:offsets[v + 1]]

    def min_angle(self) -> float:
        """Smallest interior angle over all elements, in radians."""
        x = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = x[:, (i + 1) % 3] - x[:, i]
            b = x[:, (i + 2) % 3] - x[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))


def _signed_area2(vertices, triangles):
    x = vertices[triangles]
    a = x[:, 1] - x[:, 0]
    b = x[:, 2] - x[:, 0]
    return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]


def build_topology(vertices, triangles) -> Mesh:
    """Build a :class:`Mesh` (edges, incidences, boundary flags) from raw arrays."""
    return Mesh(vertices, triangles)


# --------------------------------------------------------------------- location

@dataclass(frozen=True)
class PointLocation:
    """Where a point sits in a mesh.

    ``kind`` is one of ``"vertex"``, ``"edge"`` or ``"interior"`` and ``index``
    the vertex, edge or element id accordingly.  ``elements`` lists every
    closed element containing the point.
    """

    kind: str
    index: int
    elements: tuple

    @property
    def is_vertex(self) -> bool:
        return self.kind == "vertex"


def barycentric(mesh: Mesh, z, elements=None) -> np.ndarray:
    """Barycentric coordinates of ``z`` with respect to ``elements`` (default all)."""
    tri = mesh.triangles if elements is None else mesh.triangles[np.atleast_1d(elements)]
    x = mesh.vertices[tri]
    z = np.asarray(z, dtype=float)
    a = x[:, 1] - x[:, 0]
    b = x[:, 2] - x[:, 0]
    r = z - x[:, 0]
    det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    l1 = (r[:, 0] * b[:, 1] - r[:, 1] * b[:, 0]) / det
    l2 = (a[:, 0] * r[:, 1] - a[:, 1] * r[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def locate_point(mesh: Mesh, z, tol: float | None = None) -> PointLocation:
    """Classify ``z`` as a mesh vertex, a point on an edge, or an element interior.

    A barycentric coordinate counts as zero when the distance from ``z`` to
    the corresponding side is at most ``tol``; by default ``tol`` is
    ``1e-12 * h_K`` for each element.
    """
    lam = barycentric(mesh, z)
    # distance to side i = lam_i * height_i, height_i = 2|K| / |side i|
    heights = 2.0 * mesh.areas[:, None] / mesh.edge_lengths[mesh.element_edges]
    dist = lam * heights
    tols = 1e-12 * mesh.diameters if tol is None else np.full(mesh.n_elements, float(tol))
    inside = np.all(dist >= -tols[:, None], axis=1)
    elems = np.flatnonzero(inside)
    if len(elems) == 0:
        raise MeshError(f"point {tuple(np.asarray(z).tolist())} lies outside the mesh")

    k = elems[0]
    zero = np.abs(dist[k]) <= tols[k]
    nzero = int(zero.sum())
    if nzero >= 2:
        v = int(mesh.triangles[k][np.flatnonzero(~zero)[0]])
        return PointLocation("vertex", v, tuple(int(e) for e in mesh.vertex_elements(v)))
    if nzero == 1:
        e = int(mesh.element_edges[k][np.flatnonzero(zero)[0]])
        pair = mesh.edge_elements[e]
        return PointLocation("edge", e, tuple(int(t) for t in pair if t >= 0))
    return PointLocation("interior", int(k), (int(k),))


# --------------------------------------------------------------------- patches

def patches(mesh: Mesh, k: int):
    """Return ``(N_K, N_K_star)``: side neighbours and vertex neighbours of ``k``.

    Both sets include ``k`` itself.
    """
    side = {int(k)}
    for e in mesh.element_edges[k]:
        side.update(int(t) for t in mesh.edge_elements[e] if t >= 0)
    star = set()
    for v in mesh.triangles[k]:
        star.update(int(t) for t in mesh.vertex_elements(v))
    return side, star


def edge_patch(mesh: Mesh, e: int) -> tuple:
    """Elements incident to edge ``e`` (one on the boundary, two inside)."""
    return tuple(int(t) for t in mesh.edge_elements[e] if t >= 0)


# --------------------------------------------------------------------- refinement

def longest_edge_bisect(mesh: Mesh, marked, max_depth: int = 10_000) -> Mesh:
    """Refine ``mesh`` by recursive longest-edge bisection.

    Every marked element is bisected through its longest edge.  Before an
    element is split, the neighbour across that edge is refined until the
    edge is also its longest (the longest-edge propagation path), so the
    result is conforming without any closure pass.

    Returns a new mesh whose ``parent`` maps each element to its ancestor in
    ``mesh``.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise MeshError("marked element id out of range")
    if marked.size == 0:
        return Mesh(mesh.vertices, mesh.triangles, parent=np.arange(mesh.n_elements))

    verts = [tuple(v) for v in mesh.vertices.tolist()]
    tris = [tuple(t) for t in mesh.triangles.tolist()]
    ancestor = list(range(len(tris)))
    alive = [True] * len(tris)
    edge_map: dict[tuple, list] = {}
    for k, t in enumerate(tris):
        for e in _local_edges(t):
            edge_map.setdefault(e, []).append(k)
    midpoints: dict[tuple, int] = {}

    def length2(e):
        (x0, y0), (x1, y1) = verts[e[0]], verts[e[1]]
        return (x1 - x0) ** 2 + (y1 - y0) ** 2

    def longest(k):
        best = None
        for e in _local_edges(tris[k]):
            key = (-length2(e), e)
            if best is None or key < best[0]:
                best = (key, e)
        return best[1]

    def neighbour(k, e):
        for t in edge_map[e]:
            if t != k:
                return t
        return None

    def bisect(k, e):
        a, b, c = _orient_edge(tris[k], e)
        m = midpoints.get(e)
        if m is None:
            (x0, y0), (x1, y1) = verts[a], verts[b]
            verts.append((0.5 * (x0 + x1), 0.5 * (y0 + y1)))
            m = len(verts) - 1
            midpoints[e] = m
        alive[k] = False
        for edge in _local_edges(tris[k]):
            edge_map[edge].remove(k)
        for child in ((a, m, c), (m, b, c)):
            tris.append(child)
            alive.append(True)
            ancestor.append(ancestor[k])
            for edge in _local_edges(child):
                edge_map.setdefault(edge, []).append(len(tris) - 1)

    for start in marked.tolist():
        stack = [start]
        while stack:
            if len(stack) > max_depth:
                raise MeshError("bisection closure exceeded depth cap")
            k = stack[-1]
            if not alive[k]:
                stack.pop()
                continue
            e = longest(k)
            n = neighbour(k, e)
            if n is None:
                bisect(k, e)
                stack.pop()
            elif longest(n) == e:
                bisect(k, e)
                bisect(n, e)
                stack.pop()
            else:
                stack.append(n)

    keep = [k for k in range(len(tris)) if alive[k]]
    new_tris = np.array([tris[k] for k in keep], dtype=np.int64)
    parent = np.array([ancestor[k] for k in keep], dtype=np.int64)
    return Mesh(np.array(verts), new_tris, parent=parent)


def _local_edges(t):
    a, b, c = t
    return (min(b, c), max(b, c)), (min(c, a), max(c, a)), (min(a, b), max(a, b))


def _orient_edge(t, e):
    """Rotate ``t`` so that ``e`` is its first side ``(a, b)``, keeping orientation."""
    a, b, c = t
    for rot in ((a, b, c), (b, c, a), (c, a, b)):
        if {rot[0], rot[1]} == set(e):
            return rot
    raise MeshError(f"edge {e} is not a side of triangle {t}")


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = longest_edge_bisect(mesh, np.arange(mesh.n_elements))
    return mesh


# --------------------------------------------------------------------- initial meshes

def two_triangle_square() -> Mesh:
    """Unit square split by its main diagonal."""
    return Mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


def crisscross_square(n: int = 2, origin=(0.0, 0.0), size: float = 1.0) -> Mesh:
    """Square split into ``n x n`` cells, each cut by both diagonals.

    ``n = 2`` gives the 13-vertex, 16-triangle initial mesh used for the
    unit-square experiments.
    """
    h = size / n
    x0, y0 = origin
    verts = [(x0 + i * h, y0 + j * h) for j in range(n + 1) for i in range(n + 1)]
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            verts.append((x0 + (i + 0.5) * h, y0 + (j + 0.5) * h))
            c = len(verts) - 1
            tris += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    return Mesh(np.array(verts), np.array(tris))


def lshape_mesh(n: int = 2) -> Mesh:
    """L-shaped domain (-1,1)^2 minus [0,1)x(-1,0], cells cut by one diagonal.

    Each unit quadrant is split into ``n x n`` squares; every square is cut
    along the diagonal through its lower-left corner.
    """
    h = 1.0 / n
    m = 2 * n
    index: dict[tuple, int] = {}
    verts: list[tuple] = []

    def vid(i, j):
        if (i, j) not in index:
            index[(i, j)] = len(verts)
            verts.append((-1.0 + i * h, -1.0 + j * h))
        return index[(i, j)]

    tris = []
    for j in range(m):
        for i in range(m):
            if i >= n and j < n:
                continue
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris += [(a, b, c), (a, c, d)]
    return Mesh(np.array(verts), np.array(tris))


# --------------------------------------------------------------------- text format

def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text format: ``nv nt``, then vertices, then triangles."""
    lines = [f"{mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    tokens = Path(path).read_text().split()
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        coords = np.array(tokens[2:2 + 2 * nv], dtype=float).reshape(nv, 2)
        tris = np.array(tokens[2 + 2 * nv:2 + 2 * nv + 3 * nt], dtype=np.int64).reshape(nt, 3)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    return Mesh(coords, tris)
