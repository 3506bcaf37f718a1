"""Interval meshes, structured triangulations and the Clough-Tocher split."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh in 1D (intervals) or 2D (counter-clockwise triangles).

    ``boundary_facets`` holds ``(cell, local_facet)`` pairs and
    ``boundary_normals`` the matching outward unit normals.  In 2D local
    facet ``i`` is the edge from vertex ``i`` to vertex ``i + 1``; in 1D
    local facet 0 is the left end point and 1 the right one.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    boundary_normals: np.ndarray
    _extra: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def cell_coords(self) -> np.ndarray:
        """(n_cells, dim + 1, dim) vertex coordinates per cell."""
        return self.vertices[self.cells]

    @cached_property
    def measures(self) -> np.ndarray:
        c = self.cell_coords
        if self.dim == 1:
            return c[:, 1, 0] - c[:, 0, 0]
        return 0.5 * _cross2(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        if self.dim == 1:
            return np.abs(self.measures)
        c = self.cell_coords
        lengths = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=2)
        return lengths.max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def edges(self) -> np.ndarray:
        """(n_edges, 2) sorted vertex pairs (2D only)."""
        return self._edge_data[0]

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """(n_cells, 3) global edge index of local edge ``i`` = (v_i, v_{i+1})."""
        return self._edge_data[1]

    @cached_property
    def edge_cells(self) -> np.ndarray:
        """(n_edges, 2) adjacent cells, lower index first; -1 marks a boundary edge."""
        return self._edge_data[2]

    @cached_property
    def _edge_data(self):
        if self.dim != 2:
            raise MeshError("edges are only defined for 2D meshes")
        local = np.stack([self.cells, np.roll(self.cells, -1, axis=1)], axis=2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        if counts.max() > 2:
            raise MeshError("non-manifold mesh: an edge is shared by more than two cells")
        cell_edges = inverse.reshape(-1, 3)
        edge_cells = np.full((len(edges), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(self.n_cells), 3)
        for e, c in zip(inverse, owner):
            if edge_cells[e, 0] < 0:
                edge_cells[e, 0] = c
            else:
                edge_cells[e, 1] = c
        # cells are visited in increasing order, so column 0 is the lower index
        return edges, cell_edges, edge_cells

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normal per edge: outward on the boundary, otherwise pointing
        from the lower-index adjacent cell into the higher-index one."""
        v = self.vertices
        a, b = v[self.edges[:, 0]], v[self.edges[:, 1]]
        t = b - a
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1)[:, None]
        centroid = self.cell_coords.mean(axis=1)[self.edge_cells[:, 0]]
        midpoint = 0.5 * (a + b)
        # orient away from the first (lower / only) adjacent cell
        flip = np.einsum("ij,ij->i", n, midpoint - centroid) < 0
        n[flip] *= -1
        return n

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    def validate(self) -> None:
        """Raise MeshError unless every invariant of the mesh holds."""
        if self.dim not in (1, 2):
            raise MeshError(f"unsupported dimension {self.dim}")
        if np.any(self.measures <= 0):
            bad = int(np.flatnonzero(self.measures <= 0)[0])
            what = "non-positive length" if self.dim == 1 else "degenerate or clockwise"
            raise MeshError(f"cell {bad} is {what}")
        norms = np.linalg.norm(self.boundary_normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise MeshError("boundary normals are not unit length")
        if self.dim == 2:
            _ = self._edge_data
            # a vertex in the interior of another cell's edge would be a hanging node
            on_boundary = np.zeros(self.n_vertices, dtype=bool)
            on_boundary[self.edges[self.boundary_edges].ravel()] = True
            v = self.vertices
            for e in self.boundary_edges:
                a, b = v[self.edges[e]]
                t = b - a
                rel = v - a
                s = rel @ t / (t @ t)
                dist = np.abs(_cross2(t[None, :], rel)) / np.linalg.norm(t)
                inside = (s > 1e-12) & (s < 1 - 1e-12) & (dist < 1e-12 * np.linalg.norm(t))
                if np.any(inside):
                    raise MeshError(f"hanging vertex on boundary edge {e}")
        else:
            x = np.sort(self.vertices[:, 0])
            if np.any(np.diff(x) <= 0):
                raise MeshError("duplicate vertices")
            if not np.isclose(self.measures.sum(), x[-1] - x[0], rtol=1e-12):
                raise MeshError("cells overlap or leave gaps")


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def build_interval_mesh(a: float, b: float, n: int) -> Mesh:
    """Uniform partition of [a, b] into ``n`` cells."""
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise MeshError(f"need a < b, got a={a}, b={b}")
    if int(n) != n or n < 1:
        raise MeshError(f"need n >= 1, got {n}")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    x[0], x[-1] = a, b
    cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    mesh = Mesh(
        dim=1,
        vertices=x[:, None],
        cells=cells,
        boundary_facets=np.array([[0, 0], [n - 1, 1]]),
        boundary_normals=np.array([[-1.0], [1.0]]),
    )
    mesh.validate()
    return mesh


def build_structured_triangulation(lx: float, ly: float, nx: int, ny: int) -> Mesh:
    """Split [0, lx] x [0, ly] into nx*ny squares, each cut along the
    diagonal from (i, j) to (i + 1, j + 1)."""
    if not (lx > 0 and ly > 0):
        raise MeshError(f"extents must be positive, got lx={lx}, ly={ly}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"need nx, ny >= 1, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = np.array(cells, dtype=np.int64)

    # local edges: lower triangle (v00,v10,v11): edge 0 bottom, edge 1 right
    # upper triangle (v00,v11,v01): edge 1 top, edge 2 left
    facets, normals = [], []
    for j in range(ny):
        for i in range(nx):
            lower, upper = 2 * (j * nx + i), 2 * (j * nx + i) + 1
            if j == 0:
                facets.append((lower, 0)); normals.append((0.0, -1.0))
            if i == nx - 1:
                facets.append((lower, 1)); normals.append((1.0, 0.0))
            if j == ny - 1:
                facets.append((upper, 1)); normals.append((0.0, 1.0))
            if i == 0:
                facets.append((upper, 2)); normals.append((-1.0, 0.0))
    mesh = Mesh(
        dim=2,
        vertices=vertices,
        cells=cells,
        boundary_facets=np.array(facets, dtype=np.int64),
        boundary_normals=np.array(normals),
    )
    mesh.validate()
    return mesh


def triangle_mesh(vertices, cells) -> Mesh:
    """Build a 2D mesh from raw arrays, deriving boundary facets and normals."""
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    probe = Mesh(2, vertices, cells, np.zeros((0, 2), np.int64), np.zeros((0, 2)))
    if np.any(probe.measures <= 0):
        bad = int(np.flatnonzero(probe.measures <= 0)[0])
        raise MeshError(f"cell {bad} is degenerate or clockwise")
    facets, normals = [], []
    for e in probe.boundary_edges:
        c = probe.edge_cells[e, 0]
        local = int(np.flatnonzero(probe.cell_edges[c] == e)[0])
        facets.append((c, local))
        normals.append(probe.edge_normals[e])
    mesh = Mesh(2, vertices, cells, np.array(facets, dtype=np.int64).reshape(-1, 2),
                np.array(normals).reshape(-1, 2))
    mesh.validate()
    return mesh


@dataclass(frozen=True)
class CTSplit:
    parent_cell: int
    barycenter: np.ndarray
    subtriangles: np.ndarray   # (3, 3, 2): parent edge i followed by the barycenter
    internal_edges: np.ndarray  # (3, 2, 2): barycenter -> parent vertex i


def split_coords(coords: np.ndarray):
    """Clough-Tocher split of triangles given as (..., 3, 2) coordinates.

    Returns the barycenters (..., 2) and subtriangles (..., 3, 3, 2), where
    subtriangle ``i`` is (v_i, v_{i+1}, barycenter).
    """
    c = coords.mean(axis=-2)
    nxt = np.roll(coords, -1, axis=-2)
    bc = np.broadcast_to(c[..., None, :], coords.shape)
    sub = np.stack([coords, nxt, bc], axis=-2)
    return c, sub


def clough_tocher_split(mesh: Mesh, cell: int) -> CTSplit:
    if mesh.dim != 2:
        raise MeshError("Clough-Tocher split needs a 2D mesh")
    if not 0 <= cell < mesh.n_cells:
        raise MeshError(f"cell index {cell} out of range [0, {mesh.n_cells})")
    coords = mesh.cell_coords[cell]
    area = 0.5 * _cross2(coords[1] - coords[0], coords[2] - coords[0])
    scale = np.max(np.linalg.norm(coords - np.roll(coords, -1, axis=0), axis=1)) ** 2
    if not area > 1e-14 * scale:
        raise MeshError(f"cell {cell} is degenerate (area {area:g})")
    c, sub = split_coords(coords)
    internal = np.stack([np.broadcast_to(c, (3, 2)), coords], axis=1)
    return CTSplit(cell, c, sub, internal)
