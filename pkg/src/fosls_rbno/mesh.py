"""Structured triangular meshes of axis-aligned rectangles.

Every grid square is split by its lower-left to upper-right diagonal.
Cells are stored counterclockwise; local edge ``k`` of a cell is the edge
opposite local vertex ``k`` and is traversed counterclockwise, i.e.
``(v1, v2)``, ``(v2, v0)``, ``(v0, v1)``.  Global edges are oriented from
the lower to the higher vertex index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

BOUNDARY_ATOL = 1e-12

LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Raised for invalid mesh input or an inconsistent boundary."""


class BoundaryTag(enum.IntEnum):
    LEFT = 0
    RIGHT = 1
    TOP = 2
    BOTTOM = 3

    @classmethod
    def parse(cls, value) -> "BoundaryTag":
        if isinstance(value, BoundaryTag):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


def parse_tags(tags) -> frozenset:
    if tags is None:
        return frozenset()
    if isinstance(tags, (str, BoundaryTag, int)):
        tags = [tags]
    return frozenset(BoundaryTag.parse(t) for t in tags)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangular mesh of a rectangle.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise
    edges : (ne, 2) int array, ``edges[:, 0] < edges[:, 1]``
    cell_edges : (nc, 3) int array of global edge indices per local edge
    cell_edge_signs : (nc, 3) array of +1/-1; +1 iff the counterclockwise
        traversal of the local edge runs from lower to higher vertex index
    boundary_facets : (nb, 2) int array of ``(edge index, BoundaryTag)``
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    bounds: tuple
    shape: tuple
    boundary_facets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        x0, y0, x1, y1 = self.bounds
        nx, ny = self.shape
        return max((x1 - x0) / nx, (y1 - y0) / ny)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    @property
    def diameter(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return float(np.hypot(x1 - x0, y1 - y0))

    def boundary_edges(self, tags=None) -> np.ndarray:
        """Edge indices on the boundary, optionally restricted to ``tags``."""
        if tags is None:
            return self.boundary_facets[:, 0].copy()
        wanted = [int(t) for t in parse_tags(tags)]
        keep = np.isin(self.boundary_facets[:, 1], wanted)
        return self.boundary_facets[keep, 0]

    def edge_tags(self) -> np.ndarray:
        """Per-edge tag, -1 for interior edges."""
        out = np.full(self.n_edges, -1, dtype=np.int64)
        out[self.boundary_facets[:, 0]] = self.boundary_facets[:, 1]
        return out

    def jacobians(self):
        """Affine maps of all cells from the reference triangle.

        Returns ``(origin, J, det)`` with ``J[c] = [v1 - v0, v2 - v0]`` as
        columns.
        """
        p = self.vertices[self.cells]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        return p[:, 0], J, det

    def cell_areas(self) -> np.ndarray:
        return 0.5 * self.jacobians()[2]

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def locate(self, points) -> np.ndarray:
        """Cell index containing each point (structured lookup)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        x0, y0, x1, y1 = self.bounds
        nx, ny = self.shape
        sx = (pts[:, 0] - x0) / (x1 - x0) * nx
        sy = (pts[:, 1] - y0) / (y1 - y0) * ny
        i = np.clip(np.floor(sx).astype(np.int64), 0, nx - 1)
        j = np.clip(np.floor(sy).astype(np.int64), 0, ny - 1)
        upper = (sy - j) > (sx - i)
        return 2 * (j * nx + i) + upper.astype(np.int64)

    def to_reference(self, cells, points) -> np.ndarray:
        """Reference coordinates of ``points`` inside the given ``cells``."""
        origin, J, det = self.jacobians()
        cells = np.asarray(cells)
        d = np.asarray(points, dtype=float) - origin[cells]
        Jc = J[cells]
        inv = np.empty_like(Jc)
        dc = det[cells]
        inv[..., 0, 0] = Jc[..., 1, 1] / dc
        inv[..., 1, 1] = Jc[..., 0, 0] / dc
        inv[..., 0, 1] = -Jc[..., 0, 1] / dc
        inv[..., 1, 0] = -Jc[..., 1, 0] / dc
        return np.einsum("...ij,...j->...i", inv, d)

    def stats(self) -> dict:
        return {
            "bounds": list(self.bounds),
            "shape": list(self.shape),
            "n_vertices": self.n_vertices,
            "n_cells": self.n_cells,
            "n_edges": self.n_edges,
            "n_boundary_edges": len(self.boundary_facets),
            "h": self.h,
        }


def build_rect_mesh(x0, y0, x1, y1, nx, ny, tag=True) -> Mesh:
    """Triangulate ``[x0, x1] x [y0, y1]`` with ``nx x ny`` squares split in two."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle ({x0}, {y0}, {x1}, {y1})")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    ll = j * (nx + 1) + i
    lr = ll + 1
    ul = ll + nx + 1
    ur = ul + 1
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([ll, lr, ur])
    cells[1::2] = np.column_stack([ll, ur, ul])

    local = cells[:, LOCAL_EDGES]  # (nc, 3, 2) counterclockwise traversal
    lo = local.min(axis=2)
    hi = local.max(axis=2)
    pairs = np.column_stack([lo.ravel(), hi.ravel()])
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(-1, 3)
    signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

    mesh = Mesh(
        vertices=_frozen(vertices),
        cells=_frozen(cells),
        edges=_frozen(edges.astype(np.int64)),
        cell_edges=_frozen(cell_edges.astype(np.int64)),
        cell_edge_signs=_frozen(signs.astype(np.int64)),
        bounds=(float(x0), float(y0), float(x1), float(y1)),
        shape=(nx, ny),
    )
    return tag_boundary(mesh) if tag else mesh


def tag_boundary(mesh: Mesh) -> Mesh:
    """Attach ``(edge, BoundaryTag)`` pairs for every boundary edge."""
    counts = np.bincount(mesh.cell_edges.ravel(), minlength=mesh.n_edges)
    bnd = np.flatnonzero(counts == 1)
    x0, y0, x1, y1 = mesh.bounds
    a = mesh.vertices[mesh.edges[bnd, 0]]
    b = mesh.vertices[mesh.edges[bnd, 1]]
    tags = np.full(len(bnd), -1, dtype=np.int64)
    for tag, axis, value in (
        (BoundaryTag.LEFT, 0, x0),
        (BoundaryTag.RIGHT, 0, x1),
        (BoundaryTag.BOTTOM, 1, y0),
        (BoundaryTag.TOP, 1, y1),
    ):
        on = (np.abs(a[:, axis] - value) <= BOUNDARY_ATOL) & (np.abs(b[:, axis] - value) <= BOUNDARY_ATOL)
        tags[on & (tags < 0)] = int(tag)
    if np.any(tags < 0):
        raise MeshError(f"{int(np.sum(tags < 0))} boundary edges lie on no rectangle side")
    facets = np.column_stack([bnd, tags]).astype(np.int64)
    return replace(mesh, boundary_facets=_frozen(facets))


@dataclass(frozen=True)
class CellGeometry:
    jacobian: np.ndarray
    det: float
    inv_transpose: np.ndarray
    area: float
    edge_lengths: np.ndarray
    normals: np.ndarray  # outward unit normals, one row per local edge


def cell_geometry(mesh: Mesh, cell: int) -> CellGeometry:
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell {cell} out of range [0, {mesh.n_cells})")
    p = mesh.vertices[mesh.cells[cell]]
    J = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = float(np.linalg.det(J))
    t = p[LOCAL_EDGES[:, 1]] - p[LOCAL_EDGES[:, 0]]
    lengths = np.hypot(t[:, 0], t[:, 1])
    # rotating a counterclockwise tangent clockwise gives the outward normal
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
    return CellGeometry(
        jacobian=J,
        det=det,
        inv_transpose=np.linalg.inv(J).T,
        area=0.5 * det,
        edge_lengths=lengths,
        normals=normals,
    )
