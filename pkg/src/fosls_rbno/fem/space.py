"""Function spaces, DOF maps and finite-element functions.

Multi-component spaces (vector CG, tensor RT) store their components in
consecutive blocks: global DOF ``c * n_component_dofs + i`` is DOF ``i`` of
component ``c``.  For tensor RT spaces component ``c`` is the ``c``-th row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh import Mesh, parse_tags
from .elements import LOCAL_EDGES, ReferenceElement, reference_element

_SHAPES = {"CG": {"scalar": 1, "vector": 2}, "RT": {"vector": 1, "tensor": 2}}


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Conforming space on a mesh with an essential-BC constrained set.

    Attributes
    ----------
    cell_dofs : (nc, nb) per-component global DOFs of each cell
    cell_signs : (nc, nb) orientation factors (+1/-1, all ones for CG)
    n_component_dofs : DOFs per component
    constrained : sorted global DOF indices fixed to zero
    """

    mesh: Mesh
    family: str
    degree: int
    value_shape: str
    element: ReferenceElement
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    n_component_dofs: int
    constrained: np.ndarray
    essential_tags: frozenset
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_components(self) -> int:
        return _SHAPES[self.family][self.value_shape]

    @property
    def n_dofs(self) -> int:
        return self.n_components * self.n_component_dofs

    @property
    def n_local(self) -> int:
        return self.n_components * self.element.n_basis

    @property
    def free(self) -> np.ndarray:
        if "free" not in self._cache:
            mask = np.ones(self.n_dofs, dtype=bool)
            mask[self.constrained] = False
            self._cache["free"] = np.flatnonzero(mask)
        return self._cache["free"]

    @property
    def n_free(self) -> int:
        return self.n_dofs - len(self.constrained)

    def local_to_global(self) -> np.ndarray:
        """(nc, n_local) global DOFs including component offsets."""
        blocks = [self.cell_dofs + c * self.n_component_dofs for c in range(self.n_components)]
        return np.concatenate(blocks, axis=1)

    def local_signs(self) -> np.ndarray:
        return np.tile(self.cell_signs, (1, self.n_components))

    def dof_coordinates(self) -> np.ndarray:
        """Nodal coordinates of one component of a CG space."""
        if self.family != "CG":
            raise ValueError("dof coordinates are defined for CG spaces only")
        mesh = self.mesh
        if self.degree == 1:
            return np.asarray(mesh.vertices)
        mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        return np.vstack([mesh.vertices, mid])

    def describe(self) -> str:
        return f"{self.family}{self.degree}[{self.value_shape}]"


def build_space(mesh: Mesh, family: str, degree: int, value_shape=None, essential_bc=None) -> FunctionSpace:
    """Build CG_m (m = 1, 2) or RT_k (k = 0, 1) on ``mesh``.

    ``essential_bc`` lists boundary tags whose DOFs are constrained to zero:
    nodal values for CG, normal-flux moments for RT.
    """
    family = str(family).upper()
    if family not in _SHAPES:
        raise ValueError(f"unknown element family {family!r}")
    if value_shape is None:
        value_shape = "scalar" if family == "CG" else "vector"
    if value_shape not in _SHAPES[family]:
        raise ValueError(f"{family} does not support value shape {value_shape!r}")
    element = reference_element(family, degree)
    tags = parse_tags(essential_bc)
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    bedges = mesh.boundary_edges(tags) if tags else np.zeros(0, dtype=np.int64)

    if family == "CG":
        if degree == 1:
            dofs = np.asarray(mesh.cells)
            ndof = nv
            cons = np.unique(mesh.edges[bedges])
        else:
            dofs = np.hstack([mesh.cells, nv + np.asarray(mesh.cell_edges)])
            ndof = nv + ne
            cons = np.union1d(np.unique(mesh.edges[bedges]), nv + bedges)
        signs = np.ones(dofs.shape)
    else:
        k = degree
        edge_dofs = [(k + 1) * mesh.cell_edges[:, e] + j for e in range(3) for j in range(k + 1)]
        edge_signs = [mesh.cell_edge_signs[:, e] ** element.sign_power[e * (k + 1) + j]
                      for e in range(3) for j in range(k + 1)]
        ndof = (k + 1) * ne
        if k == 1:
            interior = ndof + 2 * np.arange(nc)
            edge_dofs += [interior, interior + 1]
            edge_signs += [np.ones(nc), np.ones(nc)]
            ndof += 2 * nc
        dofs = np.column_stack(edge_dofs)
        signs = np.column_stack(edge_signs).astype(float)
        cons = np.sort(((k + 1) * bedges[:, None] + np.arange(k + 1)).ravel())

    ncomp = _SHAPES[family][value_shape]
    cons = np.concatenate([cons + c * ndof for c in range(ncomp)]).astype(np.int64)
    return FunctionSpace(
        mesh=mesh,
        family=family,
        degree=int(degree),
        value_shape=value_shape,
        element=element,
        cell_dofs=np.ascontiguousarray(dofs, dtype=np.int64),
        cell_signs=np.ascontiguousarray(signs),
        n_component_dofs=int(ndof),
        constrained=np.sort(cons),
        essential_tags=tags,
    )


@dataclass(eq=False)
class FeFunction:
    """Coefficient vector in a space; constrained entries are kept at zero
    by the routines that produce free-DOF solutions."""

    space: FunctionSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient vector has shape {self.coefficients.shape}, space needs ({self.space.n_dofs},)"
            )

    def evaluate(self, points, cells=None, quantity="value") -> np.ndarray:
        """Evaluate at physical points (n, 2).

        ``quantity`` is one of ``value``, ``grad``, ``div``, ``strain``; the
        result has shape (n, K) with ``K`` the flattened value size.
        """
        from .basis import quantity_at_points

        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if cells is None:
            cells = self.space.mesh.locate(pts)
        Q, ldofs = quantity_at_points(self.space, np.asarray(cells), pts, quantity)
        return np.einsum("nbk,nb->nk", Q, self.coefficients[ldofs])


def expand_free(space_or_n, free, values) -> np.ndarray:
    """Scatter free-DOF values into a full vector with zeros elsewhere."""
    n = space_or_n.n_dofs if isinstance(space_or_n, FunctionSpace) else int(space_or_n)
    out = np.zeros(n)
    out[free] = values
    return out


__all__ = ["FunctionSpace", "FeFunction", "build_space", "expand_free", "LOCAL_EDGES"]
