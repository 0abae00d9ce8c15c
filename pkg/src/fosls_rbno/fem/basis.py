"""Physical basis tabulation and quadrature contexts.

A *quantity* array has shape ``(..., n_local, K)``: for each local basis
function of a (possibly multi-component) space, the flattened value of the
requested derivative at a point.  Tensors are flattened row-major, so entry
``2 i + j`` is ``T_ij``.

============  ==========  =====================  ==================
space         quantity    K                      meaning
============  ==========  =====================  ==================
CG scalar     value/grad  1 / 2                  u, grad u
CG vector     value/grad  2 / 4                  u, (grad u)_ij = d_j u_i
CG vector     strain      4                      sym grad u
RT vector     value/div   2 / 1                  sigma, div sigma
RT tensor     value/div   4 / 2                  sigma rows, row divergences
============  ==========  =====================  ==================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh import Mesh, parse_tags
from .elements import LOCAL_EDGES, REF_VERTICES
from .quadrature import QuadratureRule, gauss_line, triangle_rule


def _inverse(J, det):
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    return inv


def physical_basis(space, cells, xh):
    """Tabulate one component's basis in physical coordinates.

    Parameters
    ----------
    cells : (n,) cell indices
    xh : (nq, 2) shared or (n, nq, 2) per-cell reference points

    Returns
    -------
    CG: values (n|1, nq, nb), grads (n, nq, nb, 2)
    RT: values (n, nq, nb, 2), divs (n, nq, nb)
    """
    cells = np.asarray(cells)
    xh = np.asarray(xh, dtype=float)
    shared = xh.ndim == 2
    lead = (1,) if shared else xh.shape[:1]
    nq = xh.shape[-2]
    v, d = space.element.tabulate(xh.reshape(-1, 2))
    v = v.reshape(lead + (nq,) + v.shape[1:])
    d = d.reshape(lead + (nq,) + d.shape[1:])
    _, J, det = space.mesh.jacobians()
    Jc, dc = J[cells], det[cells]
    if space.family == "CG":
        inv = _inverse(Jc, dc)
        # grad phi = J^{-T} grad_ref phi
        grads = np.einsum("cji,cqbj->cqbi", inv, np.broadcast_to(d, (len(cells),) + d.shape[1:]))
        return v, grads
    s = space.cell_signs[cells]
    vals = np.einsum("cij,cqbj->cqbi", Jc, np.broadcast_to(v, (len(cells),) + v.shape[1:]))
    vals *= (s / dc[:, None])[:, None, :, None]
    divs = d * (s / dc[:, None])[:, None, :]
    return vals, divs


def quantity(space, cells, xh, kind="value"):
    """Quantity array (n, nq, n_local, K) for the full multi-component space."""
    vals, ders = physical_basis(space, cells, xh)
    n = len(np.asarray(cells))
    nq = vals.shape[1]
    nb = space.element.n_basis
    nc = space.n_components
    if space.family == "CG":
        if kind == "value":
            base = np.broadcast_to(vals, (n, nq, nb))[..., None]
            return _componentwise(base, nc, 1)
        if kind == "grad":
            return _componentwise(ders, nc, 2)
        if kind == "strain":
            if nc != 2:
                raise ValueError("strain requires a vector CG space")
            G = _componentwise(ders, 2, 2)
            return 0.5 * (G + G[..., [0, 2, 1, 3]])
        raise ValueError(f"quantity {kind!r} not defined for CG spaces")
    if kind == "value":
        return _componentwise(vals, nc, 2)
    if kind == "div":
        return _componentwise(ders[..., None], nc, 1)
    raise ValueError(f"quantity {kind!r} not defined for RT spaces")


def _componentwise(base, ncomp, K):
    """Place a per-component quantity (…, nb, K) into block layout (…, ncomp*nb, ncomp*K)."""
    if ncomp == 1:
        return np.ascontiguousarray(base)
    shape = base.shape[:-2]
    nb = base.shape[-2]
    out = np.zeros(shape + (ncomp * nb, ncomp * K))
    for c in range(ncomp):
        out[..., c * nb:(c + 1) * nb, c * K:(c + 1) * K] = base
    return out


def quantity_at_points(space, cells, points, kind="value"):
    """Quantity at scattered physical points, one point per cell entry.

    Returns ``(Q, ldofs)`` with ``Q`` of shape (n, n_local, K) and the
    matching global DOFs (n, n_local).
    """
    cells = np.asarray(cells)
    xh = space.mesh.to_reference(cells, points)[:, None, :]
    Q = quantity(space, cells, xh, kind)[:, 0]
    return Q, space.local_to_global()[cells]


@dataclass(frozen=True, eq=False)
class CellQuadrature:
    """Quadrature on every cell of a mesh.

    ``points`` (nc, nq, 2) physical nodes, ``weights`` (nc, nq) include the
    Jacobian so that ``sum(weights * f)`` integrates ``f`` over the mesh.
    """

    mesh: Mesh
    rule: QuadratureRule
    points: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def cells(self):
        return np.arange(self.mesh.n_cells)

    @property
    def ref_points(self):
        return self.rule.ref_points

    def quantity(self, space, kind="value"):
        key = (space, kind)
        if key not in self._cache:
            self._cache[key] = quantity(space, self.cells, self.ref_points, kind)
        return self._cache[key]

    def dofs(self, space):
        return space.local_to_global()

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))


def cell_quadrature(mesh: Mesh, degree: int) -> CellQuadrature:
    rule = triangle_rule(degree)
    origin, J, det = mesh.jacobians()
    pts = origin[:, None, :] + np.einsum("cij,qj->cqi", J, rule.ref_points)
    w = rule.weights[None, :] * det[:, None]
    return CellQuadrature(mesh=mesh, rule=rule, points=pts, weights=w)


@dataclass(frozen=True, eq=False)
class BoundaryQuadrature:
    """Gauss quadrature on tagged boundary edges.

    ``cells`` (nE,) adjacent cells, ``ref_points`` (nE, nq, 2), ``points``
    (nE, nq, 2), ``weights`` (nE, nq) including edge length, ``normals``
    (nE, 2) outward unit normals, ``tags`` (nE,).
    """

    mesh: Mesh
    edges: np.ndarray
    cells: np.ndarray
    ref_points: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    tags: np.ndarray

    def quantity(self, space, kind="value"):
        return quantity(space, self.cells, self.ref_points, kind)

    def dofs(self, space):
        return space.local_to_global()[self.cells]

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))


def boundary_quadrature(mesh: Mesh, tags=None, n_points: int = 3) -> BoundaryQuadrature:
    """Edge quadrature on the boundary facets carrying ``tags`` (all if None)."""
    facets = np.asarray(mesh.boundary_facets)
    if tags is not None:
        keep = np.isin(facets[:, 1], [int(t) for t in parse_tags(tags)])
        facets = facets[keep]
    edges = facets[:, 0]
    # owning cell and local edge of each boundary edge
    flat = np.asarray(mesh.cell_edges).ravel()
    owner = np.full(mesh.n_edges, -1, dtype=np.int64)
    owner[flat] = np.arange(flat.size)
    loc = owner[edges]
    cells, le = loc // 3, loc % 3
    t, w = gauss_line(n_points)
    a = REF_VERTICES[LOCAL_EDGES[le, 0]]
    b = REF_VERTICES[LOCAL_EDGES[le, 1]]
    xh = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    origin, J, _ = mesh.jacobians()
    x = origin[cells][:, None, :] + np.einsum("cij,cqj->cqi", J[cells], xh)
    pa = mesh.vertices[mesh.cells[cells, LOCAL_EDGES[le, 0]]]
    pb = mesh.vertices[mesh.cells[cells, LOCAL_EDGES[le, 1]]]
    tang = pb - pa
    length = np.hypot(tang[:, 0], tang[:, 1])
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
    return BoundaryQuadrature(
        mesh=mesh,
        edges=edges,
        cells=cells,
        ref_points=xh,
        points=x,
        weights=w[None, :] * length[:, None],
        normals=normals,
        tags=facets[:, 1],
    )
