"""Canonical interpolation and transfer between nested meshes."""

from __future__ import annotations

import numpy as np

from .elements import LOCAL_EDGES, _legendre01
from .quadrature import gauss_line, triangle_rule
from .space import FeFunction, FunctionSpace


def _sample(field, points, target_cells, target_mesh):
    """Evaluate ``field`` at points (nc, nq, 2) attached to target cells (nc,)."""
    nc, nq = points.shape[:2]
    flat = points.reshape(-1, 2)
    if isinstance(field, FeFunction):
        # evaluate inside the source cell containing the target cell centroid,
        # so that piecewise quantities are taken from the right side
        cent = target_mesh.vertices[target_mesh.cells[target_cells]].mean(axis=1)
        parent = field.space.mesh.locate(cent)
        vals = field.evaluate(flat, np.repeat(parent, nq))
    else:
        vals = np.asarray(field(flat), dtype=float)
    return vals.reshape(nc, nq, -1)


def interpolate(space: FunctionSpace, field) -> FeFunction:
    """Canonical interpolant of ``field`` (callable on (n, 2) points, or FeFunction).

    CG: nodal values.  RT: edge normal-flux moments against Legendre
    polynomials on the globally oriented edge and, for k = 1, interior
    moments of the pulled-back field.  Tensor fields return (n, 2, 2) or
    (n, 4) arrays whose rows are interpolated separately.
    """
    mesh = space.mesh
    ncomp = space.n_components
    out = np.zeros(space.n_dofs)
    nd = space.n_component_dofs

    if space.family == "CG":
        nodes = space.dof_coordinates()
        if isinstance(field, FeFunction):
            vals = field.evaluate(nodes)
        else:
            vals = np.asarray(field(nodes), dtype=float)
        vals = vals.reshape(len(nodes), -1)
        if vals.shape[1] != ncomp:
            raise ValueError(f"field has {vals.shape[1]} components, space has {ncomp}")
        for c in range(ncomp):
            out[c * nd:(c + 1) * nd] = vals[:, c]
        return FeFunction(space, out)

    k = space.degree
    cells = np.arange(mesh.n_cells)
    P = mesh.vertices[mesh.cells]  # (nc, 3, 2)
    t, w = gauss_line(3)
    for e, (a, b) in enumerate(LOCAL_EDGES):
        pa, pb = P[:, a], P[:, b]
        tang = pb - pa
        normal = np.column_stack([tang[:, 1], -tang[:, 0]])
        pts = pa[:, None, :] + t[None, :, None] * tang[:, None, :]
        vals = _sample(field, pts, cells, mesh).reshape(mesh.n_cells, len(t), ncomp, 2)
        flux = np.einsum("cqrj,cj->cqr", vals, normal)
        for j in range(k + 1):
            col = e * (k + 1) + j
            mom = np.einsum("q,cqr->cr", w * _legendre01(j, t), flux)
            mom *= space.cell_signs[:, col][:, None]
            for c in range(ncomp):
                out[c * nd + space.cell_dofs[:, col]] = mom[:, c]
    if k == 1:
        rule = triangle_rule(6)
        origin, J, det = mesh.jacobians()
        pts = origin[:, None, :] + np.einsum("cij,qj->cqi", J, rule.ref_points)
        vals = _sample(field, pts, cells, mesh).reshape(mesh.n_cells, len(rule), ncomp, 2)
        inv = np.linalg.inv(J)
        # pulled-back field det(J) J^{-1} f
        ref = np.einsum("cij,cqrj->cqri", inv, vals) * det[:, None, None, None]
        mom = np.einsum("q,cqri->cri", rule.weights, ref)
        for i in range(2):
            col = 3 * (k + 1) + i
            for c in range(ncomp):
                out[c * nd + space.cell_dofs[:, col]] = mom[:, c, i]
    return FeFunction(space, out)


def prolongate(fun: FeFunction, fine_space: FunctionSpace) -> FeFunction:
    """Transfer a coarse FE function to a space on a refined (nested) mesh.

    The canonical interpolant reproduces the coarse function exactly when
    the fine space contains it, which holds for nested meshes.
    """
    return interpolate(fine_space, fun)
