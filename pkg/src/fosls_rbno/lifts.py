"""Parameter-independent lifts of boundary data and flux-free sources.

``w`` extends the Dirichlet data harmonically with a natural condition on
the Neumann boundary, ``q`` solves ``(grad q, grad v) = <g, v>_{Gamma_N}``
with ``q = 0`` on the Dirichlet boundary, and ``z = grad q``.  Vector spaces
use the componentwise Laplacian ``(grad w, grad v) = sum_i (grad w_i, grad v_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import (
    FeFunction,
    FunctionSpace,
    assemble_matrix,
    assemble_vector,
    build_space,
    restrict,
)
from .linalg import solve_spd
from .mesh import Mesh


@dataclass(frozen=True, eq=False)
class LiftData:
    """Dirichlet lift ``w`` and Neumann lift ``q``; ``z`` is ``grad q``,
    evaluated at quadrature points on demand."""

    w: FeFunction
    q: FeFunction

    def z_at(self, quad) -> np.ndarray:
        from .fem import fe_values

        return fe_values(self.q, quad, "grad")


def _tol_solve(A, b, tol):
    if not np.any(b):
        return np.zeros_like(b)
    return solve_spd(A, b, tol=tol)


def dirichlet_lift(space: FunctionSpace, u0, tol=1e-12) -> FeFunction:
    """Discrete harmonic extension of ``u0`` from the constrained boundary DOFs.

    ``space`` is a CG space whose constrained set is the Dirichlet boundary;
    ``u0`` is a callable on points or None (zero data).
    """
    if space.family != "CG":
        raise ValueError("lifts live in CG spaces")
    if len(space.constrained) == 0:
        raise ValueError("the Dirichlet lift needs a nonempty Dirichlet boundary")
    full = np.zeros(space.n_dofs)
    if u0 is None:
        return FeFunction(space, full)
    nodes = space.dof_coordinates()
    vals = np.asarray(u0(nodes), dtype=float).reshape(len(nodes), -1)
    nd = space.n_component_dofs
    for c in range(space.n_components):
        full[c * nd:(c + 1) * nd] = vals[:, c]
    cons, free = space.constrained, space.free
    g = np.zeros(space.n_dofs)
    g[cons] = full[cons]
    K = assemble_matrix(space, space, "stiffness")
    rhs = -(restrict(K, free, cons) @ g[cons])
    out = g.copy()
    out[free] = _tol_solve(restrict(K, free), rhs, tol)
    return FeFunction(space, out)


def neumann_lift(space: FunctionSpace, g, neumann_tags, tol=1e-12) -> FeFunction:
    """Solve ``(grad q, grad v) = <g, v>_{Gamma_N}`` over the free DOFs of ``space``."""
    if space.family != "CG":
        raise ValueError("lifts live in CG spaces")
    out = np.zeros(space.n_dofs)
    if g is None or not neumann_tags:
        return FeFunction(space, out)
    if len(space.constrained) == 0:
        raise ValueError("the Neumann lift needs a nonempty Dirichlet boundary")
    free = space.free
    K = assemble_matrix(space, space, "stiffness")
    b = assemble_vector(space, "boundary_load", g, tags=neumann_tags)
    out[free] = _tol_solve(restrict(K, free), b[free], tol)
    return FeFunction(space, out)


def build_lifts(mesh: Mesh, degree: int, value_shape: str, dirichlet_tags, neumann_tags,
                u0=None, g=None, tol=1e-12) -> LiftData:
    """Both lifts in CG_degree with the Dirichlet tags constrained."""
    space = build_space(mesh, "CG", degree, value_shape, essential_bc=dirichlet_tags)
    return LiftData(w=dirichlet_lift(space, u0, tol), q=neumann_lift(space, g, neumann_tags, tol))


def flux_free_decomposition(load, space: FunctionSpace, tol=1e-12):
    """Split a load functional into ``(f1, f2)`` with ``f(v) = (f2, v) - (f1, grad v)``.

    Solves ``(grad r, grad v) + (r, v) = -f(v)`` over the free DOFs of
    ``space``.  ``load`` is either the assembled vector ``f(phi_i)`` or a
    callable density tested as ``(f, v)``.

    Returns
    -------
    r : FeFunction
        The Riesz lift; ``f1 = grad r`` (evaluate with ``quantity="grad"``)
        and ``f2 = -r``.
    """
    if callable(load):
        load = assemble_vector(space, "domain_load", load)
    load = np.asarray(load, dtype=float)
    free = space.free
    A = assemble_matrix(space, space, "stiffness") + assemble_matrix(space, space, "mass")
    r = np.zeros(space.n_dofs)
    r[free] = _tol_solve(restrict(A, free), -load[free], tol)
    return FeFunction(space, r)
