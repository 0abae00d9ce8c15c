"""Assembly of bilinear and linear forms.

Every form is a pointwise contraction of two quantity arrays (see
:mod:`.basis`) weighted by the quadrature weights.  Named form kinds cover
the operators of the diffusion and elasticity least-squares systems; the
generic :func:`bilinear` and :func:`linear` kernels are public so that
composite residual operators can reuse them.
"""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp

from .basis import BoundaryQuadrature, CellQuadrature, boundary_quadrature, cell_quadrature
from .space import FeFunction, FunctionSpace


def default_degree(space, *others) -> int:
    """Quadrature degree 2 m + 2 for the highest polynomial degree involved."""
    m = 0
    for s in (space,) + others:
        m = max(m, s.degree if s.family == "CG" else s.degree + 1)
    return 2 * m + 2


def fe_values(fun: FeFunction, quad, kind="value") -> np.ndarray:
    """FE function quantity at quadrature points, shape (n, nq, K)."""
    Q = quad.quantity(fun.space, kind)
    return np.einsum("cqbk,cb->cqk", Q, fun.coefficients[quad.dofs(fun.space)])


def field_values(f, quad, K=None) -> np.ndarray:
    """Evaluate a coefficient or data field at quadrature points.

    ``f`` may be None (one), a number, a constant vector, an array already
    shaped (n, nq[, K]), an :class:`FeFunction` on the quadrature mesh, or a
    callable ``f(x)`` taking points (..., 2).
    """
    n, nq = quad.weights.shape
    if f is None:
        out = np.ones((n, nq))
    elif isinstance(f, numbers.Number):
        out = np.full((n, nq), float(f))
    elif isinstance(f, FeFunction):
        if f.space.mesh is not quad.mesh:
            raise ValueError("FE data must live on the quadrature mesh")
        out = fe_values(f, quad)
    elif callable(f):
        out = np.asarray(f(quad.points), dtype=float)
        if out.ndim == 0:
            out = np.full((n, nq), float(out))
    else:
        out = np.asarray(f, dtype=float)
        if out.ndim == 1:
            out = np.broadcast_to(out, (n, nq, out.size))
    if K is not None:
        if out.ndim == 2:
            out = out[..., None]
        if out.shape[-1] != K:
            raise ValueError(f"data field has {out.shape[-1]} components, form needs {K}")
        out = np.broadcast_to(out, (n, nq, K))
    return out


def _scatter(local, rows, cols, shape):
    n, bt, br = local.shape
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    A = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def local_bilinear(Qt, Qr, weights) -> np.ndarray:
    """Cell matrices ``sum_q w Qt Qr^T`` of shape (n, bt, br)."""
    n, nq, bt, K = Qt.shape
    br = Qr.shape[2]
    Lt = (Qt * weights[:, :, None, None]).transpose(0, 2, 1, 3).reshape(n, bt, nq * K)
    Lr = Qr.transpose(0, 1, 3, 2).reshape(n, nq * K, br)
    return Lt @ Lr


def bilinear(Qt, dofs_t, Qr, dofs_r, weights, shape) -> sp.csr_matrix:
    return _scatter(local_bilinear(Qt, Qr, weights), dofs_t, dofs_r, shape)


def linear(Qt, dofs_t, data, weights, n) -> np.ndarray:
    local = np.einsum("cq,cqbk,cqk->cb", weights, Qt, data)
    return np.bincount(dofs_t.ravel(), weights=local.ravel(), minlength=n)


def _isotropic(coefficient, quad, s):
    """Pointwise map tau -> C^s tau on flattened 2x2 tensors."""
    from ..fields import stiffness_pow

    if coefficient is None:
        raise ValueError("stiffness-weighted forms need a (mu, lam) coefficient")
    mu, lam = coefficient if isinstance(coefficient, tuple) else (coefficient.mu, coefficient.lam)
    mu = field_values(mu, quad)
    lam = field_values(lam, quad)
    return lambda Q: stiffness_pow(mu[:, :, None], lam[:, :, None], s, Q)


_MATRIX_FORMS = {
    # kind: (test family, test quantity, trial family, trial quantity)
    "mass": ("CG", "value", "CG", "value"),
    "stiffness": ("CG", "grad", "CG", "grad"),
    "weighted_grad_mass": ("CG", "grad", "CG", "grad"),
    "rt_mass": ("RT", "value", "RT", "value"),
    "rt_divdiv": ("RT", "div", "RT", "div"),
    "mixed": ("RT", "value", "CG", "grad"),
    "mixed_transpose": ("CG", "grad", "RT", "value"),
    "strain_energy": ("CG", "strain", "CG", "strain"),
    "stress_mass": ("RT", "value", "RT", "value"),
    "boundary_mass": ("CG", "value", "CG", "value"),
}


def assemble_matrix(test_space: FunctionSpace, trial_space: FunctionSpace, form_kind: str,
                    coefficient=None, quad=None, tags=None) -> sp.csr_matrix:
    """Assemble a named bilinear form.

    ``coefficient`` is a scalar weight field for mass, stiffness, rt_mass and
    mixed, the field ``p`` for weighted_grad_mass (weight ``p**2``), and a
    ``(mu, lam)`` pair for the stiffness-weighted strain_energy
    ``(C eps(u), eps(v))`` and stress_mass ``(C^{-1} sigma, tau)``.
    """
    if form_kind not in _MATRIX_FORMS:
        raise ValueError(f"unknown form kind {form_kind!r}")
    if test_space.mesh is not trial_space.mesh:
        raise ValueError("test and trial spaces live on different meshes")
    ft, qt, fr, qr = _MATRIX_FORMS[form_kind]
    if test_space.family != ft or trial_space.family != fr:
        raise ValueError(
            f"{form_kind} expects {ft} x {fr} spaces, got {test_space.describe()} x {trial_space.describe()}"
        )
    if form_kind == "boundary_mass":
        quad = boundary_quadrature(test_space.mesh, tags) if not isinstance(quad, BoundaryQuadrature) else quad
    elif quad is None:
        quad = cell_quadrature(test_space.mesh, default_degree(test_space, trial_space))
    Qt = quad.quantity(test_space, qt)
    Qr = quad.quantity(trial_space, qr)
    if Qt.shape[-1] != Qr.shape[-1]:
        raise ValueError(f"{form_kind}: value shapes of {test_space.describe()} and {trial_space.describe()} differ")
    w = quad.weights
    if form_kind in ("strain_energy", "stress_mass"):
        Qr = _isotropic(coefficient, quad, 1.0 if form_kind == "strain_energy" else -1.0)(Qr)
    elif coefficient is not None:
        c = field_values(coefficient, quad)
        w = w * (c * c if form_kind == "weighted_grad_mass" else c)
    return bilinear(Qt, quad.dofs(test_space), Qr, quad.dofs(trial_space), w,
                    (test_space.n_dofs, trial_space.n_dofs))


_VECTOR_FORMS = {
    "domain_load": ("CG", "value"),
    "weighted_grad_load": ("CG", "grad"),
    "strain_load": ("CG", "strain"),
    "rt_load": ("RT", "value"),
    "div_load": ("RT", "div"),
    "boundary_load": ("CG", "value"),
}


def assemble_vector(test_space: FunctionSpace, form_kind: str, data, coefficient=None,
                    quad=None, tags=None) -> np.ndarray:
    """Assemble a named linear form ``(data, Q v)``.

    weighted_grad_load is ``(F, p grad v)`` with ``coefficient = p``;
    boundary_load integrates ``<g, v>`` over the facets carrying ``tags``.
    Vector-valued data pair with vector spaces (elasticity analogues).
    """
    if form_kind not in _VECTOR_FORMS:
        raise ValueError(f"unknown form kind {form_kind!r}")
    fam, qty = _VECTOR_FORMS[form_kind]
    if test_space.family != fam:
        raise ValueError(f"{form_kind} expects a {fam} space, got {test_space.describe()}")
    if form_kind == "boundary_load":
        quad = boundary_quadrature(test_space.mesh, tags) if not isinstance(quad, BoundaryQuadrature) else quad
    elif quad is None:
        quad = cell_quadrature(test_space.mesh, default_degree(test_space))
    Qt = quad.quantity(test_space, qty)
    d = field_values(data, quad, K=Qt.shape[-1])
    if coefficient is not None:
        d = d * field_values(coefficient, quad)[..., None]
    return linear(Qt, quad.dofs(test_space), d, quad.weights, test_space.n_dofs)


class SparsityPattern:
    """Precomputed CSR structure for repeated assembly with fixed DOF maps.

    ``row_map``/``col_map`` renumber global DOFs (e.g. onto the free set);
    entries mapped to -1 are dropped.  :meth:`assemble` then reduces cell
    matrices with a single ``bincount``.
    """

    def __init__(self, rows, cols, row_map, col_map, shape):
        r = row_map[rows][:, :, None]
        c = col_map[cols][:, None, :]
        r, c = np.broadcast_arrays(r, c)
        valid = ((r >= 0) & (c >= 0)).ravel()
        key = r.ravel()[valid] * shape[1] + c.ravel()[valid]
        uniq, inv = np.unique(key, return_inverse=True)
        self.shape = tuple(shape)
        self.valid = valid
        self.inverse = inv.ravel()
        self.indices = (uniq % shape[1]).astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(uniq // shape[1], minlength=shape[0]))])
        self.nnz = len(uniq)

    def assemble(self, local) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=local.reshape(-1)[self.valid], minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)


def apply_essential_bc(A, b, constrained, values=None):
    """Symmetric elimination of essential DOFs.

    Constrained rows and columns become identity, the right-hand side is
    corrected by the known values (zero by default) and set to them on the
    constrained DOFs.
    """
    A = sp.csr_matrix(A)
    b = np.array(b, dtype=float)
    cons = np.asarray(constrained, dtype=np.int64)
    if cons.size == 0:
        return A.copy(), b
    g = np.zeros(A.shape[0])
    if values is not None:
        g[cons] = values
        b -= A @ g
    keep = np.ones(A.shape[0])
    keep[cons] = 0.0
    D = sp.diags(keep)
    A = (D @ A @ D).tocsr()
    A = A + sp.diags(1.0 - keep)
    A = A.tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    b[cons] = g[cons]
    return A, b


def restrict(A, rows, cols=None):
    """Submatrix on index sets (free-DOF systems)."""
    cols = rows if cols is None else cols
    return sp.csr_matrix(A)[rows][:, cols].tocsr()


__all__ = [
    "CellQuadrature", "BoundaryQuadrature", "cell_quadrature", "boundary_quadrature",
    "default_degree", "fe_values", "field_values", "bilinear", "linear", "local_bilinear", "SparsityPattern",
    "assemble_matrix", "assemble_vector", "apply_essential_bc", "restrict",
]
