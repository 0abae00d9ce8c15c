"""Reference elements on the triangle ``{(0,0), (1,0), (0,1)}``.

Local edge ``e`` is opposite vertex ``e`` and runs counterclockwise from
``a`` to ``b``.  Raviart-Thomas edge DOFs are

    l_{e,j}(phi) = int_0^1 phi(a + t (b - a)) . rot(b - a) L_j(t) dt,

with ``rot(x, y) = (y, -x)`` (outward for counterclockwise traversal) and
Legendre polynomials ``L_0 = 1``, ``L_1 = 2t - 1`` on ``[0, 1]``.  Since
``J^T rot J = det(J) rot``, these functionals commute with the contravariant
Piola map.  For ``k = 1`` two interior DOFs are the reference-cell moments
against ``(1, 0)`` and ``(0, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import gauss_line, triangle_rule

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


def _legendre01(j, t):
    if j == 0:
        return np.ones_like(t)
    if j == 1:
        return 2.0 * t - 1.0
    raise ValueError(j)


def _rot(v):
    return np.array([v[1], -v[0]])


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Basis data on the reference cell.

    Attributes
    ----------
    family : "CG" or "RT"
    degree : polynomial degree m (CG) or index k (RT)
    n_basis : local basis size
    sign_power : (n_basis,) int; RT global basis = sign**p * local basis,
        ``p = 0`` for DOFs without orientation.  Zero for CG.
    coeffs : (n_monomials, n_basis) expansion in the RT monomial basis
    """

    family: str
    degree: int
    n_basis: int
    sign_power: np.ndarray
    coeffs: np.ndarray | None = None

    def tabulate(self, xh):
        """Return ``(values, derivs)`` at reference points ``xh`` (nq, 2).

        CG: values (nq, nb), derivs = gradients (nq, nb, 2).
        RT: values (nq, nb, 2), derivs = divergences (nq, nb).
        """
        xh = np.atleast_2d(np.asarray(xh, dtype=float))
        if self.family == "CG":
            return _cg_tabulate(self.degree, xh)
        mv, md = _rt_monomials(self.degree, xh)
        return np.einsum("qmi,mb->qbi", mv, self.coeffs), md @ self.coeffs


def _cg_tabulate(m, xh):
    x, y = xh[:, 0], xh[:, 1]
    lam = np.stack([1.0 - x - y, x, y], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(x)
    if m == 1:
        return lam, np.broadcast_to(dlam, (nq, 3, 2)).copy()
    vals = np.empty((nq, 6))
    grads = np.empty((nq, 6, 2))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grads[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * dlam[i]
    for e, (a, b) in enumerate(LOCAL_EDGES):
        vals[:, 3 + e] = 4.0 * lam[:, a] * lam[:, b]
        grads[:, 3 + e] = 4.0 * (lam[:, a, None] * dlam[b] + lam[:, b, None] * dlam[a])
    return vals, grads


def _rt_monomials(k, xh):
    """Vector monomials spanning RT_k and their divergences."""
    x, y = xh[:, 0], xh[:, 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    if k == 0:
        comps = [(one, zero), (zero, one), (x, y)]
        div = [zero, zero, 2.0 * one]
    elif k == 1:
        comps = [
            (one, zero), (x, zero), (y, zero),
            (zero, one), (zero, x), (zero, y),
            (x * x, x * y), (x * y, y * y),
        ]
        div = [zero, one, zero, zero, zero, one, 3.0 * x, 3.0 * y]
    else:
        raise ValueError(f"RT degree {k} not supported")
    vals = np.stack([np.stack(c, axis=-1) for c in comps], axis=1)
    return vals, np.stack(div, axis=1)


def _rt_dual_matrix(k):
    t, w = gauss_line(3)
    rows = []
    for a, b in LOCAL_EDGES:
        pa, pb = REF_VERTICES[a], REF_VERTICES[b]
        n = _rot(pb - pa)
        pts = pa + t[:, None] * (pb - pa)
        mv, _ = _rt_monomials(k, pts)
        flux = mv @ n
        for j in range(k + 1):
            rows.append((w * _legendre01(j, t)) @ flux)
    if k >= 1:
        q = triangle_rule(4)
        mv, _ = _rt_monomials(k, q.ref_points)
        for i in range(2):
            rows.append(q.weights @ mv[:, :, i])
    return np.array(rows)


@lru_cache(maxsize=None)
def reference_element(family: str, degree: int) -> ReferenceElement:
    family = family.upper()
    if family == "CG":
        if degree not in (1, 2):
            raise ValueError(f"CG degree must be 1 or 2, got {degree}")
        nb = 3 if degree == 1 else 6
        return ReferenceElement("CG", degree, nb, np.zeros(nb, dtype=np.int64))
    if family == "RT":
        if degree not in (0, 1):
            raise ValueError(f"RT degree must be 0 or 1, got {degree}")
        D = _rt_dual_matrix(degree)
        coeffs = np.linalg.inv(D)
        nb = D.shape[0]
        power = np.zeros(nb, dtype=np.int64)
        for e in range(3):
            for j in range(degree + 1):
                # reversing the edge flips the normal and maps L_j(t) to (-1)^j L_j(t)
                power[e * (degree + 1) + j] = (j + 1) % 2
        return ReferenceElement("RT", degree, nb, power, coeffs)
    raise ValueError(f"unknown element family {family!r}")
