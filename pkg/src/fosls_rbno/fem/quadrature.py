"""Quadrature on the reference triangle and on the unit interval."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Rule on the reference triangle ``{(0,0), (1,0), (0,1)}``.

    ``points`` are barycentric ``(l0, l1, l2)``; ``weights`` sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        return self.points[:, 1:]

    def __len__(self) -> int:
        return len(self.weights)


def _orbit(weight, a, b=None, c=None):
    if b is None:
        return [(a, a, a)], [weight]
    if c is None:
        return [(a, b, b), (b, a, b), (b, b, a)], [weight] * 3
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [weight] * 6


# symmetric Dunavant rules, weights normalised to sum to one
_DUNAVANT = {
    1: [(1.0, 1 / 3)],
    2: [(1 / 3, 2 / 3, 1 / 6)],
    4: [
        (0.223381589678011, 0.108103018168070, 0.445948490915965),
        (0.109951743655322, 0.816847572980459, 0.091576213509771),
    ],
    6: [
        (0.116786275726379, 0.501426509658179, 0.249286745170910),
        (0.050844906370207, 0.873821971016996, 0.063089014491502),
        (0.082851075618374, 0.053145049844817, 0.310352451033784, 0.636502499121399),
    ],
}


def _dunavant(degree):
    pts, wts = [], []
    for orbit in _DUNAVANT[degree]:
        p, w = _orbit(*orbit)
        pts += p
        wts += w
    pts = np.array(pts, dtype=float)
    pts /= pts.sum(axis=1, keepdims=True)
    wts = np.array(wts, dtype=float)
    return pts, 0.5 * wts / wts.sum()


def collapsed_rule(n):
    """Conical-product Gauss rule with ``n**2`` points, exact to degree ``2n - 2``.

    The Duffy factor ``1 - u`` costs one degree in the collapsed direction."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    xh = u.ravel()
    yh = (v * (1.0 - u)).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    pts = np.column_stack([1.0 - xh - yh, xh, yh])
    return pts, weights


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule exact for polynomials up to ``degree`` (at least 1)."""
    degree = max(int(degree), 1)
    for d in sorted(_DUNAVANT):
        if d >= degree:
            pts, wts = _dunavant(d)
            return QuadratureRule(points=pts, weights=wts, degree=d)
    n = (degree + 2) // 2
    pts, wts = collapsed_rule(n)
    return QuadratureRule(points=pts, weights=wts, degree=2 * n - 2)


@lru_cache(maxsize=None)
def gauss_line(n: int = 3):
    """Gauss-Legendre points and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
