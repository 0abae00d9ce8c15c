"""Parameter fields and material laws.

Random numbers come from Philox counter-based generators keyed by the
per-sample seed, so samples can be drawn in any order or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import FeFunction, FunctionSpace, assemble_matrix, build_space, fe_values
from .mesh import Mesh

NU_DEFAULT = 0.4


def rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


# -- mini-square conductivity --------------------------------------------------

# centres (m/8, n/8), m, n in {1, 3, 5, 7}; index runs along x first
MINISQUARE_CENTERS = np.array([(m / 8, n / 8) for n in (1, 3, 5, 7) for m in (1, 3, 5, 7)])
MINISQUARE_HALF = 1.0 / 16.0


def minisquare_index(points) -> np.ndarray:
    """Index of the mini-square containing each point, -1 outside all squares."""
    x = np.asarray(points, dtype=float)
    # squares have width 1/8 and are centred on odd multiples of 1/8
    i = np.floor(x[..., 0] * 4).astype(np.int64)
    j = np.floor(x[..., 1] * 4).astype(np.int64)
    i, j = np.clip(i, 0, 3), np.clip(j, 0, 3)
    cx = MINISQUARE_CENTERS[4 * j + i]
    inside = np.all(np.abs(x - cx) <= MINISQUARE_HALF, axis=-1)
    return np.where(inside, 4 * j + i, -1)


def minisquare_indicator(points) -> np.ndarray:
    return (minisquare_index(points) >= 0).astype(float)


@dataclass(frozen=True, eq=False)
class ParamSample:
    """One parameter draw.

    ``kind`` is ``"minisquare"`` (``values`` = the 16 exponents mu) or
    ``"nodal"`` (``values`` = CG_1 coefficients of a Gaussian field on
    ``space``).  :meth:`evaluate` returns the conductivity for mini-squares and
    the Gaussian field itself for nodal samples; problem definitions map it
    to a permeability or Young's modulus.
    """

    kind: str
    values: np.ndarray
    seed: int
    space: FunctionSpace | None = None

    @property
    def features(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def evaluate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.kind == "minisquare":
            idx = minisquare_index(pts)
            return np.where(idx >= 0, 10.0 ** self.values[np.maximum(idx, 0)], 1.0)
        f = FeFunction(self.space, self.values)
        return f.evaluate(pts.reshape(-1, 2))[:, 0].reshape(pts.shape[:-1])

    def at_quadrature(self, quad) -> np.ndarray:
        """Values at the nodes of a cell quadrature, (n, nq)."""
        if self.kind == "nodal" and self.space.mesh is quad.mesh:
            return fe_values(FeFunction(self.space, self.values), quad)[..., 0]
        return self.evaluate(quad.points)


def sample_minisquares(seed) -> ParamSample:
    mu = rng(seed).uniform(-1.0, 1.0, size=16)
    return ParamSample("minisquare", mu, int(seed))


def minisquare_sample(mu, seed=-1) -> ParamSample:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (16,):
        raise ValueError("mini-square samples have 16 exponents")
    return ParamSample("minisquare", mu, int(seed))


# -- Gaussian random fields ----------------------------------------------------


@dataclass(frozen=True)
class GrfConfig:
    delta: float = 1.5
    gamma: float = 0.15
    alpha: int = 2
    robin: float = 0.0  # optional boundary mass term, off by default

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma > 0):
            raise ValueError("GRF requires delta > 0 and gamma > 0")
        if self.alpha != 2:
            raise ValueError("only alpha = 2 is supported")


@dataclass(eq=False)
class GrfSampler:
    """Samples ``m`` with ``(delta M + gamma K) m = diag(sqrt(lumped M)) xi``.

    The nodal covariance is then ``A^{-1} M_L A^{-1}``, a discretisation of
    ``(delta I - gamma Laplace)^{-2}`` with natural boundary conditions.
    """

    mesh: Mesh
    cfg: GrfConfig = field(default_factory=GrfConfig)
    space: FunctionSpace = None
    _lu: object = None
    _scale: np.ndarray = None

    def __post_init__(self):
        from scipy.sparse.linalg import splu

        if self.space is None:
            self.space = build_space(self.mesh, "CG", 1)
        M = assemble_matrix(self.space, self.space, "mass")
        K = assemble_matrix(self.space, self.space, "stiffness")
        A = self.cfg.delta * M + self.cfg.gamma * K
        if self.cfg.robin:
            A = A + self.cfg.robin * assemble_matrix(self.space, self.space, "boundary_mass")
        self._lu = splu(sp.csc_matrix(A))
        self._scale = np.sqrt(np.asarray(M.sum(axis=1)).ravel())

    def draw(self, seed) -> np.ndarray:
        xi = rng(seed).standard_normal(self.space.n_dofs)
        return self._lu.solve(self._scale * xi)

    def __call__(self, seed) -> ParamSample:
        return ParamSample("nodal", self.draw(seed), int(seed), self.space)


def sample_grf(seed, cfg: GrfConfig | None = None, mesh: Mesh | None = None,
               cg1_space: FunctionSpace | None = None) -> ParamSample:
    if cg1_space is None and mesh is None:
        raise ValueError("sample_grf needs a mesh or a CG1 space")
    mesh = cg1_space.mesh if cg1_space is not None else mesh
    return GrfSampler(mesh, cfg or GrfConfig(), cg1_space)(seed)


# -- isotropic elasticity ------------------------------------------------------


@dataclass(frozen=True)
class IsotropicStiffness:
    mu: object
    lam: object


def lame_from_young(E, nu=NU_DEFAULT) -> IsotropicStiffness:
    if not 0.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (0, 1/2), got {nu}")
    E = np.asarray(E, dtype=float) if not np.isscalar(E) else float(E)
    return IsotropicStiffness(E / (2.0 * (1.0 + nu)), nu * E / ((1.0 + nu) * (1.0 - 2.0 * nu)))


def stiffness_pow(mu, lam, s, tau, d=2):
    """Apply ``C^s`` to 2x2 tensors.

    ``C^s tau = (2 mu)^s dev(tau) + (2 mu + d lam)^s tr(tau)/d I``; ``tau``
    is either (..., 2, 2) or row-major flattened (..., 4).  ``mu`` and
    ``lam`` broadcast against the tensor batch shape.
    """
    tau = np.asarray(tau, dtype=float)
    flat = tau.shape[-1] == 4
    T = tau if flat else tau.reshape(tau.shape[:-2] + (4,))
    a = np.power(2.0 * np.asarray(mu, dtype=float), s)
    b = np.power(2.0 * np.asarray(mu, dtype=float) + d * np.asarray(lam, dtype=float), s)
    half_tr = 0.5 * (T[..., 0] + T[..., 3])
    out = a[..., None] * T
    iso = (b - a) * half_tr
    out = out.copy() if out is T else out
    out[..., 0] += iso
    out[..., 3] += iso
    return out if flat else out.reshape(tau.shape)
