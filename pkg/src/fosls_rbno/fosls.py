"""First-order system least-squares losses, solves and diagnostics.

For diffusion the unknown is ``s = (sigma, u)`` in ``RT_k x CG_m`` with
``sigma . n = 0`` on the Neumann and ``u = 0`` on the Dirichlet boundary.
The fiber loss is

    L(s) = ||sigma - p grad u - F||^2 + ||div sigma + f2||^2,
    F = p grad w - z + f1,

and for elasticity, with tensors flattened row-major,

    L(s) = ||C^{-1/2} sigma - C^{1/2} eps(u) - G||^2 + ||div sigma + f||^2,
    G = C^{1/2} eps(w) - C^{-1/2} z.

Writing the residual as ``R s - D`` pointwise, ``L(s) = s^T W s + 2 s^T alpha
+ beta`` with ``W = (R, R)``, ``alpha = -(R, D)`` and ``beta = ||D||^2``,
all restricted to the free (unconstrained) DOFs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    FeFunction,
    SparsityPattern,
    build_space,
    cell_quadrature,
    default_degree,
    fe_values,
    interpolate,
)
from .fields import (
    NU_DEFAULT,
    GrfConfig,
    GrfSampler,
    ParamSample,
    lame_from_young,
    minisquare_indicator,
    sample_minisquares,
    stiffness_pow,
)
from .lifts import LiftData, build_lifts
from .linalg import solve_direct, solve_spd
from .mesh import BoundaryTag, build_rect_mesh, parse_tags

POINCARE_UNIT_SQUARE = np.sqrt(2.0) / np.pi

ALL_SIDES = frozenset(BoundaryTag)


# -- problem definitions -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Problem:
    """Geometry, boundary data, sources and parameter law of one benchmark.

    Data callables take points of shape (..., 2).  ``g`` is the normal flux
    (diffusion) or traction (elasticity) on the Neumann boundary, ``f1`` the
    flux part and ``f2`` the density part of the source.
    """

    name: str
    kind: str  # "diffusion" | "elasticity"
    bounds: tuple
    dirichlet: frozenset
    neumann: frozenset
    parameter: str  # "minisquare" | "grf" | "constant"
    u0: object = None
    g: object = None
    f1: object = None
    f2: object = None
    constant: float = 1.0
    nu: float = NU_DEFAULT
    grf: GrfConfig = field(default_factory=GrfConfig)
    coefficient_bounds: tuple | None = None  # (alpha, beta) for diffusion
    mesh_multiple: int = 1
    exact_u: object = None
    exact_sigma: object = None

    @property
    def vector(self) -> bool:
        return self.kind == "elasticity"

    def check_mesh(self, nx, ny):
        if nx % self.mesh_multiple or ny % self.mesh_multiple:
            raise ValueError(f"{self.name} needs cell counts divisible by {self.mesh_multiple}, got {nx}x{ny}")

    def field_at(self, sample: ParamSample | None, quad) -> np.ndarray:
        """The raw parameter field at quadrature points."""
        if self.parameter == "constant" or sample is None:
            return np.full(quad.weights.shape, float(self.constant))
        return sample.at_quadrature(quad)

    def coefficient(self, sample, quad):
        """Conductivity ``p`` (diffusion) or Lamé pair ``(mu, lam)`` (elasticity)."""
        v = self.field_at(sample, quad)
        if self.kind == "diffusion":
            if self.parameter == "grf":
                return 0.01 + np.exp(v)
            return v
        E = v if self.parameter == "constant" else np.exp(v) + 1.0
        st = lame_from_young(E, self.nu)
        return st.mu, st.lam

    def mean_coefficient(self, quad):
        """Coefficient at the mean parameter (Gaussian field equal to zero)."""
        if self.parameter == "grf":
            zero = np.zeros(quad.weights.shape)
            if self.kind == "diffusion":
                return 0.01 + np.exp(zero)
            st = lame_from_young(np.exp(zero) + 1.0, self.nu)
            return st.mu, st.lam
        if self.kind == "diffusion":
            return np.full(quad.weights.shape, 1.0 if self.parameter == "minisquare" else self.constant)
        st = lame_from_young(np.full(quad.weights.shape, self.constant), self.nu)
        return st.mu, st.lam


def heat_conduction() -> Problem:
    def u0(x):
        return 0.1 * (1.0 - x[..., 0]) * np.sin(4 * np.pi * x[..., 1])

    def g(x):
        return 0.1 * (1.0 - x[..., 1]) * np.cos(2 * np.pi * x[..., 0])

    def f1(x):
        ind = minisquare_indicator(x)
        return np.stack([0.5 * ind, -0.5 * ind], axis=-1)

    def f2(x):
        return np.ones(np.shape(x)[:-1])

    return Problem(
        name="heat_conduction", kind="diffusion", bounds=(0.0, 0.0, 1.0, 1.0),
        dirichlet=parse_tags(["left", "right"]), neumann=parse_tags(["top", "bottom"]),
        parameter="minisquare", u0=u0, g=g, f1=f1, f2=f2,
        coefficient_bounds=(0.1, 10.0), mesh_multiple=16,
    )


WELL_CENTERS = np.array([(m / 4, n / 4) for m in (1, 2, 3) for n in (1, 2, 3)])


def darcy(grf: GrfConfig | None = None) -> Problem:
    def u0(x):
        return 1.0 - x[..., 0]

    def f2(x):
        x = np.asarray(x)
        out = np.zeros(x.shape[:-1])
        for c in WELL_CENTERS:
            r2 = np.sum((x - c) ** 2, axis=-1)
            out += 100.0 * np.exp(-r2 * 32.0 ** 2)
        return out

    return Problem(
        name="darcy", kind="diffusion", bounds=(0.0, 0.0, 1.0, 1.0),
        dirichlet=parse_tags(["left", "right"]), neumann=parse_tags(["top", "bottom"]),
        parameter="grf", u0=u0, g=None, f1=None, f2=f2, grf=grf or GrfConfig(),
    )


def elasticity(grf: GrfConfig | None = None, nu=NU_DEFAULT) -> Problem:
    def traction(x):
        x = np.asarray(x)
        right = np.abs(x[..., 0] - 2.0) <= 1e-12
        t1 = 0.6 * np.exp(-((x[..., 1] - 0.5) ** 2) / 4.0)
        t2 = 0.3 * (1.0 + x[..., 1] / 10.0)
        return np.stack([np.where(right, t1, 0.0), np.where(right, t2, 0.0)], axis=-1)

    return Problem(
        name="elasticity", kind="elasticity", bounds=(0.0, 0.0, 2.0, 1.0),
        dirichlet=parse_tags(["left"]), neumann=parse_tags(["top", "bottom", "right"]),
        parameter="grf", u0=None, g=traction, f1=None, f2=None, nu=nu, grf=grf or GrfConfig(),
    )


def manufactured_diffusion() -> Problem:
    pi = np.pi

    def u(x):
        return np.sin(pi * x[..., 0]) * np.sin(pi * x[..., 1])

    def grad_u(x):
        return np.stack([pi * np.cos(pi * x[..., 0]) * np.sin(pi * x[..., 1]),
                         pi * np.sin(pi * x[..., 0]) * np.cos(pi * x[..., 1])], axis=-1)

    def f2(x):
        return 2 * pi ** 2 * u(x)

    return Problem(
        name="manufactured_diffusion", kind="diffusion", bounds=(0.0, 0.0, 1.0, 1.0),
        dirichlet=ALL_SIDES, neumann=frozenset(), parameter="constant", constant=1.0,
        f2=f2, coefficient_bounds=(1.0, 1.0), exact_u=u, exact_sigma=grad_u,
    )


def manufactured_elasticity(E=1.0, nu=NU_DEFAULT) -> Problem:
    """``u = (S, S)``, ``S = sin(pi x) sin(pi y)``, clamped on the whole boundary."""
    pi = np.pi
    st = lame_from_young(E, nu)
    mu, lam = st.mu, st.lam

    def S(x):
        return np.sin(pi * x[..., 0]) * np.sin(pi * x[..., 1])

    def cc(x):
        return np.cos(pi * x[..., 0]) * np.cos(pi * x[..., 1])

    def u(x):
        return np.stack([S(x), S(x)], axis=-1)

    def f(x):
        # -div(2 mu eps(u) + lam div(u) I) for u = (S, S)
        fi = 2 * pi ** 2 * mu * S(x) - (mu + lam) * pi ** 2 * (cc(x) - S(x))
        return np.stack([fi, fi], axis=-1)

    def sigma(x):
        sx = pi * np.cos(pi * x[..., 0]) * np.sin(pi * x[..., 1])
        sy = pi * np.sin(pi * x[..., 0]) * np.cos(pi * x[..., 1])
        e11, e22, e12 = sx, sy, 0.5 * (sx + sy)
        tr = e11 + e22
        return np.stack([2 * mu * e11 + lam * tr, 2 * mu * e12, 2 * mu * e12, 2 * mu * e22 + lam * tr], axis=-1)

    return Problem(
        name="manufactured_elasticity", kind="elasticity", bounds=(0.0, 0.0, 1.0, 1.0),
        dirichlet=ALL_SIDES, neumann=frozenset(), parameter="constant", constant=float(E),
        f2=f, nu=nu, exact_u=u, exact_sigma=sigma,
    )


PROBLEMS = {
    "heat_conduction": heat_conduction,
    "darcy": darcy,
    "elasticity": elasticity,
    "manufactured_diffusion": manufactured_diffusion,
    "manufactured_elasticity": manufactured_elasticity,
}


def get_problem(name, **kwargs) -> Problem:
    try:
        return PROBLEMS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


# -- loss weights ---------------------------------------------------------------


@dataclass(eq=False)
class LossWeights:
    """Quadratic fiber loss ``s^T W s + 2 s^T alpha + beta`` on free DOFs."""

    W: sp.csr_matrix
    alpha: np.ndarray
    beta: float
    sample_id: int = -1

    @property
    def n(self) -> int:
        return len(self.alpha)

    def loss(self, s) -> float:
        return eval_loss(self, s)

    def gradient(self, s) -> np.ndarray:
        return 2.0 * (self.W @ s + self.alpha)


def eval_loss(weights: LossWeights, s) -> float:
    s = np.asarray(s, dtype=float)
    if s.shape != weights.alpha.shape:
        raise ValueError(f"coefficient vector has shape {s.shape}, weights need {weights.alpha.shape}")
    return float(s @ (weights.W @ s) + 2.0 * (s @ weights.alpha) + weights.beta)


@dataclass(eq=False)
class Discretization:
    """Mesh, spaces, lifts and cached residual-operator data for one problem.

    The stacked coefficient vector is ``(sigma; u)`` over the free DOFs of
    both spaces; :meth:`full` scatters it into full-space vectors.
    """

    problem: Problem
    mesh: object
    k: int
    m: int
    sigma_space: object
    u_space: object
    quad: object
    lifts: LiftData
    free: np.ndarray
    solver: str = "cg"
    _pattern: SparsityPattern = None
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, problem: Problem, nx: int, ny: int, k: int = 0, m: int | None = None,
              quad_degree: int | None = None, solver: str = "cg") -> "Discretization":
        problem.check_mesh(nx, ny)
        m = k + 1 if m is None else int(m)
        mesh = build_rect_mesh(*problem.bounds, nx, ny)
        shape_s, shape_u = ("tensor", "vector") if problem.vector else ("vector", "scalar")
        S = build_space(mesh, "RT", k, shape_s, essential_bc=problem.neumann)
        U = build_space(mesh, "CG", m, shape_u, essential_bc=problem.dirichlet)
        if quad_degree is None:
            quad_degree = default_degree(S, U)
        quad = cell_quadrature(mesh, quad_degree)
        lifts = build_lifts(mesh, m, shape_u, problem.dirichlet, problem.neumann, problem.u0, problem.g)
        free = np.concatenate([S.free, S.n_dofs + U.free])
        disc = cls(problem=problem, mesh=mesh, k=k, m=m, sigma_space=S, u_space=U, quad=quad,
                   lifts=lifts, free=free, solver=solver)
        disc._pattern = disc._make_pattern()
        return disc

    # -- layout --

    @property
    def n_sigma(self) -> int:
        return self.sigma_space.n_dofs

    @property
    def n_dofs(self) -> int:
        return self.sigma_space.n_dofs + self.u_space.n_dofs

    @property
    def n_free(self) -> int:
        return len(self.free)

    def _local_dofs(self):
        return np.hstack([self.sigma_space.local_to_global(),
                          self.n_sigma + self.u_space.local_to_global()])

    def _make_pattern(self):
        fmap = np.full(self.n_dofs, -1, dtype=np.int64)
        fmap[self.free] = np.arange(self.n_free)
        dofs = self._local_dofs()
        return SparsityPattern(dofs, dofs, fmap, fmap, (self.n_free, self.n_free))

    def full(self, s) -> np.ndarray:
        out = np.zeros(self.n_dofs)
        out[self.free] = s
        return out

    def split(self, s):
        """FE functions ``(sigma, u)`` of a free-DOF vector."""
        f = self.full(s)
        return FeFunction(self.sigma_space, f[: self.n_sigma]), FeFunction(self.u_space, f[self.n_sigma:])

    def join(self, sigma: FeFunction, u: FeFunction) -> np.ndarray:
        return np.concatenate([sigma.coefficients, u.coefficients])[self.free]

    # -- residual operator --

    def _static(self):
        c = self._cache
        if "static" not in c:
            q = self.quad
            kind_u = "strain" if self.problem.vector else "grad"
            c["static"] = (q.quantity(self.sigma_space, "value"), q.quantity(self.sigma_space, "div"),
                           q.quantity(self.u_space, kind_u))
        return c["static"]

    def _lift_data(self):
        c = self._cache
        if "lift" not in c:
            q = self.quad
            kind = "strain" if self.problem.vector else "grad"
            c["lift"] = (fe_values(self.lifts.w, q, kind), self.lifts.z_at(q))
        return c["lift"]

    def _source(self, which):
        c = self._cache
        key = "src_" + which
        if key not in c:
            f = getattr(self.problem, which)
            n, nq = self.quad.weights.shape
            if f is None:
                c[key] = None
            else:
                c[key] = np.asarray(f(self.quad.points), dtype=float).reshape(n, nq, -1)
        return c[key]

    def residual_operator(self, sample):
        """Pointwise residual map ``R`` (n, nq, n_local, K) and data ``D`` (n, nq, K)."""
        Qv, Qd, Qu = self._static()
        grad_w, z = self._lift_data()
        f1, f2 = self._source("f1"), self._source("f2")
        coef = self.problem.coefficient(sample, self.quad)
        n, nq = self.quad.weights.shape
        if not self.problem.vector:
            p = coef[:, :, None]
            Rs = np.concatenate([Qv, Qd], axis=-1)
            Ru = np.concatenate([-p[..., None] * Qu, np.zeros(Qu.shape[:-1] + (1,))], axis=-1)
            F = p * grad_w - z
            if f1 is not None:
                F = F + f1
            D2 = -f2 if f2 is not None else np.zeros((n, nq, 1))
            D = np.concatenate([F, D2], axis=-1)
        else:
            mu, lam = coef
            mb, lb = mu[:, :, None], lam[:, :, None]
            Rs = np.concatenate([stiffness_pow(mb, lb, -0.5, Qv), Qd], axis=-1)
            Ru = np.concatenate([-stiffness_pow(mb, lb, 0.5, Qu),
                                 np.zeros(Qu.shape[:-1] + (2,))], axis=-1)
            if f1 is not None:
                raise ValueError("tensor flux sources are not supported for elasticity")
            G = stiffness_pow(mu, lam, 0.5, grad_w) - stiffness_pow(mu, lam, -0.5, z)
            D2 = -f2 if f2 is not None else np.zeros((n, nq, 2))
            D = np.concatenate([G, D2], axis=-1)
        return np.concatenate([Rs, Ru], axis=2), D

    def weights(self, sample, sample_id=None) -> LossWeights:
        """Assemble ``(W, alpha, beta)`` for one parameter sample."""
        from .fem import local_bilinear

        R, D = self.residual_operator(sample)
        w = self.quad.weights
        W = self._pattern.assemble(local_bilinear(R, R, w))
        local = -np.einsum("cq,cqbk,cqk->cb", w, R, D)
        fmap = np.full(self.n_dofs, -1, dtype=np.int64)
        fmap[self.free] = np.arange(self.n_free)
        idx = fmap[self._local_dofs()].ravel()
        keep = idx >= 0
        alpha = np.bincount(idx[keep], weights=local.ravel()[keep], minlength=self.n_free)
        beta = float(np.sum(w[..., None] * D * D))
        sid = getattr(sample, "seed", -1) if sample_id is None else sample_id
        return LossWeights(W=W, alpha=alpha, beta=beta, sample_id=int(sid))

    def solve(self, weights: LossWeights, tol=1e-10) -> np.ndarray:
        return solve_fe_fosls(weights, tol=tol, method=self.solver)

    def sampler(self):
        """Callable ``seed -> ParamSample`` for this problem's parameter law."""
        if self.problem.parameter == "minisquare":
            return sample_minisquares
        if self.problem.parameter == "grf":
            if "grf" not in self._cache:
                self._cache["grf"] = GrfSampler(self.mesh, self.problem.grf)
            return self._cache["grf"]
        return lambda seed: ParamSample("constant", np.array([self.problem.constant]), int(seed))

    # -- norms --

    def gram(self) -> sp.csr_matrix:
        if "gram" not in self._cache:
            self._cache["gram"] = gram_xh(self)
        return self._cache["gram"]


def assemble_loss_weights(disc: Discretization, sample) -> LossWeights:
    return disc.weights(sample)


def assemble_loss_weights_elasticity(disc: Discretization, sample) -> LossWeights:
    if not disc.problem.vector:
        raise ValueError("discretization is not an elasticity problem")
    return disc.weights(sample)


def solve_fe_fosls(weights: LossWeights, tol=1e-10, method="cg") -> np.ndarray:
    """Minimise the fiber loss: ``W s = -alpha``."""
    if method == "direct":
        return solve_direct(weights.W, -weights.alpha)
    return solve_spd(weights.W, -weights.alpha, tol=tol)


def gram_xh(disc: Discretization) -> sp.csr_matrix:
    """Gram matrix of the discrete H(div) x H^1 norm on free DOFs.

    Elasticity uses ``||div sigma||^2 + (C^{-1} sigma, sigma) + (C eps(u), eps(u))``
    with ``C`` at the mean parameter.
    """
    from .fem import local_bilinear

    q = disc.quad
    S, U = disc.sigma_space, disc.u_space
    Qv, Qd = q.quantity(S, "value"), q.quantity(S, "div")
    if not disc.problem.vector:
        Qu, Qg = q.quantity(U, "value"), q.quantity(U, "grad")
        s_part = [Qv, Qd]
        u_part = [Qu, Qg]
    else:
        mu, lam = (c[:, :, None] for c in disc.problem.mean_coefficient(q))
        s_part = [stiffness_pow(mu, lam, -0.5, Qv), Qd]
        u_part = [stiffness_pow(mu, lam, 0.5, q.quantity(U, "strain"))]
    Ks = sum(a.shape[-1] for a in s_part)
    Ku = sum(a.shape[-1] for a in u_part)
    Xs = np.concatenate(s_part + [np.zeros(Qv.shape[:-1] + (Ku,))], axis=-1)
    Xu = np.concatenate([np.zeros(u_part[0].shape[:-1] + (Ks,))] + u_part, axis=-1)
    X = np.concatenate([Xs, Xu], axis=2)
    return disc._pattern.assemble(local_bilinear(X, X, q.weights))


def gram_l2(disc: Discretization) -> sp.csr_matrix:
    """Gram matrix of ``||sigma||^2 + ||u||^2`` (L2 blocks) on free DOFs."""
    from .fem import local_bilinear

    q = disc.quad
    Qv = q.quantity(disc.sigma_space, "value")
    Qu = q.quantity(disc.u_space, "value")
    Ks, Ku = Qv.shape[-1], Qu.shape[-1]
    Xs = np.concatenate([Qv, np.zeros(Qv.shape[:-1] + (Ku,))], axis=-1)
    Xu = np.concatenate([np.zeros(Qu.shape[:-1] + (Ks,)), Qu], axis=-1)
    X = np.concatenate([Xs, Xu], axis=2)
    return disc._pattern.assemble(local_bilinear(X, X, q.weights))


def xh_norm(X, s) -> float:
    return float(np.sqrt(max(s @ (X @ s), 0.0)))


def h_norm_error(a, b, X) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[0] != X.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape}, {b.shape}, X {X.shape}")
    return xh_norm(X, a - b)


def residual_ratio(weights: LossWeights, s, reference, X) -> float:
    """``||s - s_ref||_X / sqrt(loss(s))``; +inf when the loss vanishes but the error does not."""
    err = h_norm_error(s, reference, X)
    loss = max(eval_loss(weights, s), 0.0)
    if loss == 0.0:
        return 0.0 if err == 0.0 else float("inf")
    return err / np.sqrt(loss)


def lemma_constants(alpha, beta, poincare=POINCARE_UNIT_SQUARE):
    """Norm-equivalence constants ``(c, C)`` for ``alpha <= p <= beta``."""
    a = np.sqrt(1.0 + poincare ** 2)
    c = ((np.sqrt(2.0) + beta * a / alpha) ** 2 + (1.0 + poincare ** 2) ** 2 / alpha ** 2) ** -0.5
    return float(c), float(np.sqrt(2.0 + beta ** 2))


# -- references and oracles ----------------------------------------------------


def refine(disc: Discretization, factor: int = 2) -> Discretization:
    nx, ny = disc.mesh.shape
    return Discretization.build(disc.problem, factor * nx, factor * ny, disc.k, disc.m, solver=disc.solver)


def prolongate_solution(coarse: Discretization, fine: Discretization, s) -> np.ndarray:
    """Transfer a coarse free-DOF vector to the fine (nested) discretization."""
    sig, u = coarse.split(s)
    sf = interpolate(fine.sigma_space, sig)
    uf = interpolate(fine.u_space, u)
    return fine.join(sf, uf)


def interpolate_exact(disc: Discretization) -> np.ndarray | None:
    """Interpolant of a manufactured solution in lifted variables (zero lifts)."""
    p = disc.problem
    if p.exact_u is None:
        return None
    sig = interpolate(disc.sigma_space, p.exact_sigma)
    u = interpolate(disc.u_space, p.exact_u)
    return disc.join(sig, u)


def quadrature_loss(disc: Discretization, sample, s, degree=None) -> float:
    """Fiber loss by direct pointwise evaluation of the FE fields.

    Independent of the weight assembly: fields are evaluated point by point
    through :meth:`FeFunction.evaluate` on a separate quadrature rule.
    """
    degree = disc.quad.rule.degree + 2 if degree is None else degree
    quad = cell_quadrature(disc.mesh, degree)
    sig, u = disc.split(s)
    n, nq = quad.weights.shape
    pts = quad.points.reshape(-1, 2)
    cells = np.repeat(np.arange(n), nq)
    sv = sig.evaluate(pts, cells).reshape(n, nq, -1)
    sd = sig.evaluate(pts, cells, "div").reshape(n, nq, -1)
    vec = disc.problem.vector
    du = u.evaluate(pts, cells, "strain" if vec else "grad").reshape(n, nq, -1)
    dw = disc.lifts.w.evaluate(pts, cells, "strain" if vec else "grad").reshape(n, nq, -1)
    z = disc.lifts.q.evaluate(pts, cells, "grad").reshape(n, nq, -1)
    coef = disc.problem.coefficient(sample, quad)
    f2 = disc.problem.f2
    f2v = np.zeros(sd.shape) if f2 is None else np.asarray(f2(quad.points)).reshape(sd.shape)
    if not vec:
        p = coef[..., None]
        F = p * dw - z
        if disc.problem.f1 is not None:
            F = F + np.asarray(disc.problem.f1(quad.points)).reshape(F.shape)
        r1 = sv - p * du - F
    else:
        mu, lam = coef
        G = stiffness_pow(mu, lam, 0.5, dw) - stiffness_pow(mu, lam, -0.5, z)
        r1 = stiffness_pow(mu, lam, -0.5, sv) - stiffness_pow(mu, lam, 0.5, du) - G
    r2 = sd + f2v
    return float(np.sum(quad.weights * (np.sum(r1 * r1, -1) + np.sum(r2 * r2, -1))))


@dataclass
class SolveRecord:
    sample_id: int
    loss: float
    assemble_time: float
    solve_time: float
    s: np.ndarray
    weights: LossWeights


def solve_sample(disc: Discretization, sample) -> SolveRecord:
    t0 = time.perf_counter()
    w = disc.weights(sample)
    t1 = time.perf_counter()
    s = disc.solve(w)
    t2 = time.perf_counter()
    return SolveRecord(w.sample_id, eval_loss(w, s), t1 - t0, t2 - t1, s, w)
