import numpy as np
import pytest

from fosls_rbno.fem import assemble_matrix, assemble_vector, build_space, interpolate
from fosls_rbno.lifts import build_lifts, dirichlet_lift, flux_free_decomposition, neumann_lift
from fosls_rbno.mesh import build_rect_mesh, parse_tags

LR = parse_tags(["left", "right"])
TB = parse_tags(["top", "bottom"])


@pytest.mark.parametrize("degree", [1, 2])
def test_dirichlet_lift_reproduces_harmonic_data(degree):
    m = build_rect_mesh(0, 0, 1, 1, 6, 6)
    V = build_space(m, "CG", degree, essential_bc=LR)
    w = dirichlet_lift(V, lambda x: 1 - x[..., 0])
    exact = interpolate(V, lambda x: 1 - x[..., 0]).coefficients
    np.testing.assert_allclose(w.coefficients, exact, atol=1e-10)


def test_dirichlet_lift_matches_boundary_and_is_discretely_harmonic():
    m = build_rect_mesh(0, 0, 1, 1, 8, 8)
    V = build_space(m, "CG", 2, essential_bc=LR)
    u0 = lambda x: 0.1 * (1 - x[..., 0]) * np.sin(4 * np.pi * x[..., 1])
    w = dirichlet_lift(V, u0)
    nodes = V.dof_coordinates()
    np.testing.assert_allclose(w.coefficients[V.constrained], u0(nodes[V.constrained]), atol=1e-14)
    K = assemble_matrix(V, V, "stiffness")
    assert np.abs((K @ w.coefficients)[V.free]).max() < 1e-9


def test_neumann_lift_weak_equation():
    m = build_rect_mesh(0, 0, 1, 1, 8, 8)
    V = build_space(m, "CG", 1, essential_bc=LR)
    g = lambda x: 0.1 * (1 - x[..., 1]) * np.cos(2 * np.pi * x[..., 0])
    q = neumann_lift(V, g, TB)
    K = assemble_matrix(V, V, "stiffness")
    b = assemble_vector(V, "boundary_load", g, tags=TB)
    np.testing.assert_allclose((K @ q.coefficients)[V.free], b[V.free], atol=1e-10)
    assert np.all(q.coefficients[V.constrained] == 0)


def test_zero_data_gives_zero_lifts():
    m = build_rect_mesh(0, 0, 1, 1, 4, 4)
    L = build_lifts(m, 1, "scalar", LR, TB)
    assert not np.any(L.w.coefficients) and not np.any(L.q.coefficients)


def test_vector_lifts_componentwise():
    m = build_rect_mesh(0, 0, 2, 1, 4, 2)
    tr = lambda x: np.stack([np.where(np.isclose(x[..., 0], 2), 1.0, 0.0), np.zeros(x.shape[:-1])], -1)
    L = build_lifts(m, 1, "vector", parse_tags(["left"]), parse_tags(["top", "bottom", "right"]), None, tr)
    n = L.q.space.n_component_dofs
    assert np.any(L.q.coefficients[:n]) and not np.any(L.q.coefficients[n:])


def test_flux_free_decomposition_identity():
    m = build_rect_mesh(0, 0, 1, 1, 6, 6)
    V = build_space(m, "CG", 2, essential_bc=LR)
    f = lambda x: np.sin(3 * x[..., 0]) + x[..., 1]
    r = flux_free_decomposition(f, V)
    load = assemble_vector(V, "domain_load", f)
    # f(v) = (f2, v) - (f1, grad v) with f1 = grad r, f2 = -r
    K = assemble_matrix(V, V, "stiffness")
    M = assemble_matrix(V, V, "mass")
    rep = -(M @ r.coefficients) - K @ r.coefficients
    np.testing.assert_allclose(rep[V.free], load[V.free], atol=1e-10)


def test_lift_requires_dirichlet_boundary():
    m = build_rect_mesh(0, 0, 1, 1, 2, 2)
    V = build_space(m, "CG", 1)
    with pytest.raises(ValueError):
        dirichlet_lift(V, lambda x: x[..., 0])
