import numpy as np
import pytest
import sympy

from fosls_rbno.fem import (
    FeFunction,
    apply_essential_bc,
    assemble_matrix,
    assemble_vector,
    build_space,
    cell_quadrature,
    collapsed_rule,
    gauss_line,
    interpolate,
    reference_element,
    restrict,
    tabulate_basis,
    triangle_rule,
)
from fosls_rbno.linalg import is_symmetric, solve_spd
from fosls_rbno.mesh import build_rect_mesh, parse_tags

X, Y = sympy.symbols("x y")


def exact_monomial(a, b):
    """Integral of x^a y^b over the reference triangle."""
    return float(sympy.integrate(sympy.integrate(X ** a * Y ** b, (Y, 0, 1 - X)), (X, 0, 1)))


@pytest.mark.parametrize("degree", [1, 2, 4, 6, 8, 10])
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(degree)
    p = rule.ref_points
    assert np.isclose(rule.weights.sum(), 0.5)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            q = np.sum(rule.weights * p[:, 0] ** a * p[:, 1] ** b)
            assert abs(q - exact_monomial(a, b)) < 1e-14, (a, b)


def test_collapsed_and_line_rules():
    pts, wts = collapsed_rule(5)
    assert np.isclose(wts.sum(), 0.5)
    np.testing.assert_allclose(np.sum(wts * pts[:, 1] ** 3 * pts[:, 2] ** 5), exact_monomial(3, 5), atol=1e-15)
    t, w = gauss_line(3)
    np.testing.assert_allclose(np.sum(w * t ** 5), 1 / 6, atol=1e-15)


@pytest.mark.parametrize("family,degree", [("CG", 1), ("CG", 2), ("RT", 0), ("RT", 1)])
def test_reference_basis_counts(family, degree):
    el = reference_element(family, degree)
    expect = {("CG", 1): 3, ("CG", 2): 6, ("RT", 0): 3, ("RT", 1): 8}[(family, degree)]
    assert el.n_basis == expect


def test_cg_nodal_property():
    el = reference_element("CG", 2)
    nodes = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0.5], [0, 0.5], [0.5, 0]])
    vals, _ = el.tabulate(nodes)
    np.testing.assert_allclose(vals, np.eye(6), atol=1e-14)


@pytest.mark.parametrize("k", [0, 1])
def test_rt_edge_moment_duality(k):
    """Edge DOFs are Legendre moments of the normal flux; independent Gauss check."""
    el = reference_element("RT", k)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    edges = [(1, 2), (2, 0), (0, 1)]
    t, w = gauss_line(5)
    for e, (a, b) in enumerate(edges):
        pa, pb = verts[a], verts[b]
        pts = pa + t[:, None] * (pb - pa)
        vals, _ = el.tabulate(pts)
        d = pb - pa
        nvec = np.array([d[1], -d[0]])
        for j in range(k + 1):
            leg = np.ones_like(t) if j == 0 else 2 * t - 1
            mom = np.einsum("q,qbi,i->b", w * leg, vals, nvec)
            target = np.zeros(el.n_basis)
            target[(k + 1) * e + j] = 1.0
            np.testing.assert_allclose(mom, target, atol=1e-13)


@pytest.mark.parametrize("k", [0, 1])
def test_rt_normal_continuity(k):
    m = build_rect_mesh(0, 0, 1, 1, 3, 2)
    S = build_space(m, "RT", k)
    g = np.random.default_rng(0)
    f = FeFunction(S, g.standard_normal(S.n_dofs))
    # interior edges: evaluate the normal flux from both neighbouring cells
    t = np.array([0.2, 0.5, 0.9])
    owners = {}
    for c in range(m.n_cells):
        for e in m.cell_edges[c]:
            owners.setdefault(e, []).append(c)
    for e, cs in owners.items():
        if len(cs) != 2:
            continue
        a, b = m.vertices[m.edges[e]]
        pts = a + t[:, None] * (b - a)
        n = np.array([b[1] - a[1], a[0] - b[0]])
        v0 = f.evaluate(pts, np.full(3, cs[0])) @ n
        v1 = f.evaluate(pts, np.full(3, cs[1])) @ n
        np.testing.assert_allclose(v0, v1, atol=1e-12)


@pytest.mark.parametrize("k", [0, 1])
def test_rt_divergence_theorem(k):
    """Cell integral of div equals the outward boundary flux."""
    m = build_rect_mesh(0, 0, 1, 1, 2, 2)
    S = build_space(m, "RT", k)
    f = FeFunction(S, np.random.default_rng(1).standard_normal(S.n_dofs))
    q = cell_quadrature(m, 4)
    from fosls_rbno.fem import fe_values

    div_int = np.sum(q.weights * fe_values(f, q, "div")[..., 0], axis=1)
    t, w = gauss_line(4)
    for c in range(m.n_cells):
        v = m.vertices[m.cells[c]]
        flux = 0.0
        for a, b in [(1, 2), (2, 0), (0, 1)]:
            pts = v[a] + t[:, None] * (v[b] - v[a])
            d = v[b] - v[a]
            n = np.array([d[1], -d[0]])  # outward for CCW cells, scaled by length
            flux += np.sum(w * (f.evaluate(pts, np.full(len(t), c)) @ n))
        assert abs(flux - div_int[c]) < 1e-12


@pytest.mark.parametrize("family,degree,field", [
    ("CG", 1, lambda x: 1 + 2 * x[..., 0] - x[..., 1]),
    ("CG", 2, lambda x: x[..., 0] ** 2 - 3 * x[..., 0] * x[..., 1] + x[..., 1]),
    ("RT", 0, lambda x: np.stack([1 + x[..., 0], 2 + x[..., 1]], -1)),
    ("RT", 1, lambda x: np.stack([x[..., 0] * x[..., 1], x[..., 1] ** 2 - x[..., 0]], -1)),
])
def test_interpolation_reproduces_space(family, degree, field):
    m = build_rect_mesh(0, 0, 1, 1, 3, 3)
    S = build_space(m, family, degree)
    f = interpolate(S, field)
    pts = np.random.default_rng(2).uniform(0.01, 0.99, (40, 2))
    got = f.evaluate(pts)
    want = np.asarray(field(pts)).reshape(len(pts), -1)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_rt_interpolant_of_constant_has_unit_mass():
    m = build_rect_mesh(0, 0, 1, 1, 4, 4)
    S = build_space(m, "RT", 0)
    f = interpolate(S, lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], -1))
    M = assemble_matrix(S, S, "rt_mass")
    D = assemble_matrix(S, S, "rt_divdiv")
    c = f.coefficients
    np.testing.assert_allclose(c @ M @ c, 1.0, rtol=1e-13)
    assert abs(c @ D @ c) < 1e-24


def test_mass_and_stiffness_identities():
    m = build_rect_mesh(0, 0, 2, 1, 3, 2)
    V = build_space(m, "CG", 2)
    M = assemble_matrix(V, V, "mass")
    K = assemble_matrix(V, V, "stiffness")
    assert is_symmetric(M) and is_symmetric(K)
    one = np.ones(V.n_dofs)
    np.testing.assert_allclose(one @ M @ one, 2.0, rtol=1e-13)
    assert np.abs(K @ one).max() < 1e-12
    x = interpolate(V, lambda p: p[..., 0]).coefficients
    np.testing.assert_allclose(x @ K @ x, 2.0, rtol=1e-13)


def test_strain_energy_rigid_motions():
    m = build_rect_mesh(0, 0, 1, 1, 2, 2)
    V = build_space(m, "CG", 1, "vector")
    K = assemble_matrix(V, V, "strain_energy", (1.0, 2.0))
    for field in (lambda p: np.stack([np.ones(len(p)), np.zeros(len(p))], -1),
                  lambda p: np.stack([-p[:, 1], p[:, 0]], -1)):
        c = interpolate(V, field).coefficients
        assert abs(c @ K @ c) < 1e-12


def test_poisson_peak_value():
    """-Lap u = 1 on the unit square, u = 0: max u = 0.0736713..."""
    m = build_rect_mesh(0, 0, 1, 1, 32, 32)
    V = build_space(m, "CG", 2, essential_bc=parse_tags(["left", "right", "top", "bottom"]))
    K = assemble_matrix(V, V, "stiffness")
    b = assemble_vector(V, "domain_load", 1.0)
    u = np.zeros(V.n_dofs)
    u[V.free] = solve_spd(restrict(K, V.free), b[V.free], tol=1e-12)
    assert abs(u.max() - 0.0736713) < 2e-5


def test_essential_bc_elimination():
    m = build_rect_mesh(0, 0, 1, 1, 4, 4)
    V = build_space(m, "CG", 1, essential_bc=parse_tags(["left", "right"]))
    K = assemble_matrix(V, V, "stiffness")
    g = interpolate(V, lambda p: 1 - p[..., 0]).coefficients
    A, b = apply_essential_bc(K, np.zeros(V.n_dofs), V.constrained, g[V.constrained])
    u = np.linalg.solve(A.toarray(), b)
    np.testing.assert_allclose(u, g, atol=1e-12)  # linear data is discretely harmonic


def test_boundary_load_length():
    m = build_rect_mesh(0, 0, 2, 1, 4, 2)
    V = build_space(m, "CG", 1)
    b = assemble_vector(V, "boundary_load", 1.0, tags=parse_tags(["top"]))
    np.testing.assert_allclose(b.sum(), 2.0, rtol=1e-14)


def test_tabulate_basis_shapes():
    m = build_rect_mesh(0, 0, 1, 1, 1, 1)
    S = build_space(m, "RT", 1)
    v, d = tabulate_basis(S, 0, triangle_rule(2))
    assert v.shape == (3, 8, 2) and d.shape == (3, 8)


def test_space_mismatch_errors():
    m = build_rect_mesh(0, 0, 1, 1, 2, 2)
    V = build_space(m, "CG", 1)
    S = build_space(m, "RT", 0)
    with pytest.raises(ValueError):
        assemble_matrix(V, V, "rt_mass")
    with pytest.raises(ValueError):
        assemble_matrix(S, V, "nonsense")
