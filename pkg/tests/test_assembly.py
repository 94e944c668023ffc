import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptreg.assembly import (ElementField, NodalField, assemble_coupled,
                               assemble_weighted_mass, h1_seminorm, interpolate,
                               l2_norm, reconstruct_control, solve, solve_coupled,
                               stiffness_and_mass)
from adaptreg.mesh import bisect, build_uniform_interval, build_uniform_triangle_mesh
from adaptreg.problems import AnalyticFunction, example2, example3


def _bary(coords, x):
    """Barycentric coordinates of points ``x`` in the simplex ``coords``."""
    dim = coords.shape[1]
    A = np.vstack([coords.T, np.ones(dim + 1)])
    rhs = np.vstack([x.T, np.ones(len(x))])
    return np.linalg.solve(A, rhs).T


def _oracle_rule(coords):
    """Tensor Gauss rule: direct in 1D, Duffy-collapsed square in 2D."""
    g, w = np.polynomial.legendre.leggauss(6)
    g, w = 0.5 * (g + 1), 0.5 * w
    if coords.shape[1] == 1:
        a, b = coords[0, 0], coords[1, 0]
        return (a + (b - a) * g)[:, None], abs(b - a) * w
    s, t = np.meshgrid(g, g, indexing="ij")
    ws = np.outer(w, w)
    x, y = s, t * (1 - s)
    jac = (1 - s) * ws
    p0, p1, p2 = coords
    pts = p0 + np.outer(x.ravel(), p1 - p0) + np.outer(y.ravel(), p2 - p0)
    e1, e2 = p1 - p0, p2 - p0
    area2 = abs(e1[0] * e2[1] - e1[1] * e2[0])
    return pts, (jac * area2).ravel()


def brute_force_blocks(mesh, alpha_h):
    """Dense (K_alpha, K, M) over all vertices, basis pair by basis pair."""
    nv = mesh.n_vertices
    Ka, K, M = (np.zeros((nv, nv)) for _ in range(3))
    for t, el in enumerate(mesh.elements):
        coords = mesh.vertices[el]
        pts, wts = _oracle_rule(coords)
        lam = _bary(coords, pts)
        dim = mesh.dim
        A = np.vstack([coords.T, np.ones(dim + 1)])
        grads = np.linalg.inv(A)[:, :dim]
        for a, i in enumerate(el):
            for b, j in enumerate(el):
                gg = np.sum(wts) * grads[a] @ grads[b]
                Ka[i, j] += alpha_h[t] * gg
                K[i, j] += gg
                M[i, j] += wts @ (lam[:, a] * lam[:, b])
    return Ka, K, M


def _small_meshes():
    yield build_uniform_interval(5)
    yield build_uniform_triangle_mesh(1)
    m = bisect(build_uniform_triangle_mesh(1), {0})
    yield bisect(m, {1})


@pytest.mark.parametrize("mesh", list(_small_meshes()))
def test_matrices_match_brute_force(mesh):
    assert mesh.n_elements <= 6
    rng = np.random.default_rng(0)
    a = rng.uniform(0.1, 1.0, mesh.n_elements)
    Ka, K, M = brute_force_blocks(mesh, a)
    ka_full, m_full = stiffness_and_mass(mesh, a)
    k_full, _ = stiffness_and_mass(mesh, 1.0)
    assert np.allclose(ka_full.toarray(), Ka, rtol=0, atol=1e-12)
    assert np.allclose(k_full.toarray(), K, rtol=0, atol=1e-12)
    assert np.allclose(m_full.toarray(), M, rtol=0, atol=1e-12)
    if len(mesh.free_vertices):
        free = mesh.free_vertices
        sys_ = assemble_coupled(mesh, a, 1.0)
        n = len(free)
        big = np.block([[Ka[np.ix_(free, free)], -M[np.ix_(free, free)]],
                        [M[np.ix_(free, free)], K[np.ix_(free, free)]]])
        assert sys_.matrix.shape == (2 * n, 2 * n)
        assert np.allclose(sys_.matrix.toarray(), big, rtol=0, atol=1e-12)


def test_hand_assembled_entries():
    s = assemble_coupled(build_uniform_interval(4), 1.0, 0.0)
    K = s.blocks["stiffness"].toarray()
    M = s.blocks["mass"].toarray()
    assert np.allclose(np.diag(K), 8.0) and np.allclose(np.diag(K, 1), -4.0)
    assert np.allclose(np.diag(M), 1 / 6) and np.allclose(np.diag(M, 1), 1 / 24)


def test_zero_data_gives_zero_solution():
    for m in (build_uniform_interval(8), build_uniform_triangle_mesh(4)):
        sol = solve(m, 0.3, 0.0)
        assert np.all(sol.u.values == 0) and np.all(sol.z.values == 0)


def test_elementwise_constant_equals_scalar():
    m = build_uniform_triangle_mesh(3)
    a = assemble_coupled(m, np.full(m.n_elements, 0.25), 1.0).matrix
    b = assemble_coupled(m, 0.25, 1.0).matrix
    assert (a != b).nnz == 0


def test_block_structure_and_symmetry():
    m = bisect(build_uniform_triangle_mesh(3), {0, 5})
    a = np.random.default_rng(2).uniform(1e-3, 1, m.n_elements)
    s = assemble_coupled(m, a, 1.0)
    n = s.n_free
    A = s.matrix.toarray()
    ka, mm_top, mm_bot, k = A[:n, :n], A[:n, n:], A[n:, :n], A[n:, n:]
    for blk in (ka, k, mm_bot):
        assert np.allclose(blk, blk.T, atol=1e-14)
    assert np.allclose(mm_top, -mm_bot.T, atol=1e-14)
    assert s.free_dof_map(0)[0] == "u" and s.free_dof_map(n)[0] == "z"
    assert s.free_dof_map(n + 1)[1] == s.free_vertices[1]


def test_coercivity_witness():
    rng = np.random.default_rng(3)
    m = bisect(build_uniform_triangle_mesh(4), rng.choice(32, 5, replace=False))
    a = rng.uniform(1e-4, 1, m.n_elements)
    s = assemble_coupled(m, a, 1.0)
    free = s.free_vertices
    for _ in range(20):
        x = rng.standard_normal(2 * s.n_free)
        u = np.zeros(m.n_vertices)
        z = np.zeros(m.n_vertices)
        u[free], z[free] = x[:s.n_free], x[s.n_free:]
        g = m.gradient(u)
        energy = np.sum(a * np.sum(g ** 2, axis=1) * m.volumes) + h1_seminorm(m, z) ** 2
        quad = x @ (s.matrix @ x)
        assert quad > 0
        assert quad == pytest.approx(energy, rel=1e-10)


def test_nestedness_of_bilinear_action():
    rng = np.random.default_rng(4)
    coarse = build_uniform_triangle_mesh(3)
    a = rng.uniform(0.1, 1, coarse.n_elements)
    fine = bisect(coarse, rng.choice(coarse.n_elements, 6, replace=False))
    u = rng.standard_normal(coarse.n_vertices)
    uf = fine.prolong(u)
    kc, mc = stiffness_and_mass(coarse, a)
    kf, mf = stiffness_and_mass(fine, a[fine.parent_of])
    assert uf @ (kf @ uf) == pytest.approx(u @ (kc @ u), rel=1e-12)
    assert uf @ (mf @ uf) == pytest.approx(u @ (mc @ u), rel=1e-12)


def test_residual_and_galerkin_consistency():
    p = example2(1e-6)
    m = p.initial_mesh(2 ** 14)
    s = assemble_coupled(m, p.alpha, p.d)
    sol = solve_coupled(s)
    assert sol.residual <= 1e-10
    x = np.concatenate([sol.u.values[s.free_vertices], sol.z.values[s.free_vertices]])
    assert np.linalg.norm(s.matrix @ x - s.rhs) <= 1e-10 * np.linalg.norm(s.rhs)
    assert np.max(np.abs(sol.u.values - p.exact_u(m.vertices))) <= 1e-3
    assert np.all(sol.u.values[m.boundary_vertex_flags] == 0)


def test_rejects_bad_inputs():
    m = build_uniform_interval(4)
    with pytest.raises(ValueError):
        assemble_coupled(m, [1, 1, 0, 1], 1.0)
    with pytest.raises(ValueError):
        assemble_coupled(m, -1.0, 1.0)
    with pytest.raises(ValueError):
        assemble_coupled(build_uniform_interval(1), 1.0, 1.0)
    with pytest.raises(ValueError):
        NodalField(m, np.zeros(3))
    with pytest.raises(ValueError):
        NodalField(m, np.ones(5), dirichlet_zero=True)
    with pytest.raises(ValueError):
        assemble_weighted_mass(m, 0.0, np.zeros(5))


def test_weighted_mass_identity_and_scaling():
    rng = np.random.default_rng(5)
    m = build_uniform_triangle_mesh(3)
    z = rng.standard_normal(m.n_vertices)
    assert np.allclose(reconstruct_control(m, 1.0, z).values, z, atol=1e-12)
    assert np.allclose(reconstruct_control(m, 0.2, z).values, z / 0.2, rtol=1e-10)


def test_weighted_mass_two_elements_by_hand():
    m = build_uniform_interval(2)
    a1, a2, h = 0.5, 2.0, 0.5
    Mw = np.array([[a1 * h / 3, a1 * h / 6, 0],
                   [a1 * h / 6, (a1 + a2) * h / 3, a2 * h / 6],
                   [0, a2 * h / 6, a2 * h / 3]])
    rhs = np.array([h / 2, h, h / 2])
    expected = np.linalg.solve(Mw, rhs)
    s = assemble_weighted_mass(m, [a1, a2], np.ones(3))
    assert np.allclose(s.matrix.toarray(), Mw, atol=1e-15)
    f = reconstruct_control(m, [a1, a2], np.ones(3))
    assert np.allclose(f.values, expected, rtol=1e-12)


def test_interpolation_of_linear_is_exact():
    m = bisect(build_uniform_triangle_mesh(2), {0, 3})
    g = AnalyticFunction(lambda x: 1 + 2 * x[:, 0] - x[:, 1],
                         lambda x: np.tile([2.0, -1.0], (len(x), 1)))
    f = interpolate(m, g)
    assert l2_norm(m, f, g) <= 1e-14
    assert h1_seminorm(m, f, g) <= 1e-13
    assert h1_seminorm(m, f) == pytest.approx(np.sqrt(5.0), rel=1e-13)


def test_sine_norm():
    m = build_uniform_interval(64)
    assert l2_norm(m, AnalyticFunction(lambda x: np.sin(np.pi * x[:, 0]))) == pytest.approx(
        1 / np.sqrt(2), rel=1e-12)


def test_disc_indicator_area():
    m = build_uniform_triangle_mesh(64)
    area = l2_norm(m, example3().d) ** 2
    assert area == pytest.approx(np.pi * 0.01, rel=0.02)


@settings(max_examples=10, deadline=None)
@given(c=st.floats(1e-6, 1.0))
def test_element_field_broadcast(c):
    m = build_uniform_interval(3)
    f = ElementField(m, c)
    assert f.values.shape == (3,) and np.all(f.values == c)
