import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscistrip.conc_quadrature import conc_integral
from oscistrip.discretization.fem import (FemSystem, assemble_boundary_potential,
                                          count_below, inertia, make_potential,
                                          mesh_quad_spec, pencil_lowest, read_coo,
                                          spectral_gap, write_coo)
from oscistrip.discretization.mesh import Mesh, generate_disk_mesh
from oscistrip.discretization.nonlinearity import bistable, constant, make_nonlinearity, zero
from oscistrip.errors import ConfigError, MeshError
from oscistrip.geometry import constant_profile, two_plus_cos


# ---------------------------------------------------------------- mesh


def test_disk_mesh_boundary_on_circle(coarse_mesh):
    r = np.linalg.norm(coarse_mesh.vertices[coarse_mesh.boundary_vertices], axis=1)
    assert np.allclose(r, 1.0, atol=1e-14)


def test_disk_mesh_area_and_perimeter(coarse_mesh):
    assert coarse_mesh.areas().sum() == pytest.approx(np.pi, abs=2e-3)
    assert coarse_mesh.boundary_length() == pytest.approx(2 * np.pi, rel=1e-12)
    assert coarse_mesh.chord_length() == pytest.approx(2 * np.pi, rel=1e-3)
    coarse_mesh.validate()


def test_boundary_layer_is_resolved(coarse_mesh):
    # elements touching the strip are no coarser than a few h_boundary
    assert coarse_mesh.near_boundary_diameter(0.05) <= 4 * coarse_mesh.h_boundary


def test_mesh_round_trip(coarse_mesh, tmp_path):
    path = tmp_path / "mesh.txt"
    coarse_mesh.save(path)
    back = Mesh.load(path)
    assert np.array_equal(back.vertices, coarse_mesh.vertices)
    assert np.array_equal(back.triangles, coarse_mesh.triangles)
    assert np.array_equal(back.boundary_edge_s, coarse_mesh.boundary_edge_s)
    assert back.h_boundary == coarse_mesh.h_boundary


def test_bad_mesh_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("nonsense\n")
    with pytest.raises(MeshError, match="header"):
        Mesh.load(path)


def test_inverted_triangle_rejected():
    m = generate_disk_mesh(1.0, 0.4, 0.2)
    m.triangles = m.triangles[:, ::-1].copy()
    with pytest.raises(MeshError):
        m.validate()


def test_locate_reproduces_vertices(coarse_mesh):
    tri, bary = coarse_mesh.locate(coarse_mesh.vertices[:50])
    rebuilt = np.einsum("ij,ijk->ik", bary, coarse_mesh.vertices[coarse_mesh.triangles[tri]])
    assert np.allclose(rebuilt, coarse_mesh.vertices[:50], atol=1e-12)


# ------------------------------------------------------------ matrices


def test_stiffness_kills_constants(coarse_base):
    one = np.ones(coarse_base.mesh.n_vertices)
    assert np.abs(coarse_base.K @ one).max() < 1e-12


def test_mass_integrates_area(coarse_base):
    one = np.ones(coarse_base.mesh.n_vertices)
    assert one @ coarse_base.M @ one == pytest.approx(coarse_base.mesh.areas().sum(), rel=1e-13)


def test_stiffness_exact_on_linears(coarse_base):
    # int |grad x|^2 = polygon area for the P1-exact field x
    x = coarse_base.mesh.vertices[:, 0]
    assert x @ coarse_base.K @ x == pytest.approx(coarse_base.mesh.areas().sum(), rel=1e-12)


def test_boundary_potential_integrates_weight(coarse_base):
    one = np.ones(coarse_base.mesh.n_vertices)
    mesh, curve = coarse_base.mesh, coarse_base.curve
    B1 = assemble_boundary_potential(mesh, curve, lambda s: np.ones_like(s))
    B2 = assemble_boundary_potential(mesh, curve, lambda s: np.full_like(s, 2.0))
    assert one @ B1 @ one == pytest.approx(2 * np.pi, rel=1e-12)
    assert one @ B2 @ one == pytest.approx(4 * np.pi, rel=1e-12)


def test_strip_potential_matches_conc_integral(coarse_base):
    prof = two_plus_cos()
    fem = FemSystem(coarse_base, 0.1, prof, potential=make_potential("constant", c=1.0))
    one = np.ones(fem.n)
    ref = conc_integral(fem.region, lambda p: np.ones(len(p)), lambda p: np.ones(len(p)),
                        mesh_quad_spec(coarse_base.mesh))
    assert one @ fem.P @ one == pytest.approx(ref, abs=1e-10)


def test_strip_potential_quadratic_field(coarse_base):
    # P1 interpolation error of x^2 is O(h^2) inside the fine strip
    prof = two_plus_cos()
    fem = FemSystem(coarse_base, 0.1, prof, potential=make_potential("constant", c=1.0))
    x = coarse_base.mesh.vertices[:, 0]
    ref = conc_integral(fem.region, lambda p: p[:, 0], lambda p: p[:, 0],
                        mesh_quad_spec(coarse_base.mesh))
    assert x @ fem.P @ x == pytest.approx(ref, rel=5e-3)


def test_coo_round_trip(coarse_base, tmp_path):
    path = tmp_path / "K.coo"
    write_coo(coarse_base.K, path)
    back = read_coo(path)
    assert abs(back - coarse_base.K).max() == 0.0


def test_potential_presets():
    p = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert np.allclose(make_potential("cosine", a=0.25, b=0.5)(p), [0.75, -0.25])
    with pytest.raises(ConfigError):
        make_potential("nope")


def test_negative_epsilon_rejected(coarse_base):
    with pytest.raises(ConfigError):
        FemSystem(coarse_base, -0.1, two_plus_cos())


# --------------------------------------------------------- nonlinearity


def test_bistable_core_and_bound():
    f = bistable()
    u = np.linspace(-2, 2, 101)
    assert np.allclose(f(u), u - u**3)
    assert np.isfinite(f.bound()) and f.bound() < 100
    big = np.linspace(3, 50, 50)
    assert np.allclose(f(big), f(big[0]))
    assert np.allclose(f.df(big), 0.0)


def test_bistable_dissipative():
    f = bistable()
    u = np.concatenate([np.linspace(-50, -1.001, 500), np.linspace(1.001, 50, 500)])
    assert np.all(f(u) * u < 0)


@pytest.mark.parametrize("knot", [2.0, 3.0, -2.0, -3.0])
def test_bistable_c2_at_knots(knot):
    # the third derivative jumps by O(100) at the knots, so probe very close
    f = bistable()
    h = 1e-10
    for g in (f.f, f.df, f.d2f):
        assert g(np.array([knot - h]))[0] == pytest.approx(g(np.array([knot + h]))[0], abs=1e-7)


@given(st.floats(-6, 6))
@settings(max_examples=60, deadline=None)
def test_bistable_derivatives_fd(u0):
    f = bistable()
    h = 1e-5
    u = np.array([u0 - h, u0, u0 + h])
    assert (f(u)[2] - f(u)[0]) / (2 * h) == pytest.approx(f.df(u)[1], abs=1e-5)
    # only C2: the central difference of f' is O(h) across a knot
    assert (f.df(u)[2] - f.df(u)[0]) / (2 * h) == pytest.approx(f.d2f(u)[1], abs=2e-3)
    assert (f.primitive(u)[2] - f.primitive(u)[0]) / (2 * h) == pytest.approx(f(u)[1], abs=1e-5)


def test_nonlinearity_presets():
    assert make_nonlinearity("zero").is_zero
    assert make_nonlinearity("constant", c=2.0)(np.zeros(3)).tolist() == [2.0] * 3
    with pytest.raises(ConfigError):
        bistable(inner=3.0, outer=2.0)
    with pytest.raises(ConfigError):
        make_nonlinearity("cubic")


def test_constant_load_is_boundary_mass(coarse_base):
    prof = constant_profile(1.0)
    lim = FemSystem(coarse_base, 0.0, prof, nonlinearity=constant(3.0))
    one = np.ones(lim.n)
    B = lim.nodes.form(np.ones(len(lim.nodes)))
    assert np.allclose(lim.apply_F(np.zeros(lim.n)), 3.0 * (B @ one), atol=1e-14)


def test_jacobian_at_zero_is_unit_potential(coarse_base):
    prof = two_plus_cos()
    for eps in (0.1, 0.0):
        fem = FemSystem(coarse_base, eps, prof, nonlinearity=bistable(),
                        potential=make_potential("constant", c=1.0))
        assert abs(fem.apply_Fprime(np.zeros(fem.n)) - fem.P).max() < 1e-13


def test_apply_F_columnwise(bistable_pair, rng):
    fem = bistable_pair[0]
    U = rng.standard_normal((fem.n, 3))
    stacked = fem.apply_F(U)
    for j in range(3):
        assert np.allclose(stacked[:, j], fem.apply_F(U[:, j]))


def test_energy_gradient_is_residual(bistable_pair, rng):
    fem = bistable_pair[1]
    u = 0.3 * rng.standard_normal(fem.n)
    v = rng.standard_normal(fem.n)
    h = 1e-6
    fd = (fem.energy(u + h * v) - fem.energy(u - h * v)) / (2 * h)
    assert fd == pytest.approx(v @ fem.residual(u), rel=1e-6)


# --------------------------------------------------------------- norms


def test_norms_of_constant(coarse_base):
    one = np.ones(coarse_base.mesh.n_vertices)
    area = coarse_base.mesh.areas().sum()
    assert coarse_base.norms.h1(one) == pytest.approx(np.sqrt(area))
    assert coarse_base.norms.l2(one) == pytest.approx(np.sqrt(area))


def test_riesz_identity(coarse_base, rng):
    norms = coarse_base.norms
    u = rng.standard_normal(coarse_base.mesh.n_vertices)
    assert norms.dual(norms.N @ u) == pytest.approx(norms.h1(u), rel=1e-10)
    assert np.allclose(norms.riesz(norms.N @ u), u)


def test_pairwise_distances(coarse_base, rng):
    norms = coarse_base.norms
    U = rng.standard_normal((coarse_base.mesh.n_vertices, 3))
    D = norms.distances(U, U)
    # Gram-based: diagonal cancels terms of size h1(u)^2
    assert np.allclose(np.diag(D), 0.0, atol=1e-7 * norms.h1(U).max())
    assert D[0, 1] == pytest.approx(norms.h1(U[:, 0] - U[:, 1]), rel=1e-10)


# ---------------------------------------------------- spectra and inertia


def test_coercivity_unit_for_zero_potential(coarse_base):
    fem = FemSystem(coarse_base, 0.1, two_plus_cos(), lam=1.0)
    assert fem.coercivity_constant() == pytest.approx(1.0, abs=1e-8)
    assert count_below(fem.S, fem.norms.N, 1.0 - 1e-6) == 0


def test_coercivity_positive_with_potential(default_pair):
    fem = default_pair[0].replace(lam=0.5)
    # V=0 here: S = K + 0.5 M, pencil minimum is 0.5 (constants)
    assert fem.coercivity_constant() == pytest.approx(0.5, abs=1e-8)


def test_inertia_diagonal():
    import scipy.sparse as sp

    A = sp.diags([-2.0, -1.0, 0.0, 3.0, 4.0])
    assert inertia(A + sp.eye(5) * 1e-20) == (2, 1, 2)


def test_inertia_counts_laplacian_modes(coarse_base):
    # Neumann Laplacian pencil: eigenvalues 0 and then about 3.39 (j'_{1,1}^2)
    K, N = coarse_base.K, coarse_base.norms.N
    assert count_below(K, coarse_base.M, 3.0) == 1
    assert count_below(K, coarse_base.M, 3.5) == 3
    vals, _ = pencil_lowest(K, coarse_base.norms, 3, B=coarse_base.M)
    assert vals[0] == pytest.approx(0.0, abs=1e-8)
    assert vals[1] == pytest.approx(1.8412**2, rel=5e-3)


def test_spectral_gap_of_shifted_pencil(coarse_base):
    N = coarse_base.norms.N
    assert spectral_gap(N * 1.0 - 0.25 * N, N) == pytest.approx(0.75, rel=2e-3)


def test_stepper_cached(default_pair):
    fem = default_pair[0]
    assert fem.stepper(0.01) is fem.stepper(0.01)
    assert fem.linear().nonlinearity.is_zero
    assert zero().is_zero
