import csv

import numpy as np
import pytest

from oscistrip.attractors import (AttractorSample, hausdorff_semidist, initial_grid,
                                  patch_distance, sample_attractor, semicontinuity_report,
                                  step_map_unstable, tangency_deviation, tangency_order,
                                  two_sided_distance, unstable_manifold_patch,
                                  write_semicontinuity_csv)
from oscistrip.equilibria import find_all_equilibria
from oscistrip.errors import ConfigError


@pytest.fixture(scope="module")
def limit_points(bistable_pair):
    return find_all_equilibria(bistable_pair[1])


@pytest.fixture(scope="module")
def saddle_patch(bistable_pair, limit_points):
    return unstable_manifold_patch(bistable_pair[1], limit_points[1], delta=0.1, t_grow=5.0)


# ------------------------------------------------------------ distances


def test_semidistance_trivial_cases(coarse_base, rng):
    norms = coarse_base.norms
    X = rng.standard_normal((coarse_base.mesh.n_vertices, 4))
    # Gram-based distances cancel terms of size h1(x)^2
    tol = 1e-7 * norms.h1(X).max()
    assert hausdorff_semidist(X, X, norms) == pytest.approx(0.0, abs=tol)
    # a subset is at semidistance zero from its superset, not conversely
    assert hausdorff_semidist(X[:, :2], X, norms) == pytest.approx(0.0, abs=tol)
    far = hausdorff_semidist(X, X[:, :1], norms)
    assert far == pytest.approx(norms.h1(X - X[:, :1]).max(), rel=1e-8)
    assert two_sided_distance(X[:, :1], X[:, 1:2], norms) == pytest.approx(
        2 * norms.h1(X[:, 0] - X[:, 1]), rel=1e-10)


def test_polyline_distance_uses_segments(coarse_base, rng):
    norms = coarse_base.norms
    a, b = rng.standard_normal((2, coarse_base.mesh.n_vertices))
    curve = np.column_stack([a, b])
    mid = 0.5 * (a + b)[:, None]
    B = AttractorSample(np.zeros((len(a), 0)), [], [curve])
    assert hausdorff_semidist(mid, B, norms) == pytest.approx(0.0, abs=1e-7 * norms.h1(a))
    assert hausdorff_semidist(mid, B, norms, polyline=False) == pytest.approx(
        0.5 * norms.h1(a - b), rel=1e-8)


def test_semidistance_rejects_wrong_mesh(coarse_base):
    with pytest.raises(ConfigError):
        hausdorff_semidist(np.zeros((3, 1)), np.zeros((3, 1)), coarse_base.norms)


# ------------------------------------------------------------ manifolds


def test_stable_point_has_empty_patch(bistable_pair, limit_points):
    fem = bistable_pair[1]
    patch = unstable_manifold_patch(fem, limit_points[0], delta=0.1)
    assert patch.empty and tangency_deviation(patch, fem.norms) == 0.0
    other = unstable_manifold_patch(fem, limit_points[2], delta=0.1)
    assert patch_distance(patch, other, fem.norms) == pytest.approx(
        fem.norms.h1(limit_points[0].state - limit_points[2].state))


def test_saddle_step_map_multiplier(bistable_pair, limit_points):
    fem = bistable_pair[1]
    mult, dirs = step_map_unstable(fem, limit_points[1].state, 0.01, 1)
    assert mult[0] > 1.0 and limit_points[1].spectrum[0] < 0
    assert fem.norms.h1(dirs[:, 0]) == pytest.approx(1.0)


def test_saddle_patch_local_part(bistable_pair, saddle_patch):
    fem = bistable_pair[1]
    norms = fem.norms
    assert len(saddle_patch.local) == 2 and not saddle_patch.empty
    for c in saddle_patch.local:
        d = norms.h1(c - saddle_patch.base[:, None])
        assert d.max() == pytest.approx(0.1, rel=1e-9)  # clipped on the sphere
        assert np.all(np.diff(fem.energy(c)) <= 1e-12)  # gradient flow leaves downhill
    assert tangency_deviation(saddle_patch, norms) < 0.01
    assert len(saddle_patch.curves("all")) == 2
    with pytest.raises(ConfigError):
        saddle_patch.curves("middle")


def test_saddle_patch_heads_to_wells(bistable_pair, limit_points, saddle_patch):
    norms = bistable_pair[1].norms
    ends = np.column_stack([c[:, -1] for c in saddle_patch.extension])
    wells = np.column_stack([limit_points[0].state, limit_points[2].state])
    D = norms.distances(ends, wells)
    assert sorted(D.min(axis=1)) == pytest.approx([0.0, 0.0], abs=0.05)


def test_tangency_superlinear(bistable_pair, limit_points):
    devs, slope = tangency_order(bistable_pair[1], limit_points[1], (0.1, 0.05, 0.025))
    assert np.all(np.diff(devs) < 0)
    assert slope >= 1.5


# ------------------------------------------------------------ samples


def test_initial_grid_shape(bistable_pair):
    fem = bistable_pair[1]
    G = initial_grid(fem, n_modes=2, radius=5.0)
    assert G.shape == (fem.n, 24)
    assert np.allclose(fem.norms.h1(G), 5.0)


def test_linear_sample_collapses(default_pair):
    fem = default_pair[1]
    G = initial_grid(fem, n_modes=1, coefficients=(-1.0, 1.0), radius=1.0)
    S = sample_attractor(fem, G, t_transient=10.0, t_sample=(0.0, 1.0), dt=0.05)
    assert len(S) == 4 and S.provenance == ["trajectory-tail"] * 4
    assert S.max_h1(fem.norms) <= 1e-4


def test_empty_grid_rejected(default_pair):
    fem = default_pair[1]
    with pytest.raises(ConfigError):
        sample_attractor(fem, np.zeros((fem.n, 0)))


def test_semicontinuity_report_and_csv(bistable_pair, limit_points, saddle_patch, tmp_path):
    fem = bistable_pair[1]
    limit = AttractorSample(np.column_stack([p.state for p in limit_points]),
                            ["equilibrium"] * 3, saddle_patch.curves("all"))
    rows = semicontinuity_report({0.1: limit}, limit, fem.norms,
                                 {0.1: [saddle_patch]}, [saddle_patch])
    assert np.allclose(rows[0], (0.1, 0.0, 0.0, 0.0), atol=1e-6)
    path = write_semicontinuity_csv(tmp_path / "semi.csv", rows, n_patches=1)
    with path.open() as fh:
        header = next(csv.reader(fh))
    assert header == ["epsilon", "upper_semidist", "lower_semidist", "manifold_dist_eq_0"]
