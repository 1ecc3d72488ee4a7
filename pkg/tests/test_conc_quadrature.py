import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscistrip.conc_quadrature import (QuadSpec, boundary_integral, conc_convergence_table,
                                       conc_integral, fitted_rate, limit_integral,
                                       monte_carlo_conc_integral, potential_operator_gap,
                                       strip_lq_norm, strip_nodes)
from oscistrip.discretization.fem import FemSystem, make_potential
from oscistrip.errors import ConfigError
from oscistrip.geometry import Circle, Ellipse, StripRegion, constant_profile, two_plus_cos

ONE = lambda p: np.ones(len(p))  # noqa: E731
X = lambda p: p[:, 0]  # noqa: E731
ZERO = lambda p: np.zeros(len(p))  # noqa: E731


def region(eps, prof=None, curve=None):
    return StripRegion(curve or Circle(), prof or two_plus_cos(), eps)


def test_annulus_closed_forms():
    # (1/eps) * pi (1 - (1 - d)^2) for an annulus of depth d
    assert conc_integral(region(0.1, constant_profile(1.0)), ONE, ONE) == pytest.approx(
        2 * math.pi - 0.1 * math.pi, abs=1e-12)
    assert conc_integral(region(0.05, constant_profile(2.0)), ONE, ONE) == pytest.approx(
        4 * math.pi - 4 * math.pi * 0.05, abs=1e-12)
    assert conc_integral(region(0.1), ZERO, ONE) == 0.0


def test_oscillating_strip_area_closed_form():
    # area / eps = int g - (eps / 2) int g^2 with int g = 4 pi, int g^2 = 9 pi
    for eps in (0.2, 0.1, 0.05):
        assert conc_integral(region(eps), ONE, ONE) == pytest.approx(
            4 * math.pi - 4.5 * math.pi * eps, abs=1e-11)


def test_boundary_integral_examples():
    c = Circle()
    two = lambda s: np.full(np.shape(s), 2.0)  # noqa: E731
    unit = lambda s: np.ones(np.shape(s))  # noqa: E731
    assert boundary_integral(c, two, ONE, ONE) == pytest.approx(4 * math.pi, abs=1e-12)
    assert boundary_integral(c, unit, X, ONE) == pytest.approx(0.0, abs=1e-12)
    assert boundary_integral(c, unit, X, X) == pytest.approx(math.pi, abs=1e-12)


def test_convergence_table_default_profile():
    rows = conc_convergence_table([region(e) for e in (0.2, 0.1, 0.05, 0.025)], ONE, ONE)
    errs = [r[3] for r in rows]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < errs[0] / 4
    assert rows[0][2] == pytest.approx(4 * math.pi, abs=1e-12)
    assert math.isnan(rows[0][4])


def test_convergence_table_flat_profile_rate_one():
    rows = conc_convergence_table([region(e, constant_profile(1.0)) for e in (0.2, 0.1, 0.05)],
                                  ONE, ONE)
    for eps, val, _, err, rate in rows:
        assert val == pytest.approx(2 * math.pi - math.pi * eps, abs=1e-12)
    assert rows[-1][4] == pytest.approx(1.0, abs=1e-9)
    zero = conc_convergence_table([region(e) for e in (0.2, 0.1)], ZERO, ONE)
    assert all(r[3] == 0.0 for r in zero)


def test_convergence_table_rejects_ascending_ladder():
    with pytest.raises(ConfigError):
        conc_convergence_table([region(0.1), region(0.2)], ONE, ONE)


def test_fitted_rate_recovers_power():
    eps = np.array([0.2, 0.1, 0.05])
    assert fitted_rate(eps, 3.0 * eps**1.5) == pytest.approx(1.5)


def test_strip_lq_norm():
    flat = region(0.1, constant_profile(1.0))
    assert strip_lq_norm(flat, ONE, 2) == pytest.approx(math.sqrt(2 * math.pi - 0.1 * math.pi))
    assert strip_lq_norm(flat, ZERO, 4) == 0.0
    assert strip_lq_norm(region(1e-4, constant_profile(1.0)), X, 2) == pytest.approx(
        math.sqrt(math.pi), rel=1e-3)
    with pytest.raises(ConfigError):
        strip_lq_norm(flat, ONE, 3)


def test_quadspec_validation():
    with pytest.raises(ConfigError):
        QuadSpec(n_s=1)
    with pytest.raises(ConfigError):
        QuadSpec(s_panel_factor=0.5)


def test_weak_star_convergence_of_g_eps():
    h = lambda s: 1.0 + np.sin(s) ** 2  # noqa: E731
    s = np.linspace(0, 2 * math.pi, 200_001)
    ref = np.trapezoid(2.0 * h(s), s)
    gaps = [abs(np.trapezoid(region(e).g_eps(s) * h(s), s) - ref) for e in (0.3, 0.13, 0.07, 0.03)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_lq_bound_uniform_across_ladder(coarse_base):
    # (1/eps) int |v|^2 / ||v||_H1^2 for smooth v stays bounded
    ratios = []
    for f in (ONE, X, lambda p: np.exp(p[:, 1])):
        v = coarse_base.interpolate(f)
        h1 = coarse_base.norms.h1(v)
        for e in (0.2, 0.1, 0.05, 0.025):
            ratios.append(strip_lq_norm(region(e), f, 2) ** 2 / h1**2)
    assert max(ratios) < 10.0


trig = st.lists(st.floats(-2, 2), min_size=4, max_size=4)


def _field(c):
    return lambda p: c[0] + c[1] * np.cos(p[:, 0]) + c[2] * np.sin(2 * p[:, 1]) + c[3] * p[:, 0] * p[:, 1]


@settings(max_examples=25, deadline=None)
@given(trig, trig, st.floats(-3, 3), st.floats(-3, 3))
def test_symmetry_and_linearity(c1, c2, a, b):
    reg = region(0.1)
    nodes = strip_nodes(reg)
    h1, h2, phi = _field(c1), _field(c2), _field(c2[::-1])
    assert conc_integral(reg, h1, phi, nodes=nodes) == conc_integral(reg, phi, h1, nodes=nodes)
    lhs = conc_integral(reg, lambda p: a * h1(p) + b * h2(p), phi, nodes=nodes)
    rhs = a * conc_integral(reg, h1, phi, nodes=nodes) + b * conc_integral(reg, h2, phi,
                                                                           nodes=nodes)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_monte_carlo_oracle_on_ellipse():
    reg = StripRegion(Ellipse(1.2, 0.8), two_plus_cos(), 0.05)
    h = lambda p: 1.0 + p[:, 0] ** 2  # noqa: E731
    q = conc_integral(reg, h, ONE)
    m, se = monte_carlo_conc_integral(reg, h, ONE, 400_000, np.random.default_rng(3))
    assert abs(q - m) <= 3.5 * se


def test_potential_operator_gap(coarse_base):
    zero = make_potential("zero")
    s_eps = FemSystem(coarse_base, 0.1, two_plus_cos(), potential=zero)
    s_0 = FemSystem(coarse_base, 0.0, two_plus_cos(), potential=zero)
    assert potential_operator_gap(s_eps, s_0) == 0.0
    one = make_potential("constant", c=1.0)
    lim = FemSystem(coarse_base, 0.0, two_plus_cos(), potential=one)
    gaps = [potential_operator_gap(FemSystem(coarse_base, e, two_plus_cos(), potential=one), lim)
            for e in (0.2, 0.1)]
    assert gaps[1] < gaps[0]


def test_limit_integral_uses_mean_profile():
    assert limit_integral(region(0.1), ONE, ONE) == pytest.approx(4 * math.pi, abs=1e-12)
