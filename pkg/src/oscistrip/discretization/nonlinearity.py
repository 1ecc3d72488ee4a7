"""Scalar reaction terms with globally bounded derivatives."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from ..errors import ConfigError


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    primitive: Callable[[np.ndarray], np.ndarray]
    dissipative_from: float = np.inf  # f(u) u < 0 for |u| >= this
    is_zero: bool = False

    def __call__(self, u):
        return self.f(u)

    def bound(self, half_width=50.0, n=200_001):
        """Sampled ``sup |f| + |f'| + |f''|`` on ``[-half_width, half_width]``."""
        u = np.linspace(-half_width, half_width, n)
        return float(np.max(np.abs(self.f(u)) + np.abs(self.df(u)) + np.abs(self.d2f(u))))

    def lipschitz(self, half_width=50.0, n=200_001):
        u = np.linspace(-half_width, half_width, n)
        return float(np.max(np.abs(self.df(u))))


def zero():
    z = lambda u: np.zeros_like(np.asarray(u, dtype=float))
    return Nonlinearity("zero", z, z, z, z, is_zero=True)


def constant(c=1.0):
    c = float(c)
    return Nonlinearity(
        "constant",
        f=lambda u: np.full_like(np.asarray(u, dtype=float), c),
        df=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        d2f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        primitive=lambda u: c * np.asarray(u, dtype=float),
    )


def _hermite5(p0, m0, a0, p1, h):
    """Quintic on ``[0, h]`` matching value/slope/curvature at 0 and a flat
    plateau ``p1`` (zero slope and curvature) at ``h``."""
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    c = np.linalg.solve(A, [p0, m0 * h, a0 * h * h, p1, 0.0, 0.0])
    return Polynomial(c, domain=[0.0, h], window=[0.0, 1.0])


def bistable(inner=2.0, outer=3.0, plateau=None):
    """``u - u^3`` for ``|u| <= inner``, blended by an odd quintic to a
    constant beyond ``outer``; C2 with bounded ``f, f', f''``."""
    a, b = float(inner), float(outer)
    if not 1.0 < a < b:
        raise ConfigError("cutoff bounds must satisfy 1 < inner < outer")
    fa, dfa, d2fa = a - a**3, 1.0 - 3.0 * a**2, -6.0 * a
    if plateau is None:
        plateau = fa + 0.5 * dfa * (b - a) + d2fa * (b - a) ** 2 / 24.0
    q = _hermite5(fa, dfa, d2fa, plateau, b - a)
    dq, d2q, iq = q.deriv(), q.deriv(2), q.integ()
    prim_a = 0.5 * a**2 - 0.25 * a**4
    prim_b = prim_a + iq(b - a) - iq(0.0)

    def _pieces(u):
        u = np.asarray(u, dtype=float)
        x = np.abs(u)
        sg = np.where(u < 0, -1.0, 1.0)
        return u, x, sg, x <= a, (x > a) & (x < b)

    def f(u):
        u = np.asarray(u, dtype=float)
        if u.size and np.abs(u).max() <= a:
            return u - u * u * u
        u, x, sg, core, blend = _pieces(u)
        out = np.where(core, u - u**3, sg * plateau)
        return np.where(blend, sg * q(x - a), out)

    def df(u):
        u = np.asarray(u, dtype=float)
        if u.size and np.abs(u).max() <= a:
            return 1.0 - 3.0 * u * u
        u, x, sg, core, blend = _pieces(u)
        out = np.where(core, 1.0 - 3.0 * u**2, 0.0)
        return np.where(blend, dq(x - a), out)

    def d2f(u):
        u, x, sg, core, blend = _pieces(u)
        out = np.where(core, -6.0 * u, 0.0)
        return np.where(blend, sg * d2q(x - a), out)

    def primitive(u):
        u, x, sg, core, blend = _pieces(u)
        out = np.where(core, 0.5 * u**2 - 0.25 * u**4, prim_b + plateau * (x - b))
        return np.where(blend, prim_a + iq(x - a) - iq(0.0), out)

    return Nonlinearity("bistable", f, df, d2f, primitive, dissipative_from=1.0 + 1e-12)


def make_nonlinearity(name, **params):
    presets = {"zero": zero, "constant": constant, "bistable": bistable}
    if name not in presets:
        raise ConfigError(f"unknown nonlinearity preset {name!r}")
    return presets[name](**params)
