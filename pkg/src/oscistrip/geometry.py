"""Boundary curves, oscillation profiles and the oscillating boundary strip.

A strip of the domain is described in normal coordinates ``(s, t)``: ``s`` is
arclength along the boundary curve and ``t >= 0`` the depth measured along the
inward normal, so that a point of the strip is ``zeta(s) - t * N(s)``.  The
strip at scale ``eps`` keeps the points with ``t < eps * g(s, s / eps)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ellipeinc

from .errors import DomainError, NumericalError

_GL32 = np.polynomial.legendre.leggauss(32)


class BoundaryCurve:
    """Closed, counter-clockwise, unit-speed C2 curve.

    Subclasses provide ``period``, ``eval``, ``d1`` and ``d2``; everything else
    is derived.  All methods are vectorized over ``s``.
    """

    period: float
    name = "curve"
    n_table = 4096

    def eval(self, s):
        raise NotImplementedError

    def d1(self, s):
        raise NotImplementedError

    def d2(self, s):
        raise NotImplementedError

    def normal(self, s):
        """Outward unit normal ``(y'(s), -x'(s))``."""
        d = self.d1(s)
        return np.stack([d[..., 1], -d[..., 0]], axis=-1)

    def curvature_factor(self, s):
        """``x' y'' - y' x''``; equals the signed curvature for unit speed."""
        d, dd = self.d1(s), self.d2(s)
        return d[..., 0] * dd[..., 1] - d[..., 1] * dd[..., 0]

    def max_curvature(self):
        s = np.linspace(0.0, self.period, self.n_table, endpoint=False)
        return float(np.max(self.curvature_factor(s)))

    def wrap(self, s):
        return np.mod(s, self.period)

    # closest-point projection -------------------------------------------

    def _table(self):
        tab = getattr(self, "_table_cache", None)
        if tab is None:
            s = np.linspace(0.0, self.period, self.n_table, endpoint=False)
            tab = (s, cKDTree(self.eval(s)))
            self._table_cache = tab
        return tab

    def project(self, points, tol=1e-13, max_iter=30):
        """Arclength of the closest boundary point for each row of ``points``.

        Newton iteration on ``(xi - zeta(s)) . zeta'(s) = 0`` started from the
        nearest entry of a precomputed arclength table.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        s_tab, tree = self._table()
        _, idx = tree.query(points)
        s = s_tab[idx]
        for it in range(max_iter):
            diff = points - self.eval(s)
            d1 = self.d1(s)
            g = np.einsum("ij,ij->i", diff, d1)
            dg = -1.0 + np.einsum("ij,ij->i", diff, self.d2(s))
            step = g / dg
            # a Newton step larger than a table cell means the start was poor
            h = self.period / self.n_table
            step = np.clip(step, -h, h)
            s = s - step
            if np.max(np.abs(step)) < tol * max(1.0, self.period):
                return self.wrap(s)
        raise NumericalError(
            "closest-point projection did not converge",
            iterations=max_iter,
            max_step=float(np.max(np.abs(step))),
            worst_point=points[int(np.argmax(np.abs(step)))].tolist(),
        )


class Circle(BoundaryCurve):
    name = "circle"

    def __init__(self, radius=1.0, center=(0.0, 0.0)):
        if radius <= 0:
            raise DomainError("radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)
        self.period = 2.0 * np.pi * self.radius

    def eval(self, s):
        a = np.asarray(s, dtype=float) / self.radius
        return self.center + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def d1(self, s):
        a = np.asarray(s, dtype=float) / self.radius
        return np.stack([-np.sin(a), np.cos(a)], axis=-1)

    def d2(self, s):
        a = np.asarray(s, dtype=float) / self.radius
        return -np.stack([np.cos(a), np.sin(a)], axis=-1) / self.radius

    def max_curvature(self):
        return 1.0 / self.radius

    def project(self, points, tol=None, max_iter=None):
        p = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        return self.wrap(self.radius * np.arctan2(p[:, 1], p[:, 0]))


class Ellipse(BoundaryCurve):
    """Ellipse ``(a cos th, b sin th)`` reparametrized by arclength.

    ``th(s)`` is obtained by Newton inversion of the incomplete elliptic
    integral of the second kind.
    """

    name = "ellipse"

    def __init__(self, a=1.2, b=0.8):
        if a <= 0 or b <= 0:
            raise DomainError("semi-axes must be positive")
        self.a, self.b = float(a), float(b)
        self._m = 1.0 - (self.a / self.b) ** 2
        self.period = float(self._arclength(2.0 * np.pi))

    def _arclength(self, th):
        return self.b * ellipeinc(th, self._m)

    def _speed(self, th):
        return np.sqrt((self.a * np.sin(th)) ** 2 + (self.b * np.cos(th)) ** 2)

    def theta(self, s):
        s = np.asarray(s, dtype=float)
        th = 2.0 * np.pi * s / self.period
        for _ in range(50):
            step = (self._arclength(th) - s) / self._speed(th)
            th = th - step
            # quadratic convergence stalls at rounding level, not at 1e-15
            if np.max(np.abs(step), initial=0.0) < 1e-13:
                break
        return th

    def eval(self, s):
        th = self.theta(s)
        return np.stack([self.a * np.cos(th), self.b * np.sin(th)], axis=-1)

    def d1(self, s):
        th = self.theta(s)
        v = self._speed(th)
        return np.stack([-self.a * np.sin(th) / v, self.b * np.cos(th) / v], axis=-1)

    def d2(self, s):
        th = self.theta(s)
        v = self._speed(th)
        dv = (self.a**2 - self.b**2) * np.sin(th) * np.cos(th) / v
        zt = np.stack([-self.a * np.sin(th), self.b * np.cos(th)], axis=-1)
        ztt = np.stack([-self.a * np.cos(th), -self.b * np.sin(th)], axis=-1)
        return (ztt / v[..., None] - zt * (dv / v**2)[..., None]) / v[..., None]

    def max_curvature(self):
        return max(self.a, self.b) / min(self.a, self.b) ** 2


def make_curve(name, **params):
    if name == "circle":
        return Circle(**params)
    if name == "ellipse":
        return Ellipse(**params)
    raise DomainError(f"unknown curve preset {name!r}")


# oscillation profiles -------------------------------------------------------


@dataclass(frozen=True)
class OscillationProfile:
    """``g(s, y)``, periodic in ``y`` with period ``l(s)``, with its bounds."""

    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    l: Callable[[np.ndarray], np.ndarray]
    g0: float
    g1: float
    l0: float
    l1: float
    name: str = "custom"
    mean: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (0 < self.g0 <= self.g1):
            raise DomainError("profile bounds must satisfy 0 < g0 <= g1")
        if not (0 < self.l0 <= self.l1):
            raise DomainError("period bounds must satisfy 0 < l0 <= l1")

    def __call__(self, s, y):
        return self.g(np.asarray(s, dtype=float), np.asarray(y, dtype=float))


def _const_period(value):
    return lambda s: np.full(np.shape(s), value, dtype=float)


def two_plus_cos():
    """``g(s, y) = 2 + cos(y)``, the purely periodic default."""
    return OscillationProfile(
        g=lambda s, y: 2.0 + np.cos(y) + 0.0 * s,
        l=_const_period(2.0 * np.pi),
        g0=1.0, g1=3.0, l0=2.0 * np.pi, l1=2.0 * np.pi,
        name="two-plus-cos",
        mean=lambda s: np.full(np.shape(s), 2.0),
    )


def cosine_profile(mean=1.0, amplitude=0.5):
    """``g(s, y) = mean + amplitude cos(y)``; ``two_plus_cos`` is ``(2, 1)``."""
    mean, amplitude = float(mean), float(amplitude)
    return OscillationProfile(
        g=lambda s, y: mean + amplitude * np.cos(y) + 0.0 * s,
        l=_const_period(2.0 * np.pi),
        g0=mean - abs(amplitude), g1=mean + abs(amplitude),
        l0=2.0 * np.pi, l1=2.0 * np.pi,
        name="cosine",
        mean=lambda s: np.full(np.shape(s), mean),
    )


def constant_profile(c=1.0):
    c = float(c)
    return OscillationProfile(
        g=lambda s, y: np.full(np.broadcast(s, y).shape, c),
        l=_const_period(1.0),
        g0=c, g1=c, l0=1.0, l1=1.0,
        name="constant",
        mean=lambda s: np.full(np.shape(s), c),
    )


def modulated_profile(base=2.0, amp_s=0.5, amp_y=1.0):
    """Amplitude-modulated profile ``base + amp_s sin(s) + amp_y cos(y)``."""
    return OscillationProfile(
        g=lambda s, y: base + amp_s * np.sin(s) + amp_y * np.cos(y),
        l=_const_period(2.0 * np.pi),
        g0=base - abs(amp_s) - abs(amp_y),
        g1=base + abs(amp_s) + abs(amp_y),
        l0=2.0 * np.pi, l1=2.0 * np.pi,
        name="modulated",
        mean=lambda s: base + amp_s * np.sin(s),
    )


def make_profile(name, **params):
    presets = {
        "two-plus-cos": two_plus_cos,
        "constant": constant_profile,
        "cosine": cosine_profile,
        "modulated": modulated_profile,
    }
    if name not in presets:
        raise DomainError(f"unknown profile preset {name!r}")
    return presets[name](**params)


def period_mean(g, l, s, tol=1e-12, max_doublings=12):
    """Mean of ``g(s, .)`` over ``[0, l(s)]`` by composite Gauss-Legendre.

    Starts with 32 nodes per period and doubles the panel count until two
    successive estimates agree to ``tol``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    period = np.asarray(l(s), dtype=float)
    x, w = _GL32
    prev = None
    panels = 1
    for _ in range(max_doublings):
        edges = np.arange(panels)[:, None]
        tau = (edges + 0.5 * (x[None, :] + 1.0)) / panels  # in [0, 1]
        tau = tau.ravel()
        vals = g(s[:, None], tau[None, :] * period[:, None])
        est = vals @ np.tile(w, panels) / (2.0 * panels)
        if prev is not None and np.max(np.abs(est - prev)) < tol:
            return est
        prev = est
        panels *= 2
    raise NumericalError("period mean did not converge", panels=panels)


def mu(profile, s):
    """Homogenized boundary coefficient: the period mean of ``g(s, .)``."""
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    out = period_mean(profile.g, profile.l, s)
    return float(out[0]) if scalar else out


# the strip -------------------------------------------------------------------


@dataclass(frozen=True)
class StripRegion:
    """The oscillating strip of scale ``epsilon`` along ``curve``.

    ``eps_cap`` clamps the admissible scale; construction fails when
    ``epsilon`` exceeds ``eps0``, which keeps the normal-coordinate map
    injective with a 10% margin.
    """

    curve: BoundaryCurve
    profile: OscillationProfile
    epsilon: float
    eps_cap: float = 0.5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.epsilon > self.eps0:
            raise DomainError(
                f"epsilon={self.epsilon} exceeds eps0={self.eps0:.4g}; "
                "the strip map would not be injective"
            )

    @property
    def eps0(self):
        return eps0(self.curve, self.profile, self.eps_cap)

    @property
    def max_depth(self):
        return self.epsilon * self.profile.g1

    def check_arclength(self, s):
        s = np.asarray(s, dtype=float)
        T = self.curve.period
        if np.any(s < 0) or np.any(s > T) or not np.all(np.isfinite(s)):
            raise DomainError(f"arclength outside [0, {T}]")
        return s

    def g_eps(self, s):
        s = self.check_arclength(s)
        out = self.profile(s, s / self.epsilon)
        return float(out) if np.ndim(out) == 0 else out

    def depth(self, s):
        """Local strip thickness ``eps * g_eps(s)``."""
        return self.epsilon * np.asarray(self.g_eps(s))


def eps0(curve, profile, cap=0.5):
    kmax = max(curve.max_curvature(), 0.0)
    if kmax == 0.0:
        return float(cap)
    return float(min(0.9 / (profile.g1 * kmax), cap))


def g_eps(region, s):
    return region.g_eps(s)


def strip_map(region, s, t):
    """Physical point ``zeta(s) - t N(s)`` and ``|det J| = 1 - t kappa(s)``."""
    s = region.check_arclength(s)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= region.depth(s)):
        raise DomainError("depth outside [0, eps * g_eps(s))")
    curve = region.curve
    point = curve.eval(s) - t[..., None] * curve.normal(s)
    jac = 1.0 - t * curve.curvature_factor(s)
    if np.any(jac <= 0):
        raise DomainError("non-positive Jacobian: epsilon exceeds eps0")
    if point.ndim == 1:
        return point, float(jac)
    return point, jac


def strip_coordinates(region, points):
    """Vectorized inversion of the strip map.

    Returns ``(s, t, member)`` where ``member`` flags points of the strip.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    curve = region.curve
    s = curve.project(points)
    if isinstance(curve, Circle):
        p = points - curve.center
        t = curve.radius - np.hypot(p[:, 0], p[:, 1])
    else:
        t = -np.einsum("ij,ij->i", points - curve.eval(s), curve.normal(s))
    # boundary points come back with t of order -1e-16 from the projection
    member = (t >= -1e-12) & (t < region.epsilon * region.profile(s, s / region.epsilon))
    return s, t, member


def strip_membership(region, point):
    """``(s, t)`` if ``point`` lies in the strip, otherwise ``None``."""
    s, t, member = strip_coordinates(region, np.asarray(point, dtype=float)[None, :])
    if not member[0]:
        return None
    return float(s[0]), float(t[0])
