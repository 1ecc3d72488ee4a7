"""Concentrating integrals ``(1/eps) * int_{strip} h phi`` and their limits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericalError
from .geometry import Circle, mu, strip_coordinates


@dataclass(frozen=True)
class QuadSpec:
    """Tensor Gauss-Legendre rule in normal coordinates.

    The arclength direction is cut into uniform panels of width
    ``min(s_panel_factor * eps * l0, s_panel_max)``.  With ``t_panel_min``
    unset the depth direction is one panel spanning ``[0, eps g_eps(s)]``;
    otherwise depth panels have width ``t_panel_min`` down to ``t_layer``
    and then grow geometrically by ``t_grading`` up to ``t_panel_max``
    (used to follow a graded mesh).
    """

    n_s: int = 4
    n_t: int = 4
    s_panel_factor: float = 0.25
    s_panel_max: float | None = None
    t_panel_min: float | None = None
    t_grading: float = 1.2
    t_layer: float = 0.0
    t_panel_max: float | None = None
    mc_samples: int = 2_000_000

    def __post_init__(self):
        if self.n_s < 2 or self.n_t < 2:
            raise ConfigError("at least two Gauss points per panel are required")
        if not 0 < self.s_panel_factor <= 0.25:
            raise ConfigError("s_panel_factor must lie in (0, 1/4]")
        if self.t_grading < 1.0:
            raise ConfigError("t_grading must be >= 1")


@dataclass(frozen=True)
class StripNodes:
    points: np.ndarray
    weights: np.ndarray  # includes 1/eps and the Jacobian of the strip map
    s: np.ndarray
    t: np.ndarray

    def __len__(self):
        return len(self.weights)


def _gauss(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    return (a[..., None] + half[..., None] * (x + 1.0)), half[..., None] * w


def _depth_breaks(spec, max_depth):
    if spec.t_panel_min is None:
        return None
    breaks = [0.0]
    width = spec.t_panel_min
    cap = spec.t_panel_max if spec.t_panel_max is not None else np.inf
    while breaks[-1] < max_depth:
        breaks.append(breaks[-1] + width)
        if breaks[-1] >= spec.t_layer:
            width = min(width * spec.t_grading, cap)
    return np.array(breaks)


def strip_nodes(region, spec=QuadSpec()):
    """Quadrature nodes and weights for ``(1/eps) * int_{strip}``."""
    curve, eps = region.curve, region.epsilon
    T = curve.period
    width = spec.s_panel_factor * eps * region.profile.l0
    if spec.s_panel_max is not None:
        width = min(width, spec.s_panel_max)
    n_panels = int(math.ceil(T / width - 1e-9))
    if n_panels < 1:
        raise NumericalError("could not build arclength panels", width=width)
    edges = np.linspace(0.0, T, n_panels + 1)
    s, ws = _gauss(spec.n_s, edges[:-1], edges[1:])
    s, ws = s.ravel(), ws.ravel()
    depth = region.depth(s)
    kappa = curve.curvature_factor(s)

    breaks = _depth_breaks(spec, region.max_depth)
    if breaks is None:
        t, wt = _gauss(spec.n_t, np.zeros_like(depth), depth)
        S = np.repeat(s, spec.n_t)
        W = (ws[:, None] * wt).ravel()
        t = t.ravel()
        K = np.repeat(kappa, spec.n_t)
    else:
        lo = breaks[:-1][None, :]
        hi = np.minimum(breaks[1:][None, :], depth[:, None])
        live = lo < depth[:, None]
        rows, cols = np.nonzero(live)
        t, wt = _gauss(spec.n_t, lo[0, cols], hi[rows, cols])
        S = np.repeat(s[rows], spec.n_t)
        W = (ws[rows][:, None] * wt).ravel()
        t = t.ravel()
        K = np.repeat(kappa[rows], spec.n_t)

    jac = 1.0 - t * K
    if np.any(jac <= 0):
        raise NumericalError("strip Jacobian is not positive", min_jacobian=float(jac.min()))
    points = curve.eval(S) - t[:, None] * curve.normal(S)
    return StripNodes(points=points, weights=W * jac / eps, s=S, t=t)


def conc_integral(region, h, phi, spec=QuadSpec(), nodes=None):
    """``(1/eps) * int_{strip} h phi`` for callables of an ``(n, 2)`` point array."""
    if nodes is None:
        nodes = strip_nodes(region, spec)
    p = nodes.points
    return float(np.dot(nodes.weights, np.asarray(h(p)) * np.asarray(phi(p))))


def boundary_integral(curve, weight, h, phi, tol=1e-13, n=8, max_panels=1 << 16):
    """``int_0^T weight(s) h(zeta(s)) phi(zeta(s)) ds`` with panel doubling."""
    T = curve.period
    prev = None
    panels = 64
    while panels <= max_panels:
        edges = np.linspace(0.0, T, panels + 1)
        s, w = _gauss(n, edges[:-1], edges[1:])
        s, w = s.ravel(), w.ravel()
        p = curve.eval(s)
        val = float(np.dot(w, weight(s) * h(p) * phi(p)))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
        panels *= 2
    raise NumericalError("boundary integral did not converge", panels=panels)


def limit_integral(region, h, phi):
    """Boundary limit of the concentrating integral, weighted by ``mu``."""
    profile = region.profile
    weight = profile.mean if profile.mean is not None else (lambda s: mu(profile, s))
    return boundary_integral(region.curve, weight, h, phi)


def fitted_rate(eps, errors):
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    eps, errors = np.asarray(eps, dtype=float), np.asarray(errors, dtype=float)
    slope, _ = np.polyfit(np.log(eps), np.log(errors), 1)
    return float(slope)


def conc_convergence_table(regions, h, phi, spec=QuadSpec()):
    """Rows ``(eps, I_eps, I_0, |I_eps - I_0|, rate)`` ordered by descending eps.

    ``rate`` is the log-ratio of successive errors over successive scales and
    is NaN on the first row (or when an error vanishes).
    """
    eps = [r.epsilon for r in regions]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("epsilon ladder must descend")
    limit = limit_integral(regions[0], h, phi)
    rows = []
    for k, region in enumerate(regions):
        val = conc_integral(region, h, phi, spec)
        err = abs(val - limit)
        rate = float("nan")
        if k > 0 and err > 0 and rows[-1][3] > 0:
            rate = math.log(rows[-1][3] / err) / math.log(eps[k - 1] / eps[k])
        rows.append((region.epsilon, val, limit, err, rate))
    return rows


def strip_lq_norm(region, v, q, spec=QuadSpec(), nodes=None):
    """``((1/eps) int_{strip} |v|^q)^(1/q)`` for ``q`` in {2, 4}."""
    if q not in (2, 4):
        raise ConfigError(f"unsupported exponent q={q}; use 2 or 4")
    if nodes is None:
        nodes = strip_nodes(region, spec)
    vals = np.abs(np.asarray(v(nodes.points), dtype=float)) ** q
    return float(np.dot(nodes.weights, vals) ** (1.0 / q))


def monte_carlo_conc_integral(region, h, phi, n_samples, rng):
    """Membership-filtered Monte-Carlo estimate and its standard error.

    Points are drawn uniformly in a set known to contain the strip (the
    annulus of depth ``eps * g1`` for circles, the curve's bounding box
    otherwise) and kept when ``strip_coordinates`` reports membership.
    """
    curve = region.curve
    chunk = 500_000
    total = total_sq = 0.0
    drawn = 0
    if isinstance(curve, Circle):
        r_out = curve.radius
        r_in = curve.radius - region.max_depth
        measure = math.pi * (r_out**2 - r_in**2)

        def draw(n):
            r = np.sqrt(rng.uniform(r_in**2, r_out**2, n))
            th = rng.uniform(0.0, 2.0 * math.pi, n)
            return curve.center + np.column_stack([r * np.cos(th), r * np.sin(th)])
    else:
        pts = curve.eval(np.linspace(0.0, curve.period, 2048, endpoint=False))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        measure = float(np.prod(hi - lo))

        def draw(n):
            return lo + (hi - lo) * rng.uniform(size=(n, 2))

    while drawn < n_samples:
        n = min(chunk, n_samples - drawn)
        p = draw(n)
        _, _, member = strip_coordinates(region, p)
        vals = np.zeros(n)
        if member.any():
            q = p[member]
            vals[member] = np.asarray(h(q)) * np.asarray(phi(q))
        total += vals.sum()
        total_sq += np.dot(vals, vals)
        drawn += n
    mean = total / drawn
    var = max(total_sq / drawn - mean**2, 0.0)
    scale = measure / region.epsilon
    return scale * mean, scale * math.sqrt(var / drawn)


def potential_operator_gap(fem_eps, fem_0):
    """Discrete norm of ``P_eps - P_0`` from discrete H1 to its Riesz dual.

    Both systems must share one mesh.  The norm is the largest ``|theta|``
    of the symmetric pencil ``(P_eps - P_0) x = theta (K + M) x``, i.e. the
    largest singular value of the whitened difference.
    """
    if fem_eps.mesh is not fem_0.mesh:
        raise ConfigError("systems must share a mesh")
    D = (fem_eps.P - fem_0.P).tocsr()
    D.eliminate_zeros()
    if D.nnz == 0 or abs(D).max() == 0.0:
        return 0.0
    norms = fem_eps.norms
    try:
        vals = spla.eigsh(D, k=2, M=norms.N, Minv=norms.N_inv_operator(),
                          which="BE", return_eigenvectors=False, tol=1e-10,
                    v0=np.random.default_rng(1).standard_normal(D.shape[0]))
    except spla.ArpackNoConvergence as exc:
        raise NumericalError("operator gap eigensolve failed") from exc
    return float(np.max(np.abs(vals)))
