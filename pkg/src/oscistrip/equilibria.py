"""Stationary states ``S u = F(u)``: Newton, spectra, continuation and matching."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .discretization.fem import _factor, inertia, pencil_lowest, spectral_gap
from .errors import (BranchEscapeError, ConfigError, CountMismatchError,
                     DivergenceError, NonHyperbolicError, NumericalError)

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)


@dataclass
class EquilibriumPoint:
    state: np.ndarray
    epsilon: float
    residual: float
    spectrum: np.ndarray  # lowest pencil eigenvalues, ascending
    gap: float  # smallest |eigenvalue| of the linearization
    morse_index: int
    energy: float
    h1_norm: float
    iterations: int = 0
    gap_tol: float = 1e-3

    @property
    def hyperbolic(self):
        return self.gap >= self.gap_tol


@dataclass
class EquilibriumBranch:
    limit: EquilibriumPoint
    points: list = field(default_factory=list)  # ordered by descending epsilon
    distances: list = field(default_factory=list)  # h1 distance to the limit

    @property
    def epsilons(self):
        return [p.epsilon for p in self.points]

    @property
    def morse_indices(self):
        return [p.morse_index for p in self.points] + [self.limit.morse_index]

    @property
    def min_gap(self):
        return min([p.gap for p in self.points] + [self.limit.gap])


def linearization(fem, u):
    """``S - J(u)``, the discrete ``A - F'(u)``."""
    return (fem.S - fem.apply_Fprime(u)).tocsc()


def linearization_spectrum(fem, u, k=4):
    """``k`` lowest eigenvalues of the pencil ``(S - J(u), K + M)``."""
    return pencil_lowest(linearization(fem, u), fem.norms, k)[0]


def is_hyperbolic(point, gap_tol=1e-3):
    return bool(point.gap >= gap_tol)


def describe(fem, u, residual=0.0, iterations=0, n_eigs=4, gap_tol=1e-3,
             return_vectors=False):
    """Fill spectrum, gap, Morse index and energy for a converged state."""
    L = linearization(fem, u)
    spectrum, vecs = pencil_lowest(L, fem.norms, n_eigs)
    pt = EquilibriumPoint(
        state=u, epsilon=fem.epsilon, residual=float(residual),
        spectrum=spectrum, gap=spectral_gap(L, fem.norms.N),
        morse_index=inertia(L)[0], energy=float(fem.energy(u)),
        h1_norm=float(fem.norms.h1(u)), iterations=iterations, gap_tol=gap_tol,
    )
    return (pt, vecs) if return_vectors else pt


def newton_solve(fem, guess, tol=1e-9, max_iter=50, max_halvings=8):
    """Damped Newton on ``G(u) = S u - F(u)``; returns ``(u, residual, iterations)``.

    The residual is measured in the dual norm.  A step is halved (up to
    ``max_halvings`` times) while it fails to reduce the residual.
    """
    if tol <= 0:
        raise ConfigError("newton tolerance must be positive")
    norms = fem.norms
    u = np.array(guess, dtype=float, copy=True)
    r = fem.residual(u)
    res = float(norms.dual(r))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise DivergenceError("Newton did not converge", iterations=it, residual=res)
        try:
            lu = _factor(linearization(fem, u))
        except NumericalError as exc:
            raise NonHyperbolicError("singular Newton matrix", iteration=it,
                                     residual=res) from exc
        du = lu.solve(r)
        if not np.all(np.isfinite(du)):
            raise NonHyperbolicError("singular Newton matrix", iteration=it, residual=res)
        step = 1.0
        for _ in range(max_halvings + 1):
            trial = u - step * du
            r_trial = fem.residual(trial)
            res_trial = float(norms.dual(r_trial))
            if res_trial < res:
                break
            step *= 0.5
        u, r, res = trial, r_trial, res_trial
        it += 1
    return u, res, it


def newton_equilibrium(fem, guess, tol=1e-9, max_iter=50, max_halvings=8,
                       n_eigs=4, gap_tol=1e-3):
    """Converged equilibrium near ``guess`` with its spectral data."""
    u, res, it = newton_solve(fem, guess, tol, max_iter, max_halvings)
    return describe(fem, u, res, it, n_eigs, gap_tol)


def _unit_mass(fem):
    return fem.M @ np.ones(fem.n)


def find_all_equilibria(fem, seeds=DEFAULT_SEEDS, n_directions=2, perturbation=0.5,
                        tol=1e-9, dedup=1e-4, max_points=32, gap_tol=1e-3):
    """Multi-start Newton.

    Starts from constant seeds, then from ``+-perturbation`` times the lowest
    ``n_directions`` linearization eigenvectors of every point found, until
    no new point appears.  Points closer than ``dedup`` in H1 are merged.
    Returned in increasing order of ``int u``.
    """
    norms = fem.norms
    queue = [np.full(fem.n, float(c)) for c in seeds]
    found = []
    while queue:
        guess = queue.pop(0)
        try:
            u, res, it = newton_solve(fem, guess, tol=tol)
        except NumericalError as exc:
            log.info("seed discarded at eps=%g: %s", fem.epsilon, exc)
            continue
        if any(norms.h1(u - q.state) < dedup for q in found):
            continue
        pt, vecs = describe(fem, u, res, it, max(n_directions, 2), gap_tol,
                            return_vectors=True)
        found.append(pt)
        if len(found) >= max_points:
            raise NumericalError("too many equilibria", count=len(found))
        for j in range(n_directions):
            for sign in (1.0, -1.0):
                queue.append(u + sign * perturbation * vecs[:, j])
    w = _unit_mass(fem)
    found.sort(key=lambda p: float(w @ p.state))
    return found


def continue_branch(systems, start, delta, tol=1e-9, gap_tol=1e-3):
    """Follow the limit equilibrium ``start`` through the systems.

    Newton at each ``epsilon`` (smallest first) starts from the previous
    branch point; leaving the H1 ball of radius ``delta`` around ``start``
    raises ``BranchEscapeError``.
    """
    norms = systems[0].norms
    order = sorted(systems, key=lambda s: s.epsilon)
    u = start.state
    pts, dists = [], []
    for fem in order:
        pt = newton_equilibrium(fem, u, tol=tol, gap_tol=gap_tol)
        d = float(norms.h1(pt.state - start.state))
        if d > delta:
            raise BranchEscapeError("branch left the delta-ball", epsilon=fem.epsilon,
                                    distance=d, delta=delta)
        pts.append(pt)
        dists.append(d)
        u = pt.state
    return EquilibriumBranch(start, pts[::-1], dists[::-1])


def uniqueness_probe(fem, point, delta, n_trials=10, rng=None, tol=1e-9):
    """Largest H1 distance between ``point`` and Newton limits started from
    random perturbations of norm below ``delta``."""
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(n_trials):
        v = rng.standard_normal(fem.n)
        v *= delta * rng.uniform(0.1, 1.0) / fem.norms.h1(v)
        pt = newton_equilibrium(fem, point.state + v, tol=tol)
        worst = max(worst, float(fem.norms.h1(pt.state - point.state)))
    return worst


def match_equilibria(E_eps, E_0, norms):
    """Optimal assignment minimising total H1 distance.

    Returns ``[(i_eps, i_0, distance)]`` ordered by ``i_0``.
    """
    if len(E_eps) != len(E_0):
        raise CountMismatchError("equilibrium counts differ",
                                 n_eps=len(E_eps), n_0=len(E_0))
    if not E_0:
        return []
    U = np.column_stack([p.state for p in E_eps])
    W = np.column_stack([p.state for p in E_0])
    D = norms.distances(U, W)
    rows, cols = linear_sum_assignment(D)
    pairs = sorted(zip(rows, cols), key=lambda rc: rc[1])
    return [(int(r), int(c), float(D[r, c])) for r, c in pairs]


def morse_window(fem, u, lam_lo, lam_hi, target=1, tol=1e-4):
    """Interval of ``lambda`` in which ``S_lambda - J(u)`` has exactly
    ``target`` negative eigenvalues, assuming the count is non-increasing in
    ``lambda``.  Returns ``(a, b)`` or ``None``."""
    A0 = (fem.K + fem.P - fem.apply_Fprime(u)).tocsc()
    M = fem.M

    def count(lam):
        return inertia(A0 + lam * M)[0]

    def edge(pred):
        # smallest lambda in [lo, hi] with pred true (pred monotone false->true)
        lo, hi = lam_lo, lam_hi
        if pred(lo):
            return lo
        if not pred(hi):
            return None
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if pred(mid) else (mid, hi)
        return hi

    a = edge(lambda l: count(l) <= target)
    b = edge(lambda l: count(l) < target)
    if a is None:
        return None
    b = lam_hi if b is None else b
    return (a, b) if b > a else None


def calibrate_lambda(systems, lam_lo=0.05, lam_hi=20.0, target=1, tol=1e-4):
    """Midpoint of the common ``lambda`` window in which the trivial state
    has Morse index ``target`` for every system.

    Returns ``(lambda, windows)``; raises ``ConfigError`` listing the
    per-system windows when they do not intersect.
    """
    windows = []
    for fem in systems:
        windows.append((fem.epsilon, morse_window(fem, np.zeros(fem.n), lam_lo, lam_hi,
                                                  target, tol)))
    if any(w is None for _, w in windows):
        raise ConfigError(f"no Morse-index-{target} window for some epsilon: {windows}")
    a = max(w[0] for _, w in windows)
    b = min(w[1] for _, w in windows)
    if not a < b:
        raise ConfigError(f"Morse-index-{target} windows do not intersect: {windows}")
    return 0.5 * (a + b), windows


def resolvent_gap(fem_eps, fem_0, u_star, W):
    """Largest ``h1(L_eps^{-1} w - L_0^{-1} w)`` over the columns of ``W``,
    with ``L = S - J(u_star)`` in both systems."""
    X_eps = _factor(linearization(fem_eps, u_star)).solve(W)
    X_0 = _factor(linearization(fem_0, u_star)).solve(W)
    return float(np.max(fem_0.norms.h1(X_eps - X_0)))


EQUILIBRIA_COLUMNS = ["epsilon", "index", "h1_norm", "residual", "min_eig",
                      "morse_index", "dist_to_limit_partner"]


def write_equilibria_csv(path, rows):
    """``rows``: ``(epsilon, index, point, distance)`` tuples."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EQUILIBRIA_COLUMNS)
        for eps, idx, pt, dist in rows:
            w.writerow([f"{eps:.6g}", idx, f"{pt.h1_norm:.10e}", f"{pt.residual:.3e}",
                        f"{pt.spectrum[0]:.10e}", pt.morse_index, f"{dist:.10e}"])
    return path
