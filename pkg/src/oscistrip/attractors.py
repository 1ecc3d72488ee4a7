"""Attractor samples, local unstable manifolds and semicontinuity measures."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .discretization.fem import count_below, pencil_lowest, pencil_near
from .errors import ConfigError, NumericalError
from .semiflow import evolve, n_steps, step_imex


@dataclass
class ManifoldPatch:
    base: np.ndarray
    epsilon: float
    delta: float
    directions: np.ndarray  # (n, morse) unstable directions, unit H1
    multipliers: np.ndarray  # step-map eigenvalues > 1
    local: list = field(default_factory=list)  # polylines inside the delta-ball
    extension: list = field(default_factory=list)  # continuation beyond it
    reentered: list = field(default_factory=list)  # per seed: came back into the ball

    @property
    def empty(self):
        return len(self.local) == 0

    def curves(self, part="local"):
        if part == "local":
            return list(self.local)
        if part == "all":
            return [np.column_stack([a, b[:, 1:]]) if b.shape[1] > 1 else a
                    for a, b in zip(self.local, self.extension)]
        raise ConfigError(f"unknown patch part {part!r}")


@dataclass
class AttractorSample:
    points: np.ndarray  # (n, m) isolated states
    provenance: list  # one tag per point
    curves: list = field(default_factory=list)  # ordered polylines (n, k)
    epsilon: float = 0.0
    t_transient: float = 0.0
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def states(self):
        cols = [self.points] + list(self.curves)
        return np.column_stack(cols) if cols else self.points

    def max_h1(self, norms):
        return float(np.max(norms.h1(self.states())))

    def __len__(self):
        return self.states().shape[1]


# --------------------------------------------------------------------------
# unstable manifolds


def step_map_unstable(fem, u, dt, k):
    """Unstable eigenpairs of the linearised IMEX step.

    The step ``u -> (M + dt S)^{-1} (M u + dt F(u))`` linearises to the
    pencil ``(M + dt J, M + dt S)``; multipliers above 1 are unstable.  The
    top ``k`` pairs are returned (multipliers descending).
    """
    A = (fem.M + dt * fem.apply_Fprime(u)).tocsc()
    B = (fem.M + dt * fem.S).tocsc()
    n = fem.n
    top = 1.0 + dt
    while count_below(A, B, top) < n:
        top = 1.0 + 2.0 * (top - 1.0)
        if top > 1e6:
            raise NumericalError("could not bound the step-map spectrum")
    vals, vecs = pencil_near(A, B, k, top, fem.norms)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def _clip_to_sphere(norms, base, prev, cur, radius):
    """Point on segment ``prev -> cur`` at H1 distance ``radius`` from ``base``."""
    a, b = prev - base, cur - base
    d = b - a
    # solve |a + s d|^2 = radius^2 for s in [0, 1]
    A = float(np.dot(d, norms.N @ d))
    B = 2.0 * float(np.dot(a, norms.N @ d))
    C = float(np.dot(a, norms.N @ a)) - radius**2
    disc = max(B * B - 4.0 * A * C, 0.0)
    s = (-B + math.sqrt(disc)) / (2.0 * A) if A > 0 else 0.0
    return prev + min(max(s, 0.0), 1.0) * d


def unstable_manifold_patch(fem, point, delta=0.1, n_seeds=2, t_grow=20.0, dt=0.01,
                            seed_fraction=0.05, arc_step=None):
    """Local unstable manifold of ``point`` plus its forward extension.

    Seeds sit at H1 distance ``seed_fraction * delta`` from the equilibrium
    along the unstable directions of the step map (for Morse index 1, the
    two seeds ``+-e1``).  Each seed is integrated for ``t_grow``; states are
    kept every ``arc_step`` of H1 arclength (default ``delta / 20``), the
    local part is clipped exactly at the ``delta``-sphere.
    """
    u_star = point.state if hasattr(point, "state") else np.asarray(point, dtype=float)
    morse = point.morse_index if hasattr(point, "morse_index") else None
    norms = fem.norms
    if morse is None:
        raise ConfigError("point must carry a Morse index")
    if morse == 0:
        return ManifoldPatch(u_star, fem.epsilon, delta, np.zeros((fem.n, 0)), np.zeros(0))
    mult, dirs = step_map_unstable(fem, u_star, dt, morse)
    if np.any(mult <= 1.0):
        raise NumericalError("step map has fewer unstable multipliers than the Morse index",
                             multipliers=mult.tolist(), morse=morse)
    arc_step = delta / 20.0 if arc_step is None else arc_step
    if morse == 1:
        seeds = np.column_stack([dirs[:, 0], -dirs[:, 0]])
    else:
        ang = 2.0 * np.pi * np.arange(n_seeds) / n_seeds
        coef = np.zeros((morse, n_seeds))
        coef[0], coef[1] = np.cos(ang), np.sin(ang)
        seeds = dirs @ coef
        seeds /= norms.h1(seeds)[None, :]
    r0 = seed_fraction * delta
    U = u_star[:, None] + r0 * seeds
    m = U.shape[1]
    local = [[u_star.copy(), U[:, j].copy()] for j in range(m)]
    ext = [[] for _ in range(m)]
    inside = np.ones(m, dtype=bool)
    reentered = np.zeros(m, dtype=bool)
    last = U.copy()
    prev = U.copy()
    for _ in range(n_steps(t_grow, dt)):
        U = step_imex(fem, U, dt)
        dist = norms.h1(U - u_star[:, None])
        for j in range(m):
            if inside[j] and dist[j] >= delta:
                edge = _clip_to_sphere(norms, u_star, prev[:, j], U[:, j], delta)
                local[j].append(edge)
                ext[j] = [edge]
                last[:, j] = edge
                inside[j] = False
            elif not inside[j] and dist[j] < delta:
                reentered[j] = True
            if norms.h1(U[:, j] - last[:, j]) >= arc_step:
                (local[j] if inside[j] else ext[j]).append(U[:, j].copy())
                last[:, j] = U[:, j]
        prev = U.copy()
    for j in range(m):
        if not ext[j]:
            ext[j] = [local[j][-1]]
        if not np.allclose(ext[j][-1], U[:, j]):
            ext[j].append(U[:, j].copy())
    return ManifoldPatch(
        base=u_star, epsilon=fem.epsilon, delta=delta, directions=dirs,
        multipliers=mult,
        local=[np.column_stack(c) for c in local],
        extension=[np.column_stack(c) for c in ext],
        reentered=reentered.tolist(),
    )


def tangency_deviation(patch, norms):
    """Largest H1 distance of local patch states from the tangent space
    ``base + span(directions)``."""
    if patch.empty:
        return 0.0
    D = patch.directions
    G = norms.gram(D)
    worst = 0.0
    for c in patch.local:
        W = c - patch.base[:, None]
        coef = np.linalg.solve(G, norms.gram(D, W))
        R = W - D @ coef
        worst = max(worst, float(np.max(norms.h1(R))))
    return worst


def tangency_order(fem, point, deltas, **kw):
    """Deviations at each ``delta`` and the fitted log-log slope."""
    devs = []
    for d in deltas:
        patch = unstable_manifold_patch(fem, point, delta=d, t_grow=kw.get("t_grow", 5.0),
                                        dt=kw.get("dt", 0.01),
                                        seed_fraction=kw.get("seed_fraction", 0.05))
        devs.append(tangency_deviation(patch, fem.norms))
    slope = float(np.polyfit(np.log(deltas), np.log(devs), 1)[0])
    return np.array(devs), slope


# --------------------------------------------------------------------------
# attractor samples


def initial_grid(fem, n_modes=4, coefficients=(-2, -1, 0, 1, 2), radius=5.0, around=None):
    """Combinations of the lowest linearisation eigenvectors at ``around``
    (default 0), each rescaled to H1 norm ``radius``; the zero combination
    is dropped."""
    u0 = np.zeros(fem.n) if around is None else around
    L = (fem.S - fem.apply_Fprime(u0)).tocsc()
    _, vecs = pencil_lowest(L, fem.norms, n_modes)
    grids = np.array(np.meshgrid(*[coefficients] * n_modes, indexing="ij"))
    C = grids.reshape(n_modes, -1)
    C = C[:, np.any(C != 0, axis=0)].astype(float)
    U = vecs @ C
    return radius * U / fem.norms.h1(U)[None, :]


def sample_attractor(fem, grid, t_transient=10.0, t_sample=(0.0, 1.0, 2.0), dt=0.01,
                     equilibria=(), patches=(), part="all", batch=16):
    """Trajectory tails from ``grid`` merged with equilibria and manifold curves.

    Tails are the states at ``t_transient + t`` for ``t`` in ``t_sample``.
    """
    if grid.shape[1] == 0:
        raise ConfigError("initial grid is empty")
    times = [t_transient + t for t in t_sample]
    pts, tags = [], []
    for a in range(0, grid.shape[1], batch):
        traj = evolve(fem, grid[:, a:a + batch], max(times), dt, record_times=times)
        keep = [i for i, t in enumerate(traj.times) if t >= t_transient - 1e-12]
        for i in keep:
            pts.append(traj.states[i])
            tags.extend(["trajectory-tail"] * traj.states[i].shape[1])
    for e in equilibria:
        pts.append(e.state[:, None])
        tags.append("equilibrium")
    curves = []
    for p in patches:
        curves.extend(p.curves(part))
    return AttractorSample(np.column_stack(pts), tags, curves, fem.epsilon,
                           t_transient, np.asarray(t_sample, dtype=float))


def _segments(curves):
    P = [c[:, :-1] for c in curves if c.shape[1] > 1]
    Q = [c[:, 1:] for c in curves if c.shape[1] > 1]
    if not P:
        return None, None
    return np.column_stack(P), np.column_stack(Q)


def hausdorff_semidist(A, B, norms, polyline=True, chunk=512):
    """``sup_{a in A} inf_{b in B} h1(a - b)``.

    ``A`` and ``B`` are ``AttractorSample``s or ``(n, k)`` arrays.  With
    ``polyline`` the curves of ``B`` count as piecewise-linear sets
    (point-to-segment distances), not only their vertices.
    """
    XA = A.states() if isinstance(A, AttractorSample) else np.atleast_2d(A)
    if isinstance(B, AttractorSample):
        YB = B.states()
        P, Q = _segments(B.curves) if polyline else (None, None)
    else:
        YB, P, Q = np.atleast_2d(B), None, None
    if XA.shape[0] != norms.N.shape[0] or YB.shape[0] != norms.N.shape[0]:
        raise ConfigError("samples and norms live on different meshes")
    NY = norms.N @ YB
    yy = np.einsum("ij,ij->j", YB, NY)
    if P is not None:
        NP, NQ = norms.N @ P, norms.N @ Q
        pp = np.einsum("ij,ij->j", P, NP)
        qq = np.einsum("ij,ij->j", Q, NQ)
        pq = np.einsum("ij,ij->j", P, NQ)
        dd = pp + qq - 2.0 * pq  # |q - p|^2
    worst = 0.0
    for a in range(0, XA.shape[1], chunk):
        X = XA[:, a:a + chunk]
        xx = np.einsum("ij,ij->j", X, norms.N @ X)
        d2 = xx[:, None] + yy[None, :] - 2.0 * (X.T @ NY)
        best = d2.min(axis=1)
        if P is not None:
            xp, xq = X.T @ NP, X.T @ NQ
            # |x - p - s(q - p)|^2 minimised over s in [0, 1]
            xp_d = xq - xp - pq[None, :] + pp[None, :]  # <x - p, q - p>
            s = np.clip(xp_d / np.maximum(dd, 1e-300)[None, :], 0.0, 1.0)
            base = xx[:, None] - 2.0 * xp + pp[None, :]
            seg = base - 2.0 * s * xp_d + s**2 * dd[None, :]
            best = np.minimum(best, seg.min(axis=1))
        worst = max(worst, float(np.sqrt(max(best.max(), 0.0))))
    return worst


def two_sided_distance(A, B, norms, polyline=True):
    return hausdorff_semidist(A, B, norms, polyline) + hausdorff_semidist(B, A, norms, polyline)


def patch_distance(patch_eps, patch_0, norms, part="local"):
    """Two-sided distance between manifold patches, as curve sets."""
    if patch_eps.empty and patch_0.empty:
        return float(norms.h1(patch_eps.base - patch_0.base))
    A = AttractorSample(patch_eps.base[:, None], ["equilibrium"], patch_eps.curves(part))
    B = AttractorSample(patch_0.base[:, None], ["equilibrium"], patch_0.curves(part))
    return two_sided_distance(A, B, norms)


def semicontinuity_report(samples, limit, norms, patches=None, limit_patches=None,
                          part="local"):
    """Rows ``(eps, upper, lower, manifold_dist_eq_0, ...)``.

    ``samples`` maps epsilon to ``AttractorSample``; ``patches`` maps epsilon
    to a list of patches aligned with ``limit_patches``.
    """
    rows = []
    for eps in sorted(samples, reverse=True):
        A = samples[eps]
        row = [eps, hausdorff_semidist(A, limit, norms), hausdorff_semidist(limit, A, norms)]
        if patches is not None:
            for pe, p0 in zip(patches[eps], limit_patches):
                row.append(patch_distance(pe, p0, norms, part))
        rows.append(tuple(row))
    return rows


def write_semicontinuity_csv(path, rows, n_patches=0):
    header = ["epsilon", "upper_semidist", "lower_semidist"]
    header += [f"manifold_dist_eq_{i}" for i in range(n_patches)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{r[0]:.6g}"] + [f"{v:.10e}" for v in r[1:]])
    return path
