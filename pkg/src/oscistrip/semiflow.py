"""IMEX time stepping of ``M u' + S u = F(u)`` and semigroup comparisons."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, n_vertices) or (n_times, n_vertices, batch)
    epsilon: float
    dt: float

    def __len__(self):
        return len(self.times)

    def final(self):
        return self.states[-1]

    def column(self, j):
        """Single trajectory out of a batched run."""
        return Trajectory(self.times, self.states[..., j], self.epsilon, self.dt)


def step_imex(fem, u, dt):
    """One step of ``(M + dt S) u+ = M u + dt F(u)``; ``u`` may be a column stack."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    rhs = fem.M @ u + dt * fem.apply_F(u)
    out = fem.stepper(dt).solve(rhs)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite state after IMEX step", dt=dt)
    return out


def n_steps(t_end, dt):
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ConfigError(f"dt={dt} does not divide t_end={t_end}")
    return n


def evolve(fem, phi, t_end, dt, record_every=1, record_times=None):
    """Integrate from ``phi`` to ``t_end``.

    States are kept every ``record_every`` steps, or exactly at
    ``record_times`` (which must be multiples of ``dt``) when given.  Time 0
    is always recorded.  ``phi`` may hold several initial states as columns.
    """
    total = n_steps(t_end, dt)
    if record_times is not None:
        keep = {n_steps(t, dt) for t in record_times if t > 0}
        if max(keep, default=0) > total:
            raise ConfigError("record time beyond t_end")
    else:
        if record_every < 1:
            raise ConfigError("record_every must be >= 1")
        keep = set(range(record_every, total + 1, record_every)) | {total}
    u = np.array(phi, dtype=float, copy=True)
    times, states = [0.0], [u.copy()]
    for k in range(1, total + 1):
        u = step_imex(fem, u, dt)
        if k in keep:
            times.append(k * dt)
            states.append(u.copy())
    return Trajectory(np.array(times), np.array(states), fem.epsilon, dt)


def linear_semigroup_gap(fem_eps, fem_0, phi, t_grid, dt, beta=0.5, b=None, reference=None):
    """``sup_t t^beta e^{b t} h1(e^{-t A_eps} phi - e^{-t A_0} phi)``.

    Both systems must share one mesh; the nonlinearity is switched off.
    ``b`` defaults to ``0.9`` times the smaller coercivity constant.
    Returns ``(sup, rows)`` with rows ``(t, gap, weighted gap)``.  A limit
    trajectory recorded on ``t_grid`` may be passed as ``reference`` to
    avoid recomputing it along a ladder.
    """
    if fem_eps.mesh is not fem_0.mesh:
        raise ConfigError("systems must share a mesh")
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if b is None:
        b = 0.9 * min(fem_eps.coercivity_constant(), fem_0.coercivity_constant())
    t_end = float(t_grid[-1])
    a = evolve(fem_eps.linear(), phi, t_end, dt, record_times=t_grid)
    z = reference
    if z is None:
        z = evolve(fem_0.linear(), phi, t_end, dt, record_times=t_grid)
    return _weighted_table(fem_0.norms, a, z, t_grid, beta, b)


def _weighted_table(norms, a, z, t_grid, power, b):
    rows = []
    for t in t_grid:
        ia = int(np.argmin(np.abs(a.times - t)))
        iz = int(np.argmin(np.abs(z.times - t)))
        if abs(a.times[ia] - t) > 1e-9 or abs(z.times[iz] - t) > 1e-9:
            raise ConfigError(f"time {t} not recorded in both trajectories")
        diff = a.states[ia] - z.states[iz]
        gap = float(norms.h1(diff))
        rows.append((float(t), gap, gap * t**power * math.exp(b * t)))
    return max(r[2] for r in rows), rows


def nonlinear_semigroup_gap(fem_eps, fem_0, phi_eps, phi_0, tau, dt, gamma=0.5,
                            t_grid=None, reference=None):
    """Gaps ``h1(T^eps(t) phi_eps - T^0(t) phi_0)`` on ``(0, tau]``.

    Returns ``(sup_t t^gamma gap, rows)`` with rows ``(t, gap, t^gamma gap)``;
    ``t_grid`` defaults to forty equal steps.  ``reference`` is an optional
    precomputed limit trajectory on the same grid.
    """
    if fem_eps.mesh is not fem_0.mesh:
        raise ConfigError("systems must share a mesh")
    if t_grid is None:
        t_grid = tau * np.arange(1, 41) / 40.0
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if t_grid[0] <= 0 or t_grid[-1] > tau + 1e-12:
        raise ConfigError("sampling times must lie in (0, tau]")
    a = evolve(fem_eps, phi_eps, float(t_grid[-1]), dt, record_times=t_grid)
    z = reference
    if z is None:
        z = evolve(fem_0, phi_0, float(t_grid[-1]), dt, record_times=t_grid)
    return _weighted_table(fem_0.norms, a, z, t_grid, gamma, 0.0)


def energy_series(fem, traj):
    return np.array([fem.energy(u) for u in traj.states])


def absorbing_radius(fem, traj, t_after=0.0):
    """Largest H1 norm after ``t_after`` along a trajectory."""
    sel = traj.times >= t_after
    return float(np.max(fem.norms.h1(np.moveaxis(traj.states[sel], 0, 1))))


def write_trajectory_csv(fem, traj, path, snapshot_dir=None):
    """Norm series ``(t, l2, h1, energy)``; optional nodal snapshots.

    With ``snapshot_dir`` each state goes to ``state_<k>.txt`` and an index
    ``snapshots.csv`` maps time to file.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "l2", "h1", "energy"])
        for t, u in zip(traj.times, traj.states):
            w.writerow([f"{t:.10g}", f"{fem.norms.l2(u):.12e}",
                        f"{fem.norms.h1(u):.12e}", f"{fem.energy(u):.12e}"])
    if snapshot_dir is not None:
        snap = Path(snapshot_dir)
        snap.mkdir(parents=True, exist_ok=True)
        with (snap / "snapshots.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "file"])
            for k, (t, u) in enumerate(zip(traj.times, traj.states)):
                name = f"state_{k:05d}.txt"
                np.savetxt(snap / name, u, fmt="%.16e")
                w.writerow([f"{t:.10g}", name])
    return path
