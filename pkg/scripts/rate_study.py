"""Equilibrium distance rates along the epsilon ladder on several meshes.

Fits ``d(eps) ~ C eps^p`` for the distance between each stable well and its
limit partner, once per boundary mesh size, to separate the epsilon rate
from discretisation error.  The smallest hyperbolicity gap on each mesh is
printed too.  Writes ``rate_study.csv`` to ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
from pathlib import Path

import numpy as np

from oscistrip.harness import shipped_config
from oscistrip.harness.suites import Lab, equilibrium_sets


def study(cfg, h_boundary, out):
    cfg = dataclasses.replace(cfg, mesh=dataclasses.replace(cfg.mesh, h_boundary=h_boundary))
    cfg.validate()
    lab = Lab(cfg, out / f"hb{h_boundary:g}", 1)
    E, matches = equilibrium_sets(lab)
    gap = min(pt.gap for pts in E.values() for pt in pts)
    print(f"h_boundary={h_boundary:g}: {lab.base.mesh.n_vertices} vertices, "
          f"min hyperbolicity gap {gap:.4g}")
    rows = []
    for eps in cfg.epsilons:
        for i_eps, i_0, d in matches[eps] or []:
            if E[0.0][i_0].morse_index == 0:
                rows.append((h_boundary, eps, i_0, d))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--h-boundary", type=float, nargs="+", default=[0.0125, 0.00625])
    p.add_argument("--epsilons", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    p.add_argument("--out", default="results/rate_study")
    args = p.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(shipped_config("default"), epsilons=tuple(args.epsilons))
    rows = []
    for hb in args.h_boundary:
        rows += study(cfg, hb, out)
    with (out / "rate_study.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h_boundary", "epsilon", "limit_index", "distance"])
        w.writerows([(f"{a:g}", f"{b:g}", c, f"{d:.10e}") for a, b, c, d in rows])
    for hb in args.h_boundary:
        for idx in sorted({r[2] for r in rows if r[0] == hb}):
            sel = [(r[1], r[3]) for r in rows if r[0] == hb and r[2] == idx]
            eps, d = np.array(sel).T
            rate = np.polyfit(np.log(eps), np.log(d), 1)[0]
            print(f"h_boundary={hb:g} well {idx}: distances "
                  f"{', '.join(f'{x:.4g}' for x in d)}; fitted rate {rate:.3f}; "
                  f"final/first {d[-1] / d[0]:.3f}")


if __name__ == "__main__":
    main()
