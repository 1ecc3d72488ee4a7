"""Triangular meshes of convex domains with a graded boundary layer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from ..errors import ConfigError, MeshError, NumericalError

# tangential / normal spacing relative to the target element diameter
_TANGENTIAL = 0.75
_NORMAL = 0.65


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray  # (k, 2) vertex indices, counter-clockwise
    boundary_edge_s: np.ndarray  # (k, 2) arclength of both ends, s_j > s_i
    vertex_s: np.ndarray  # arclength of boundary vertices, NaN inside
    h_boundary: float
    h_interior: float | None = None
    grading: float = 1.0
    layer_depth: float | None = None  # depth of the uniform boundary layer
    _locator: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64)
        self.boundary_edge_s = np.asarray(self.boundary_edge_s, dtype=float)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def boundary_vertices(self):
        return np.unique(self.boundary_edges)

    def areas(self):
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def boundary_length(self):
        s = self.boundary_edge_s
        return float(np.sum(s[:, 1] - s[:, 0]))

    def chord_length(self):
        e = self.vertices[self.boundary_edges]
        return float(np.linalg.norm(e[:, 1] - e[:, 0], axis=1).sum())

    def validate(self):
        """Check conformity, orientation and boundary closure."""
        if np.any(self.areas() <= 0):
            raise MeshError("triangles with non-positive area")
        tri = self.triangles
        edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        if counts.max() > 2:
            raise MeshError("edge shared by more than two triangles")
        n_bnd = int(np.sum(counts == 1))
        if n_bnd != len(self.boundary_edges):
            raise MeshError(
                f"{n_bnd} free edges but {len(self.boundary_edges)} boundary edges declared"
            )
        return self

    def near_boundary_diameter(self, depth):
        """Largest diameter among triangles lying within ``depth`` of the
        boundary (distance measured to the nearest boundary vertex)."""
        from scipy.spatial import cKDTree

        tree = cKDTree(self.vertices[self.boundary_vertices])
        d, _ = tree.query(self.vertices)
        near = (d[self.triangles] <= depth).all(axis=1)
        return float(self.diameters()[near].max())

    # point location -------------------------------------------------------

    def locate(self, points, tol=0.05):
        """Containing triangle and barycentric coordinates of each point.

        Points slightly outside the polygonal boundary (between a chord and
        the curved boundary) are attached to the nearest triangle with
        clipped, renormalized barycentrics.  Points further out than ``tol``
        in barycentric terms raise ``NumericalError``.
        """
        if self._locator is None:
            self._locator = _BinLocator(self)
        return self._locator.locate(np.atleast_2d(points), tol)

    # text I/O ---------------------------------------------------------------

    def save(self, path):
        path = Path(path)
        with path.open("w") as fh:
            fh.write(
                f"vertices {self.n_vertices} triangles {len(self.triangles)} "
                f"boundary {len(self.boundary_edges)} h_boundary {float(self.h_boundary)!r}"
            )
            for key in ("h_interior", "grading", "layer_depth"):
                val = getattr(self, key)
                if val is not None:
                    fh.write(f" {key} {float(val)!r}")
            fh.write("\n")
            for (x, y), s in zip(self.vertices.tolist(), self.vertex_s.tolist()):
                fh.write(f"{x!r} {y!r}\n" if np.isnan(s) else f"{x!r} {y!r} {s!r}\n")
            for i, j, k in self.triangles.tolist():
                fh.write(f"{i} {j} {k}\n")
            for (i, j), (si, sj) in zip(self.boundary_edges.tolist(),
                                        self.boundary_edge_s.tolist()):
                fh.write(f"{i} {j} {si!r} {sj!r}\n")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text().splitlines()
        head = lines[0].split()
        try:
            meta = dict(zip(head[::2], head[1::2]))
            nv, nt, nb = int(meta["vertices"]), int(meta["triangles"]), int(meta["boundary"])
        except (KeyError, ValueError) as exc:
            raise MeshError(f"bad mesh header: {lines[0]!r}") from exc
        hb = float(meta.get("h_boundary", "nan"))
        extra = {k: float(meta[k]) for k in ("h_interior", "grading", "layer_depth") if k in meta}
        verts = np.empty((nv, 2))
        vs = np.full(nv, np.nan)
        for k, line in enumerate(lines[1:1 + nv]):
            parts = line.split()
            verts[k] = float(parts[0]), float(parts[1])
            if len(parts) > 2:
                vs[k] = float(parts[2])
        tris = np.array([[int(v) for v in l.split()] for l in lines[1 + nv:1 + nv + nt]])
        bl = [l.split() for l in lines[1 + nv + nt:1 + nv + nt + nb]]
        bedges = np.array([[int(a), int(b)] for a, b, _, _ in bl])
        bs = np.array([[float(c), float(d)] for _, _, c, d in bl])
        mesh = cls(verts, tris, bedges, bs, vs, hb, **extra)
        if np.isnan(hb):
            e = verts[bedges]
            mesh.h_boundary = float(np.linalg.norm(e[:, 1] - e[:, 0], axis=1).max())
        return mesh.validate()


class _BinLocator:
    """Uniform bin grid of cell size ``h_boundary`` over the mesh bounding box."""

    def __init__(self, mesh):
        self.mesh = mesh
        v = mesh.vertices
        self.lo = v.min(axis=0) - 1e-9
        hi = v.max(axis=0) + 1e-9
        self.h = mesh.h_boundary
        self.shape = np.maximum(np.ceil((hi - self.lo) / self.h).astype(int), 1)
        p = v[mesh.triangles]
        bmin = np.floor((p.min(axis=1) - self.lo) / self.h).astype(int)
        bmax = np.floor((p.max(axis=1) - self.lo) / self.h).astype(int)
        bmin = np.clip(bmin, 0, self.shape - 1)
        bmax = np.clip(bmax, 0, self.shape - 1)
        nx = bmax[:, 0] - bmin[:, 0] + 1
        ny = bmax[:, 1] - bmin[:, 1] + 1
        counts = nx * ny
        tri_ids = np.repeat(np.arange(len(p)), counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        bx = np.repeat(bmin[:, 0], counts) + offs % np.repeat(nx, counts)
        by = np.repeat(bmin[:, 1], counts) + offs // np.repeat(nx, counts)
        cell = bx * self.shape[1] + by
        order = np.lexsort((tri_ids, cell))
        cell, tri_ids = cell[order], tri_ids[order]
        n_cells = int(self.shape[0] * self.shape[1])
        start = np.searchsorted(cell, np.arange(n_cells + 1))
        width = int(np.max(np.diff(start)))
        table = np.full((n_cells, width), -1, dtype=np.int64)
        rank = np.arange(len(cell)) - start[cell]
        table[cell, rank] = tri_ids
        self.table = table
        # affine maps to barycentric coordinates, per triangle
        a = p[:, 0]
        T = np.stack([p[:, 1] - a, p[:, 2] - a], axis=2)  # columns: edge vectors
        self.origin = a
        self.inv = np.linalg.inv(T)

    def barycentric(self, tri, pts):
        lam12 = np.einsum("...ij,...j->...i", self.inv[tri], pts - self.origin[tri])
        return np.concatenate([1.0 - lam12.sum(axis=-1, keepdims=True), lam12], axis=-1)

    def locate(self, pts, tol):
        out_tri = np.empty(len(pts), dtype=np.int64)
        out_bary = np.empty((len(pts), 3))
        chunk = 100_000
        for a in range(0, len(pts), chunk):
            q = pts[a:a + chunk]
            ij = np.floor((q - self.lo) / self.h).astype(int)
            ij = np.clip(ij, 0, self.shape - 1)
            cand = self.table[ij[:, 0] * self.shape[1] + ij[:, 1]]
            valid = cand >= 0
            safe = np.where(valid, cand, 0)
            bary = self.barycentric(safe, q[:, None, :])
            score = np.where(valid, bary.min(axis=-1), -np.inf)
            best = np.argmax(score, axis=1)
            rows = np.arange(len(q))
            best_score = score[rows, best]
            if np.any(best_score < -tol):
                bad = np.nonzero(best_score < -tol)[0]
                raise NumericalError(
                    "quadrature node outside the mesh",
                    n_missed=len(bad),
                    first_nodes=(q[bad[:5]]).tolist(),
                    scores=best_score[bad[:5]].tolist(),
                )
            b = np.clip(bary[rows, best], 0.0, None)
            b /= b.sum(axis=1, keepdims=True)
            out_tri[a:a + chunk] = cand[rows, best]
            out_bary[a:a + chunk] = b
        return out_tri, out_bary


def _rings(h_interior, h_boundary, grading, layer_depth, max_inner):
    """Depths and spacings of the offset rings, from the boundary inward."""
    depths, spacings = [0.0], [h_boundary]
    h = h_boundary
    d = 0.0
    while True:
        if d + _NORMAL * h >= layer_depth:
            h = min(h * grading, h_interior)
        d += _NORMAL * h
        if d >= max_inner:
            break
        depths.append(d)
        spacings.append(h)
    return np.array(depths), np.array(spacings)


def generate_curve_mesh(curve, h_interior, h_boundary, grading=1.25, layer_depth=None):
    """Graded mesh of the region enclosed by a convex curve.

    Vertices are placed on normal-offset rings of the boundary (exactly on the
    curve for the outermost ring); the ring spacing is ``h_boundary`` inside
    the boundary layer and then grows by ``grading`` up to ``h_interior``.
    The inner core is filled with a triangular lattice.  Connectivity comes
    from a Delaunay triangulation, which for convex curves yields the
    boundary polygon as its hull.
    """
    if not 0 < h_boundary <= h_interior:
        raise ConfigError("mesh sizing requires 0 < h_boundary <= h_interior")
    if grading < 1.0:
        raise ConfigError("grading must be >= 1")
    if layer_depth is None:
        layer_depth = 4.0 * h_boundary
    T = curve.period
    kmax = curve.max_curvature()
    # offsets stay valid while depth * curvature < 1; keep a margin
    max_offset = 0.6 / kmax
    depths, spacings = _rings(h_interior, h_boundary, grading, layer_depth, max_offset)
    if len(depths) < 2 and h_boundary < h_interior:
        raise ConfigError("sizing infeasible: boundary layer does not fit in the domain")

    pts = []
    vertex_s = []
    for k, (d, h) in enumerate(zip(depths, spacings)):
        # ring length shrinks with curvature; count from the offset length
        s_fine = np.linspace(0.0, T, 2049)
        ring = curve.eval(s_fine) - d * curve.normal(s_fine)
        length = np.linalg.norm(np.diff(ring, axis=0), axis=1).sum()
        n = max(int(math.ceil(length / (_TANGENTIAL * h))), 6)
        shift = 0.5 * (k % 2)
        s = (np.arange(n) + shift) * T / n
        pts.append(curve.eval(s) - d * curve.normal(s))
        vertex_s.append(s if k == 0 else np.full(n, np.nan))
    # core: lattice clipped to lie a spacing inside the innermost ring
    h_core = spacings[-1]
    d_core = depths[-1] + _NORMAL * h_core
    s_fine = np.linspace(0.0, T, 4097)
    inner = curve.eval(s_fine) - d_core * curve.normal(s_fine)
    lo, hi = inner.min(axis=0), inner.max(axis=0)
    dy = h_core * math.sqrt(3.0) / 2.0
    ys = np.arange(lo[1], hi[1] + dy, dy)
    core = []
    for j, y in enumerate(ys):
        xs = np.arange(lo[0] + 0.5 * h_core * (j % 2), hi[0] + h_core, h_core)
        core.append(np.column_stack([xs, np.full_like(xs, y)]))
    core = np.concatenate(core) if core else np.empty((0, 2))
    if len(core):
        s_c = curve.project(core)
        depth_c = -np.einsum("ij,ij->i", core - curve.eval(s_c), curve.normal(s_c))
        core = core[depth_c >= d_core]
    pts.append(core)
    vertex_s.append(np.full(len(core), np.nan))
    vertices = np.concatenate(pts)
    vertex_s = np.concatenate(vertex_s)

    tri = Delaunay(vertices).simplices.astype(np.int64)
    p = vertices[tri]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    keep = np.abs(area) > 1e-12 * h_boundary**2
    tri = tri[keep]

    nb = len(pts[0])
    bidx = np.arange(nb)
    bedges = np.column_stack([bidx, np.roll(bidx, -1)])
    s0 = vertex_s[:nb]
    bs = np.column_stack([s0, np.roll(s0, -1)])
    bs[-1, 1] += T
    mesh = Mesh(vertices, tri, bedges, bs, vertex_s, float(h_boundary),
                h_interior=float(h_interior), grading=float(grading),
                layer_depth=float(layer_depth))
    return mesh.validate()


def generate_disk_mesh(radius, h_interior, h_boundary, grading=1.25, layer_depth=None):
    from ..geometry import Circle

    return generate_curve_mesh(Circle(radius), h_interior, h_boundary, grading, layer_depth)
