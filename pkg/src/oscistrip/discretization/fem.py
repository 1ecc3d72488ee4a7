"""P1 finite elements for the strip problems and their boundary limit.

Every ``FemSystem`` carries one weighted node set: quadrature nodes with
weights ``w`` and a sparse interpolation matrix ``E`` (nodal values to node
values).  For ``epsilon > 0`` the nodes fill the strip and the weights
include ``1/eps`` and the strip Jacobian; for ``epsilon == 0`` they sit on
the boundary and the weights are ``mu(s) ds``.  Strip potential, boundary
potential, nonlinear load and its Jacobian are then all ``E^T diag(.) E``
type products, so both regimes share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..conc_quadrature import QuadSpec, strip_nodes
from ..errors import ConfigError, MeshError, NumericalError
from ..geometry import StripRegion, mu
from .nonlinearity import Nonlinearity, zero


# --------------------------------------------------------------------------
# base matrices


def assemble_base(mesh):
    """Stiffness ``K`` and mass ``M`` of continuous P1 elements (exact)."""
    tri = mesh.triangles
    p = mesh.vertices[tri]
    area = mesh.areas()
    if np.any(area <= 0):
        raise MeshError(f"{int(np.sum(area <= 0))} degenerate or inverted triangle(s)")
    # gradients of barycentric coordinates: rot90 of the opposite edge / (2A)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    k_loc = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    m_loc = (np.ones((3, 3)) + np.eye(3))[None] * (area / 12.0)[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.csr_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n))
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    return K.tocsr(), M.tocsr()


def _factor(A):
    try:
        return spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise NumericalError("sparse factorization failed", size=A.shape[0]) from exc


def inertia(A):
    """Counts ``(negative, zero, positive)`` eigenvalues of symmetric ``A``.

    Uses an LU factorization without row pivoting on a symmetric
    fill-reducing ordering, so ``U``'s diagonal is the ``D`` of ``LDL^T``
    and Sylvester's law applies.
    """
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise NumericalError("singular matrix in inertia count") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NumericalError("row pivoting occurred; inertia undefined")
    d = lu.U.diagonal()
    scale = np.abs(d).max()
    tiny = np.abs(d) <= 1e-13 * scale
    return int(np.sum((d < 0) & ~tiny)), int(np.sum(tiny)), int(np.sum((d > 0) & ~tiny))


class Norms:
    """Discrete H1, L2 and Riesz-dual norms; accept vectors or column stacks."""

    def __init__(self, K, M):
        self.K, self.M = K, M
        self.N = (K + M).tocsr()
        self._lu = None

    @property
    def lu(self):
        if self._lu is None:
            self._lu = _factor(self.N)
        return self._lu

    @staticmethod
    def _quad(A, u, v=None):
        v = u if v is None else v
        return np.einsum("i...,i...->...", v, A @ u)

    def h1(self, u):
        return np.sqrt(np.maximum(self._quad(self.N, u), 0.0))

    def l2(self, u):
        return np.sqrt(np.maximum(self._quad(self.M, u), 0.0))

    def riesz(self, r):
        """``N^{-1} r``: the H1 representer of the functional ``r``."""
        return self.lu.solve(np.asarray(r, dtype=float))

    def dual(self, r):
        r = np.asarray(r, dtype=float)
        return np.sqrt(np.maximum(np.einsum("i...,i...->...", r, self.riesz(r)), 0.0))

    def N_inv_operator(self):
        n = self.N.shape[0]
        return spla.LinearOperator((n, n), matvec=self.riesz, dtype=float)

    def gram(self, U, W=None):
        """H1 inner products between the columns of ``U`` and ``W``."""
        W = U if W is None else W
        return U.T @ (self.N @ W)

    def distances(self, U, W):
        """Pairwise H1 distances between columns of ``U`` and of ``W``."""
        nu = np.einsum("ij,ij->j", U, self.N @ U)
        nw = np.einsum("ij,ij->j", W, self.N @ W)
        d2 = nu[:, None] + nw[None, :] - 2.0 * self.gram(U, W)
        return np.sqrt(np.maximum(d2, 0.0))


# --------------------------------------------------------------------------
# weighted node sets


@dataclass(frozen=True)
class WeightedNodes:
    points: np.ndarray
    weights: np.ndarray
    s: np.ndarray
    E: sp.csr_matrix  # node values = E @ nodal values
    ET: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "ET", self.E.T.tocsr())

    def __len__(self):
        return len(self.weights)

    def form(self, values):
        """Matrix of ``sum_q w_q values_q phi_i(x_q) phi_j(x_q)``."""
        D = sp.diags(self.weights * values)
        A = (self.E.T @ D @ self.E).tocsr()
        return 0.5 * (A + A.T)

    def load(self, values):
        """Vector(s) ``sum_q w_q values_q phi_i(x_q)``."""
        wv = self.weights * values if values.ndim == 1 else self.weights[:, None] * values
        return self.ET @ wv


def _interp_matrix(mesh, points, tol=0.05):
    tri, bary = mesh.locate(points, tol=tol)
    rows = np.repeat(np.arange(len(points)), 3)
    cols = mesh.triangles[tri].ravel()
    return sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(len(points), mesh.n_vertices))


def mesh_quad_spec(mesh, n_s=3, n_t=3):
    """Quadrature whose panels roughly follow the mesh rings."""
    from .mesh import _NORMAL

    hb = mesh.h_boundary
    return QuadSpec(
        n_s=n_s, n_t=n_t, s_panel_max=hb,
        t_panel_min=_NORMAL * hb,
        t_layer=mesh.layer_depth or 0.0,
        t_grading=max(mesh.grading, 1.0),
        t_panel_max=_NORMAL * (mesh.h_interior or hb),
    )


def strip_weighted_nodes(mesh, region, spec=None):
    spec = mesh_quad_spec(mesh) if spec is None else spec
    nodes = strip_nodes(region, spec)
    E = _interp_matrix(mesh, nodes.points)
    return WeightedNodes(nodes.points, nodes.weights, nodes.s, E)


def boundary_weighted_nodes(mesh, curve, weight, n_gauss=3):
    """Gauss nodes on each boundary edge, linear in arclength; weights ``weight(s) ds``."""
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    s0, s1 = mesh.boundary_edge_s[:, :1], mesh.boundary_edge_s[:, 1:]
    lam = 0.5 * (x + 1.0)[None, :]
    s = (s0 + (s1 - s0) * lam).ravel()
    ws = (0.5 * (s1 - s0) * w[None, :]).ravel()
    lam = np.broadcast_to(lam, (len(s0), n_gauss)).ravel()
    edges = np.repeat(mesh.boundary_edges, n_gauss, axis=0)
    rows = np.repeat(np.arange(len(s)), 2)
    vals = np.column_stack([1.0 - lam, lam]).ravel()
    E = sp.csr_matrix((vals, (rows, edges.ravel())), shape=(len(s), mesh.n_vertices))
    s_wrapped = curve.wrap(s)
    return WeightedNodes(curve.eval(s_wrapped), ws * weight(s_wrapped), s_wrapped, E)


def assemble_strip_potential(mesh, region, V, spec=None, nodes=None):
    """``(1/eps) int_strip V phi_i phi_j``."""
    nodes = strip_weighted_nodes(mesh, region, spec) if nodes is None else nodes
    return nodes.form(np.asarray(V(nodes.points), dtype=float))


def assemble_boundary_potential(mesh, curve, weight, n_gauss=3):
    """``int_boundary w phi_i phi_j dS`` with exact arclength per edge."""
    nodes = boundary_weighted_nodes(mesh, curve, weight, n_gauss)
    return nodes.form(np.ones(len(nodes)))


# --------------------------------------------------------------------------
# potentials


def make_potential(name, **params):
    """Named potentials ``V(points)``.

    ``zero`` and ``constant`` (``c``) are non-negative for ``c >= 0``;
    ``cosine`` is ``a + b cos(theta)`` in the polar angle, sign-changing
    when ``|b| > a``.
    """
    if name == "zero":
        return lambda p: np.zeros(len(p))
    if name == "constant":
        c = float(params.get("c", 1.0))
        return lambda p: np.full(len(p), c)
    if name == "cosine":
        a, b = float(params.get("a", 1.0)), float(params.get("b", 0.5))
        return lambda p: a + b * np.cos(np.arctan2(p[:, 1], p[:, 0]))
    raise ConfigError(f"unknown potential preset {name!r}")


# --------------------------------------------------------------------------
# systems


class FemBase:
    """Mesh-level data shared by every ``epsilon`` on one mesh."""

    def __init__(self, mesh, curve):
        self.mesh = mesh
        self.curve = curve
        self.K, self.M = assemble_base(mesh)
        self.norms = Norms(self.K, self.M)

    def interpolate(self, func):
        """Nodal interpolant of ``func(points) -> values``."""
        return np.asarray(func(self.mesh.vertices), dtype=float)


@dataclass(eq=False)
class FemSystem:
    base: FemBase
    epsilon: float
    profile: object
    lam: float = 1.0
    potential: object = None
    nonlinearity: Nonlinearity = field(default_factory=zero)
    spec: QuadSpec | None = None
    _steppers: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.potential is None:
            self.potential = make_potential("zero")
        if self.epsilon > 0:
            self.region = StripRegion(self.base.curve, self.profile, self.epsilon)
            self.nodes = strip_weighted_nodes(self.base.mesh, self.region, self.spec)
        else:
            self.region = None
            prof = self.profile
            weight = prof.mean if prof.mean is not None else (lambda s: mu(prof, s))
            self.nodes = boundary_weighted_nodes(self.base.mesh, self.base.curve, weight)
        self._V = np.asarray(self.potential(self.nodes.points), dtype=float)
        self.P = self.nodes.form(self._V)
        self.S = (self.base.K + self.lam * self.base.M + self.P).tocsr()

    # shared pieces ----------------------------------------------------------

    @property
    def mesh(self):
        return self.base.mesh

    @property
    def K(self):
        return self.base.K

    @property
    def M(self):
        return self.base.M

    @property
    def norms(self):
        return self.base.norms

    @property
    def n(self):
        return self.mesh.n_vertices

    def replace(self, nonlinearity=None, lam=None):
        """Copy with a different ``f`` or ``lambda``; reuses the node set."""
        twin = object.__new__(FemSystem)
        twin.__dict__.update(self.__dict__)
        twin._steppers = {}
        if nonlinearity is not None:
            twin.nonlinearity = nonlinearity
        if lam is not None:
            twin.lam = float(lam)
            twin.S = (self.K + twin.lam * self.M + self.P).tocsr()
        return twin

    def linear(self):
        """The same system with ``f = 0``."""
        return self.replace(nonlinearity=zero())

    # nonlinear terms ----------------------------------------------------------

    def apply_F(self, u):
        """``<F(u), phi_i>``; ``u`` may be one vector or a column stack."""
        if self.nonlinearity.is_zero:
            return np.zeros(np.shape(u))
        return self.nodes.load(self.nonlinearity.f(self.nodes.E @ u))

    def apply_Fprime(self, u):
        """Jacobian matrix ``<F'(u) phi_j, phi_i>``."""
        return self.nodes.form(self.nonlinearity.df(self.nodes.E @ u))

    def residual(self, u):
        return self.S @ u - self.apply_F(u)

    def energy(self, u):
        """``u^T S u / 2 - sum_q w_q Phi(u(x_q))``; columnwise for stacks."""
        quad = 0.5 * np.einsum("i...,i...->...", u, self.S @ u)
        prim = self.nonlinearity.primitive(self.nodes.E @ u)
        w = self.nodes.weights
        return quad - (w @ prim)

    # linear algebra -----------------------------------------------------------

    def stepper(self, dt):
        """Cached factorization of ``M + dt S``."""
        key = float(dt)
        if key not in self._steppers:
            self._steppers[key] = _factor(self.M + dt * self.S)
        return self._steppers[key]

    def coercivity_constant(self):
        """Smallest eigenvalue of the pencil ``(S, K + M)``."""
        return float(pencil_lowest(self.S, self.norms, 1)[0][0])

    def export_matrix(self, name, path):
        write_coo(getattr(self, name), path)


def pencil_lowest(A, norms, k, sigma=-1.0, tol=1e-8, B=None):
    """``k`` smallest eigenpairs of the symmetric pencil ``(A, B)``.

    ``B`` defaults to ``K + M``.  The shift is pushed down until the inertia
    of ``A - sigma B`` shows no eigenvalue below it; shift-invert then
    returns the ``k`` eigenvalues nearest ``sigma`` from above, i.e. the
    lowest ones.  Eigenvectors have unit H1 norm and a deterministic sign.
    """
    B = norms.N if B is None else B
    for _ in range(40):
        if count_below(A, B, sigma) == 0:
            break
        sigma = 2.0 * sigma - 1.0
    else:
        raise NumericalError("could not bracket the pencil spectrum", sigma=sigma)
    return pencil_near(A, B, k, sigma, norms, tol)


def pencil_near(A, B, k, sigma, norms, tol=1e-8, maxiter=30):
    """``k`` eigenpairs of ``(A, B)`` nearest ``sigma``, sorted ascending.

    When ARPACK stalls on a dense cluster (smooth interior modes all sit
    just above 1 in the H1 pencil) the result comes from block inverse
    iteration with a Rayleigh-Ritz step instead; its Ritz values then lie
    inside the cluster, to within the cluster width.
    """
    lu = _factor(A - sigma * B)
    n = B.shape[0]
    op = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    try:
        # fixed start vector: ARPACK's internal generator carries state across calls
        v0 = np.random.default_rng(1).standard_normal(n)
        vals, vecs = spla.eigsh(A, k=k, M=B, sigma=sigma, OPinv=op, which="LM",
                                tol=tol, maxiter=maxiter, ncv=max(2 * k + 1, 20), v0=v0)
    except spla.ArpackNoConvergence:
        vals, vecs = _subspace_iteration(A, B, lu, k)
    order = np.argsort(vals)[:k]
    vecs = vecs[:, order]
    vecs /= norms.h1(vecs)[None, :]
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0
    return vals[order], vecs


def _subspace_iteration(A, B, lu, k, n_iter=30):
    import scipy.linalg as sla

    p = k + 4
    X = np.random.default_rng(0).standard_normal((B.shape[0], p))
    for _ in range(n_iter):
        X = lu.solve(B @ X)
        X, _ = np.linalg.qr(X)
    vals, Y = sla.eigh(X.T @ (A @ X), X.T @ (B @ X))
    return vals[:k], X @ Y[:, :k]


def count_below(A, B, sigma):
    """Number of eigenvalues of ``(A, B)`` at or below ``sigma`` (``B`` SPD)."""
    try:
        neg, zer, _ = inertia(A - sigma * B)
    except NumericalError:
        # sigma is an eigenvalue; nudge above it so it is counted
        neg, zer, _ = inertia(A - (sigma + 1e-10 * max(abs(sigma), 1.0)) * B)
    return neg + zer


def spectral_gap(A, B, rtol=1e-3, start=1e-3):
    """Distance from 0 to the spectrum of the symmetric pencil ``(A, B)``.

    Found by bisection on inertia counts, so it never misses an eigenvalue
    the way a partial eigensolve can.  Returns 0 when ``A`` is singular.
    """
    neg, zer, _ = inertia(A)
    if zer:
        return 0.0

    def edge(direction):
        # eigenvalue nearest 0 on one side: count changes across it
        base = neg
        changed = (lambda c: c > base) if direction > 0 else (lambda c: c < base)
        lo, hi = 0.0, start
        while not changed(count_below(A, B, direction * hi)):
            lo, hi = hi, 2.0 * hi
            if hi > 1e12:
                return np.inf
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if changed(count_below(A, B, direction * mid)):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    up = edge(+1)
    down = edge(-1) if neg > 0 else np.inf
    return float(min(up, down))


def write_coo(A, path):
    """Coordinate-format text: header ``rows cols nnz``, then ``i j value``."""
    A = sp.coo_matrix(A)
    with Path(path).open("w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row.tolist(), A.col.tolist(), A.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


def read_coo(path):
    lines = Path(path).read_text().splitlines()
    nr, nc, _ = (int(x) for x in lines[0].split())
    data = np.array([l.split() for l in lines[1:]], dtype=float).reshape(-1, 3)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(nr, nc))


def build_ladder(base, profile, eps_list, lam=1.0, potential=None,
                 nonlinearity=None, spec=None):
    """Systems for each ``epsilon`` in ``eps_list`` plus the limit, sharing ``base``."""
    nl = zero() if nonlinearity is None else nonlinearity
    systems = [FemSystem(base, float(e), profile, lam, potential, nl, spec) for e in eps_list]
    limit = FemSystem(base, 0.0, profile, lam, potential, nl, spec)
    return systems, limit
