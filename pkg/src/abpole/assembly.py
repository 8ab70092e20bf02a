"""Finite element assembly on half-disk meshes.

Stiffness and mass matrices use Lagrange P1/P2 elements on straight triangles.
The magnetic eigenvalue problem is posed in its real gauge-reduced form: after
factoring out the half-flux phase, eigenfunctions become real fields on the
slit mesh with an antiperiodic transmission condition across the slit
(plus trace = minus trace negated).  The same reduction machinery handles the
continuous (no-flux) case and the inhomogeneous jump constraints of the crack
problem, via linear dependencies x[dep] = sign * x[master] + offset.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import PlanarMesh, SlitTopology, DIRICHLET_ARC, DIAMETER
from .quadrature import TRI_DEGREE2, TRI_DEGREE4, gauss_legendre, shape_functions, shape_gradients

__all__ = [
    "MagneticPotential",
    "WeightField",
    "psi_j_eval",
    "psi_j_grad",
    "stiffness_mass",
    "build_reduction",
    "OperatorAssembly",
    "assemble",
    "edge_load",
    "boundary_integral",
    "hardy_ratio",
    "poincare_check",
]

ANTIPERIODIC = "antiperiodic"
CONTINUOUS = "continuous"


# ---------------------------------------------------------------------------
# fields


class MagneticPotential:
    """Half-flux rotational vector potential centered at ``pole``.

    A(x) = 0.5 * (-(x2-a2), x1-a1) / |x-a|^2, whose circulation along any
    positively oriented loop around the pole equals pi.
    """

    def __init__(self, pole):
        self.pole = np.asarray(pole, float).reshape(2)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        d = pts - self.pole
        r2 = d[:, 0] ** 2 + d[:, 1] ** 2
        out = np.empty_like(d)
        out[:, 0] = -0.5 * d[:, 1] / r2
        out[:, 1] = 0.5 * d[:, 0] / r2
        return out

    def circulation(self, loop_points: np.ndarray) -> float:
        """Line integral of A along a closed polygonal loop (trapezoid rule on
        the exact 1D integrand per straight segment, 32 Gauss points)."""
        loop = np.asarray(loop_points, float)
        if not np.allclose(loop[0], loop[-1]):
            loop = np.vstack([loop, loop[0]])
        total = 0.0
        x, w = gauss_legendre(32, 0.0, 1.0)
        for a, b in zip(loop[:-1], loop[1:]):
            pts = a[None, :] + x[:, None] * (b - a)[None, :]
            av = self(pts)
            total += float(np.sum(w * (av @ (b - a))))
        return total


def psi_j_eval(points: np.ndarray, j: int) -> np.ndarray:
    """Degree-j half-disk harmonic: Im(e^{i j pi/2} conj(z)^j).

    In polar form r^j sin(j (pi/2 - theta)); vanishes on both rays
    theta = +-pi/2 and is positive inside for theta in (pi/2 - pi/j, pi/2).
    psi_1 is the coordinate function x1.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    z = pts[:, 0] + 1j * pts[:, 1]
    w = np.exp(1j * j * np.pi / 2.0) * np.conj(z) ** j
    return np.imag(w)


def psi_j_grad(points: np.ndarray, j: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, float))
    z = pts[:, 0] + 1j * pts[:, 1]
    wp = j * np.exp(1j * j * np.pi / 2.0) * np.conj(z) ** (j - 1)
    return np.stack([np.imag(wp), -np.real(wp)], axis=1)


class WeightField:
    """Positive scalar weight multiplying the L2 pairing (mass matrix)."""

    def __init__(self, kind: str = "one", coeffs=(0.0, 0.0)):
        if kind not in ("one", "affine"):
            raise ValueError(f"unknown weight kind {kind!r}")
        self.kind = kind
        self.coeffs = (float(coeffs[0]), float(coeffs[1]))

    @classmethod
    def one(cls) -> "WeightField":
        return cls("one")

    @classmethod
    def affine(cls, gx: float, gy: float) -> "WeightField":
        return cls("affine", (gx, gy))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        if self.kind == "one":
            return np.ones(len(pts))
        return 1.0 + self.coeffs[0] * pts[:, 0] + self.coeffs[1] * pts[:, 1]

    def validate_on(self, mesh: PlanarMesh) -> None:
        vals = self(mesh.vertices)
        if np.any(vals <= 0.0):
            raise ValueError("weight field must stay positive on the domain")


# ---------------------------------------------------------------------------
# matrices


def _geometry(mesh: PlanarMesh):
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # gradients of the barycentric coordinates, shape (nt, 3, 2)
    g = np.empty((len(t), 3, 2))
    g[:, 1, 0] = d2[:, 1] / det
    g[:, 1, 1] = -d2[:, 0] / det
    g[:, 2, 0] = -d1[:, 1] / det
    g[:, 2, 1] = d1[:, 0] / det
    g[:, 0] = -g[:, 1] - g[:, 2]
    area = 0.5 * det
    return area, g


def stiffness_mass(mesh: PlanarMesh, weight: WeightField | None = None):
    """Assemble (K, M) over all DOFs, no boundary conditions applied.

    K is the Dirichlet energy matrix, M the (optionally weighted) mass matrix.
    Both are CSR and exactly symmetric.
    """
    if weight is None:
        weight = WeightField.one()
    weight.validate_on(mesh)
    area, g = _geometry(mesh)
    order = mesh.fe_order
    ndof_el = 3 if order == 1 else 6
    dofs = mesh.triangle_dofs()

    # stiffness: integrand degree 2(order-1) <= 2, the 3-point rule is exact
    rule_k = TRI_DEGREE2 if order == 2 else TRI_DEGREE2
    bk, wk = rule_k.points, rule_k.weights
    dndl = shape_gradients(order, bk)  # (nq, ndof, 3)
    # physical gradients per triangle/point: (nt, nq, ndof, 2)
    dn = np.einsum("qdk,tki->tqdi", dndl, g)
    ke = np.einsum("q,tqdi,tqei->tde", wk, dn, dn) * area[:, None, None]

    rule_m = TRI_DEGREE4
    bm, wm = rule_m.points, rule_m.weights
    nm = shape_functions(order, bm)  # (nq, ndof)
    v = mesh.vertices
    t = mesh.triangles
    # quadrature point coordinates (nt, nq, 2)
    pts = np.einsum("qk,tki->tqi", bm, v[t])
    qv = weight(pts.reshape(-1, 2)).reshape(len(t), -1)
    me = np.einsum("q,tq,qd,qe->tde", wm, qv, nm, nm) * area[:, None, None]

    rows = np.repeat(dofs, ndof_el, axis=1).ravel()
    cols = np.tile(dofs, (1, ndof_el)).ravel()
    n = mesh.num_dofs
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K = (K + K.T) * 0.5
    M = (M + M.T) * 0.5
    return K, M


# ---------------------------------------------------------------------------
# constraint reduction


def build_reduction(num_dofs: int, fixed: dict, pairs):
    """Affine elimination x_full = R x_free + g.

    fixed: dof -> prescribed value.
    pairs: (dep, master, sign, offset) meaning x[dep] = sign*x[master] + offset.
    Masters must not themselves be dependent; a fixed master turns its
    dependents into fixed DOFs.
    """
    fixed = dict(fixed)
    dep_map = {}
    for dep, master, sign, offset in pairs:
        dep = int(dep)
        master = int(master)
        if dep in dep_map:
            raise ValueError(f"dof {dep} constrained twice")
        if dep in fixed:
            raise ValueError(f"dof {dep} both fixed and paired")
        dep_map[dep] = (master, float(sign), float(offset))
    for dep, (master, sign, offset) in list(dep_map.items()):
        if master in dep_map:
            raise ValueError("chained pair constraints are not supported")
        if master in fixed:
            fixed[dep] = sign * fixed[master] + offset
            del dep_map[dep]

    constrained = set(fixed) | set(dep_map)
    free = np.array(sorted(set(range(num_dofs)) - constrained), dtype=np.int64)
    col_of = {int(d): i for i, d in enumerate(free)}
    rows = list(free)
    cols = list(range(len(free)))
    vals = [1.0] * len(free)
    g = np.zeros(num_dofs)
    for dof, val in fixed.items():
        g[dof] = val
    for dep, (master, sign, offset) in dep_map.items():
        rows.append(dep)
        cols.append(col_of[master])
        vals.append(sign)
        g[dep] = offset
    R = sp.coo_matrix((vals, (rows, cols)), shape=(num_dofs, len(free))).tocsr()
    return R, g, free


def _slit_edge_midsides(mesh: PlanarMesh, chain: np.ndarray) -> np.ndarray:
    """Midside DOF ids of the edges along a vertex chain (order-2 meshes)."""
    edges = mesh.edges()
    nv = mesh.num_vertices
    key = edges[:, 0] * nv + edges[:, 1]
    a = np.minimum(chain[:-1], chain[1:])
    b = np.maximum(chain[:-1], chain[1:])
    want = a * nv + b
    pos = np.searchsorted(key, want)
    if np.any(pos >= len(key)) or np.any(key[np.minimum(pos, len(key) - 1)] != want):
        raise ValueError("slit chain edge missing from mesh connectivity")
    return pos + nv


@dataclass
class OperatorAssembly:
    """Matrices and constraint reduction for one transmission mode."""

    mesh: PlanarMesh
    topology: SlitTopology | None
    mode: str
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    R: sp.csr_matrix
    g: np.ndarray
    free_dofs: np.ndarray
    K_red: sp.csr_matrix
    M_red: sp.csr_matrix

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        """Free-DOF vector -> full-DOF vector (constraints applied)."""
        return self.R @ np.asarray(u_free, float) + self.g

    def reduce_rhs(self, f_full: np.ndarray) -> np.ndarray:
        """Right-hand side seen by the free DOFs for K x = f."""
        return self.R.T @ (np.asarray(f_full, float) - self.K_full @ self.g)


def assemble(
    mesh: PlanarMesh,
    topology: SlitTopology | None = None,
    *,
    mode: str = ANTIPERIODIC,
    weight: WeightField | None = None,
    dirichlet_tags=(DIRICHLET_ARC, DIAMETER),
) -> OperatorAssembly:
    """Build the reduced symmetric pencil (K_red, M_red).

    With ``mode == 'antiperiodic'`` the minus-side slit DOFs equal the negated
    plus-side ones and interior slit endpoints (tips) are pinned to zero: this
    is the real form of the half-flux magnetic operator with the pole at the
    tip.  With ``mode == 'continuous'`` the slit is glued back transparently,
    which must reproduce the unslit operator exactly.
    """
    if mode not in (ANTIPERIODIC, CONTINUOUS):
        raise ValueError(f"unknown transmission mode {mode!r}")
    K, M = stiffness_mass(mesh, weight)
    fixed = {int(d): 0.0 for d in mesh.boundary_dofs(dirichlet_tags)}
    pairs = []
    if topology is not None:
        sign = -1.0 if mode == ANTIPERIODIC else 1.0
        for plus, minus in topology.pairs:
            pairs.append((int(minus), int(plus), sign, 0.0))
        if mesh.fe_order == 2:
            mid_plus = _slit_edge_midsides(mesh, topology.chain_plus)
            mid_minus = _slit_edge_midsides(mesh, topology.chain_minus)
            for mp, mm in zip(mid_plus, mid_minus):
                pairs.append((int(mm), int(mp), sign, 0.0))
        if mode == ANTIPERIODIC:
            for tip in topology.tip_ids():
                fixed.setdefault(int(tip), 0.0)
    R, g, free = build_reduction(mesh.num_dofs, fixed, pairs)
    K_red = (R.T @ K @ R).tocsr()
    M_red = (R.T @ M @ R).tocsr()
    K_red = (K_red + K_red.T) * 0.5
    M_red = (M_red + M_red.T) * 0.5
    return OperatorAssembly(mesh, topology, mode, K, M, R, g, free, K_red, M_red)


# ---------------------------------------------------------------------------
# edge integrals


def _edge_trace_shapes(order: int, s: np.ndarray):
    if order == 1:
        return np.stack([1.0 - s, s], axis=1)
    return np.stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)], axis=1)


def edge_load(mesh: PlanarMesh, edge_chains, weight_fn) -> np.ndarray:
    """Full-DOF load vector sum over chain edges of int weight(x) phi_i ds.

    ``edge_chains`` is a list of vertex-id chains; edges are straight segments
    between consecutive chain vertices.  Exact for polynomial weights up to
    degree 7 along each edge.
    """
    f = np.zeros(mesh.num_dofs)
    s, w = gauss_legendre(4, 0.0, 1.0)
    shapes = _edge_trace_shapes(mesh.fe_order, s)
    for chain in edge_chains:
        chain = np.asarray(chain, dtype=np.int64)
        mids = _slit_edge_midsides(mesh, chain) if mesh.fe_order == 2 else None
        for k in range(len(chain) - 1):
            a, b = int(chain[k]), int(chain[k + 1])
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            length = float(np.hypot(*(pb - pa)))
            pts = pa[None, :] + s[:, None] * (pb - pa)[None, :]
            wv = np.asarray(weight_fn(pts), float)
            contrib = length * (shapes * (w * wv)[:, None]).sum(axis=0)
            f[a] += contrib[0]
            f[b] += contrib[1]
            if mids is not None:
                f[mids[k]] += contrib[2]
    return f


def boundary_integral(mesh: PlanarMesh, values_full: np.ndarray, tags) -> float:
    """Integral of the squared trace over the tagged boundary edges."""
    tags = set(tags)
    total = 0.0
    s, w = gauss_legendre(6, 0.0, 1.0)
    shapes = _edge_trace_shapes(mesh.fe_order, s)
    edges = mesh.edges() if mesh.fe_order == 2 else None
    nv = mesh.num_vertices
    key = edges[:, 0] * nv + edges[:, 1] if edges is not None else None
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag not in tags:
            continue
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        length = float(np.hypot(*(pb - pa)))
        vals = [values_full[a], values_full[b]]
        if mesh.fe_order == 2:
            lo, hi = (a, b) if a < b else (b, a)
            pos = int(np.searchsorted(key, lo * nv + hi))
            vals.append(values_full[nv + pos])
        trace = shapes @ np.asarray(vals)
        total += length * float(np.sum(w * trace**2))
    return total


# ---------------------------------------------------------------------------
# inequality diagnostics


def _subdivided_quadrature(depth: int):
    """Barycentric quadrature refined geometrically toward local vertex 0.

    The triangle is peeled into dyadic bands between the similar triangles of
    ratio 2^-k anchored at vertex 0; each band splits into two straight
    triangles carrying the degree-4 rule, plus one innermost corner cell.
    Weights are area fractions, so they sum to 1.
    """
    base_b, base_w = TRI_DEGREE4.points, TRI_DEGREE4.weights
    v0 = np.array([1.0, 0.0, 0.0])
    v1 = np.array([0.0, 1.0, 0.0])
    v2 = np.array([0.0, 0.0, 1.0])
    pts, wts = [], []

    def add(c0, c1, c2, frac):
        pts.append(base_b @ np.stack([c0, c1, c2]))
        wts.append(base_w * frac)

    r = 1.0
    for _ in range(depth):
        a1 = v0 + r * (v1 - v0)
        a2 = v0 + r * (v2 - v0)
        b1 = v0 + 0.5 * r * (v1 - v0)
        b2 = v0 + 0.5 * r * (v2 - v0)
        add(a1, a2, b2, r * r / 2.0)
        add(a1, b2, b1, r * r / 4.0)
        r *= 0.5
    add(v0, v0 + r * (v1 - v0), v0 + r * (v2 - v0), r * r)
    return np.concatenate(pts), np.concatenate(wts)


def hardy_ratio(mesh: PlanarMesh, values_full: np.ndarray, pole, K: sp.csr_matrix | None = None) -> float:
    """Ratio of the quarter-strength inverse-square moment around ``pole`` to
    the Dirichlet energy; bounded by 1 for fields in the half-flux form domain.

    Elements owning the pole vertex use quadrature geometrically refined
    toward it (the integrand behaves like 1/distance there).
    """
    pole = np.asarray(pole, float).reshape(2)
    if K is None:
        K, _ = stiffness_mass(mesh)
    den = float(values_full @ (K @ values_full))
    area, _ = _geometry(mesh)
    order = mesh.fe_order
    dofs = mesh.triangle_dofs()
    v = mesh.vertices
    t = mesh.triangles
    tol = 1e-12 * max(mesh.radius, 1.0)
    dvert = np.hypot(v[t][:, :, 0] - pole[0], v[t][:, :, 1] - pole[1])
    near = (dvert < tol).any(axis=1)

    num = 0.0
    idx = np.nonzero(~near)[0]
    if len(idx):
        b_reg, w_reg = TRI_DEGREE4.points, TRI_DEGREE4.weights
        n_reg = shape_functions(order, b_reg)
        pts = np.einsum("qk,nki->nqi", b_reg, v[t[idx]])
        uv = values_full[dofs[idx]] @ n_reg.T
        r2 = (pts[:, :, 0] - pole[0]) ** 2 + (pts[:, :, 1] - pole[1]) ** 2
        num += float(((uv**2 / r2) @ w_reg) @ area[idx])

    if np.any(near):
        bq, wq = _subdivided_quadrature(16)
        nq = shape_functions(order, bq)
        for i in np.nonzero(near)[0]:
            tri = t[i]
            shift = int(np.argmin(dvert[i]))
            vperm = [(shift + k) % 3 for k in range(3)]
            perm = vperm + [3 + (shift + k) % 3 for k in range(3)] if order == 2 else vperm
            pts = bq @ v[tri[vperm]]
            uvals = nq @ values_full[dofs[i][perm]]
            r2 = (pts[:, 0] - pole[0]) ** 2 + (pts[:, 1] - pole[1]) ** 2
            num += area[i] * float(np.sum(wq * uvals**2 / r2))
    return 0.25 * num / den


def poincare_check(mesh: PlanarMesh, values_full: np.ndarray,
                   K: sp.csr_matrix | None = None, M: sp.csr_matrix | None = None) -> dict:
    """Scaling-consistent bound at the mesh radius: the mean-square bulk term
    is controlled by the arc trace term plus the Dirichlet energy.  Returns
    the three pieces and the (clipped) violation residual."""
    if K is None or M is None:
        K, M = stiffness_mass(mesh)
    r = mesh.radius
    bulk = float(values_full @ (M @ values_full)) / r**2
    trace = boundary_integral(mesh, values_full, {DIRICHLET_ARC}) / r
    energy = float(values_full @ (K @ values_full))
    return {
        "bulk": bulk,
        "trace": trace,
        "energy": energy,
        "residual": max(0.0, bulk - trace - energy),
    }
