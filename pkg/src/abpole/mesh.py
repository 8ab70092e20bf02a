"""Graded triangular meshes on half-disks with optional interior slits.

The domain is always the half-disk ``{x1 > 0, |x| < radius}``: the straight
side (the "diameter") lies on the x2 axis and the curved side is the circular
arc.  Meshes are generated from a deterministic graded point cloud (hexagonal
candidate lattices, greedy disk acceptance, distmesh-style force relaxation)
followed by a Delaunay triangulation, which is safe here because the domain is
convex.  Polylines that must appear as mesh edges (slit lines, gauge cuts) are
pre-seeded with locked points and protected by locked "sleeve" rows so that the
constrained edges are Gabriel edges of the final triangulation.

Slits are realised by duplicating the interior nodes of a resolved polyline;
endpoint nodes (crack tips, boundary anchors) are never duplicated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import Delaunay, cKDTree

__all__ = [
    "DIRICHLET_ARC",
    "DIAMETER",
    "SLIT_PLUS",
    "SLIT_MINUS",
    "MeshError",
    "PlanarMesh",
    "SlitTopology",
    "build_half_disk_mesh",
    "insert_slit",
    "locate_point",
    "save_mesh",
    "load_mesh",
]

DIRICHLET_ARC = "DIRICHLET_ARC"
DIAMETER = "DIAMETER"
SLIT_PLUS = "SLIT_PLUS"
SLIT_MINUS = "SLIT_MINUS"

# Internal safety factor between the requested local size and the point
# spacing target, so that "element diameter <= local_h" holds with margin.
_SIZE_FACTOR = 0.65
_FSCALE = 1.25


class MeshError(Exception):
    """Raised for infeasible sizing requests or unresolved constraints."""


# ---------------------------------------------------------------------------
# sizing


class _Sizing:
    """Requested local size field h(x), including the internal safety factor.

    h(x) = factor * min(base(|x|), min_i(local_h_i + slope * (d_i - rad_i)_+))
    where base grows linearly with radius beyond ``coarsen_beyond``.
    """

    def __init__(self, h_target, gradings, slope, coarsen_beyond, radius, min_h):
        self.h_target = float(h_target)
        self.gradings = [(np.asarray(c, float), float(h), float(r)) for c, h, r in gradings]
        self.slope = float(slope)
        self.coarsen_beyond = coarsen_beyond
        self.radius = float(radius)
        self.min_h = float(min_h)

    def base_cap(self) -> float:
        # far-field growth cap; keeps the arc polygonization error small
        return max(self.h_target, self.radius / 8.0)

    def requested(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        h = np.full(len(pts), self.h_target)
        if self.coarsen_beyond is not None:
            r = np.hypot(pts[:, 0], pts[:, 1])
            h = np.minimum(self.h_target * np.maximum(1.0, r / self.coarsen_beyond),
                           self.base_cap())
        for c, hl, rad in self.gradings:
            d = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
            h = np.minimum(h, hl + self.slope * np.maximum(0.0, d - rad))
        return np.maximum(h, self.min_h)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return _SIZE_FACTOR * self.requested(pts)

    def at(self, pt) -> float:
        return float(self(np.asarray(pt, float)[None, :])[0])


# ---------------------------------------------------------------------------
# point placement helpers


def _march_segment(p0, p1, spacing: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Points along [p0, p1] spaced by the local size field, endpoints exact."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    length = float(np.hypot(*(p1 - p0)))
    if length <= 0.0:
        raise MeshError("degenerate constraint segment")
    direction = (p1 - p0) / length
    svals = [0.0]
    s = 0.0
    while True:
        h = float(spacing((p0 + s * direction)[None, :])[0])
        s_next = s + h
        h_end = float(spacing((p0 + min(s_next, length) * direction)[None, :])[0])
        if s_next >= length - 0.55 * h_end:
            break
        svals.append(s_next)
        s = s_next
        if len(svals) > 200000:
            raise MeshError("sizing produces too many points on a segment")
    svals.append(length)
    return p0 + np.asarray(svals)[:, None] * direction


def _march_arc(radius, theta0, theta1, spacing) -> np.ndarray:
    """Points along the arc radius*(cos t, sin t), t in [theta0, theta1]."""
    tvals = [theta0]
    t = theta0
    span = theta1 - theta0
    if span <= 0.0:
        raise MeshError("empty arc span")
    while True:
        pt = radius * np.array([np.cos(t), np.sin(t)])
        h = float(spacing(pt[None, :])[0])
        t_next = t + h / radius
        te = min(t_next, theta1)
        pe = radius * np.array([np.cos(te), np.sin(te)])
        h_end = float(spacing(pe[None, :])[0])
        if t_next >= theta1 - 0.55 * h_end / radius:
            break
        tvals.append(t_next)
        t = t_next
        if len(tvals) > 200000:
            raise MeshError("sizing produces too many points on the arc")
    tvals.append(theta1)
    tv = np.asarray(tvals)
    return radius * np.stack([np.cos(tv), np.sin(tv)], axis=1)


def _segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])


def _polyline_distance(pts: np.ndarray, polylines) -> np.ndarray:
    d = np.full(len(pts), np.inf)
    for poly in polylines:
        poly = np.asarray(poly, float)
        for k in range(len(poly) - 1):
            d = np.minimum(d, _segment_distance(pts, poly[k], poly[k + 1]))
    return d


def _hex_lattice(xlo, xhi, ylo, yhi, a: float) -> np.ndarray:
    """Hexagonal lattice with spacing a, anchored at the origin, with
    deterministic jitter to break cocircular degeneracies."""
    dy = a * np.sqrt(3.0) / 2.0
    j0 = int(np.floor(ylo / dy)) - 1
    j1 = int(np.ceil(yhi / dy)) + 1
    i0 = int(np.floor(xlo / a)) - 2
    i1 = int(np.ceil(xhi / a)) + 2
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    x = ii * a + (jj % 2) * (a / 2.0)
    y = jj * dy
    # deterministic sub-cell jitter (no RNG state)
    x = x + 0.09 * a * np.sin(12.9898 * ii + 78.233 * jj)
    y = y + 0.09 * a * np.sin(39.3468 * ii + 11.1357 * jj)
    return np.stack([x, y], axis=1)


# ---------------------------------------------------------------------------
# mesh container


def _edge_table(triangles: np.ndarray):
    """Unique undirected edges and the per-triangle edge indices.

    Edges are sorted pairs listed lexicographically; triangle-local edges are
    (v0,v1), (v1,v2), (v2,v0).
    """
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    tri_edges = inv.reshape(3, -1).T
    return edges, tri_edges


@dataclass
class SlitTopology:
    """Duplicated-node bookkeeping for one slit polyline.

    ``chain_plus``/``chain_minus`` hold vertex ids ordered from the polyline
    start to its end; endpoints are shared between the two chains.  ``pairs``
    lists (plus, minus) ids of the duplicated interior nodes in chain order.
    """

    pairs: np.ndarray
    chain_plus: np.ndarray
    chain_minus: np.ndarray
    start_kind: str
    end_kind: str
    polyline: np.ndarray

    @property
    def start_id(self) -> int:
        return int(self.chain_plus[0])

    @property
    def end_id(self) -> int:
        return int(self.chain_plus[-1])

    def tip_ids(self) -> list[int]:
        out = []
        if self.start_kind == "tip":
            out.append(self.start_id)
        if self.end_kind == "tip":
            out.append(self.end_id)
        return out


class PlanarMesh:
    """Immutable triangular mesh of a half-disk, possibly slit.

    Vertices and triangles are order-1 entities; for ``fe_order == 2`` a
    canonical midside-node table is derived from the connectivity (edge list
    sorted lexicographically), so order-2 data never needs to be stored.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags,
                 fe_order=2, radius=1.0, slit_pairs=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(boundary_tags, dtype=object).reshape(-1)
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise ValueError("boundary tag/edge count mismatch")
        if fe_order not in (1, 2):
            raise ValueError("fe_order must be 1 or 2")
        self.fe_order = int(fe_order)
        self.radius = float(radius)
        if slit_pairs is None:
            slit_pairs = np.empty((0, 2), dtype=np.int64)
        self.slit_pairs = np.ascontiguousarray(slit_pairs, dtype=np.int64).reshape(-1, 2)
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.slit_pairs):
            arr.flags.writeable = False
        self._edges = None
        self._tri_edges = None
        self._locator = None

    # -- derived tables ----------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        if self._edges is None:
            self._edges, self._tri_edges = _edge_table(self.triangles)
        return self._edges

    def tri_edges(self) -> np.ndarray:
        self.edges()
        return self._tri_edges

    @property
    def num_dofs(self) -> int:
        if self.fe_order == 1:
            return self.num_vertices
        return self.num_vertices + len(self.edges())

    def dof_coords(self) -> np.ndarray:
        """Coordinates of all DOFs (vertices, then midside nodes)."""
        if self.fe_order == 1:
            return self.vertices
        e = self.edges()
        mids = 0.5 * (self.vertices[e[:, 0]] + self.vertices[e[:, 1]])
        return np.vstack([self.vertices, mids])

    def triangle_dofs(self) -> np.ndarray:
        """Per-triangle DOF ids, shape (nt, 3) or (nt, 6)."""
        if self.fe_order == 1:
            return self.triangles
        te = self.tri_edges() + self.num_vertices
        return np.hstack([self.triangles, te])

    def areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        d1 = v[t[:, 1]] - v[t[:, 0]]
        d2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle_deg(self) -> float:
        v = self.vertices
        t = self.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        a = np.hypot(*(p1 - p2).T)
        b = np.hypot(*(p2 - p0).T)
        c = np.hypot(*(p0 - p1).T)
        angles = []
        for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
            cosv = np.clip((y * y + z * z - x * x) / (2.0 * y * z), -1.0, 1.0)
            angles.append(np.arccos(cosv))
        return float(np.degrees(np.min(np.stack(angles))))

    def boundary_dofs(self, tags: Iterable[str]) -> np.ndarray:
        """All DOF ids (vertices and, for order 2, midsides) on edges with the
        given tags."""
        tags = set(tags)
        mask = np.array([t in tags for t in self.boundary_tags], dtype=bool)
        sel = self.boundary_edges[mask]
        ids = set(sel.ravel().tolist())
        if self.fe_order == 2 and len(sel):
            edges = self.edges()
            key = edges[:, 0] * self.num_vertices + edges[:, 1]
            s = np.sort(sel, axis=1)
            want = s[:, 0] * self.num_vertices + s[:, 1]
            pos = np.searchsorted(key, want)
            ok = (pos < len(key)) & (key[np.minimum(pos, len(key) - 1)] == want)
            if not np.all(ok):
                raise MeshError("boundary edge missing from triangulation")
            ids.update((pos[ok] + self.num_vertices).tolist())
        return np.array(sorted(ids), dtype=np.int64)

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        """Check structural invariants; raises MeshError on violation."""
        areas = self.areas()
        if np.any(areas <= 0.0):
            raise MeshError("non-positive triangle orientation/area")
        edges, tri_edges = _edge_table(self.triangles)
        counts = np.bincount(tri_edges.ravel(), minlength=len(edges))
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        boundary_set = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        lonely = edges[counts == 1]
        for e in lonely.tolist():
            if tuple(sorted(e)) not in boundary_set:
                raise MeshError(f"interior edge {e} not shared by two triangles")
        # slit pairs coincide geometrically
        if len(self.slit_pairs):
            vp = self.vertices[self.slit_pairs[:, 0]]
            vm = self.vertices[self.slit_pairs[:, 1]]
            if not np.array_equal(vp, vm):
                raise MeshError("slit pair coordinates differ")

    def _get_locator(self):
        if self._locator is None:
            self._locator = _Locator(self)
        return self._locator


# ---------------------------------------------------------------------------
# generation


def build_half_disk_mesh(
    radius: float,
    h_target: float,
    gradings: Sequence[tuple] = (),
    *,
    fe_order: int = 2,
    constraint_polylines: Sequence = (),
    coarsen_beyond: float | None = None,
    grade_slope: float = 0.5,
    min_h: float | None = None,
    relax_iters: int = 30,
) -> PlanarMesh:
    """Triangulate the half-disk {x1 > 0, |x| < radius}.

    Parameters
    ----------
    radius : float
        Half-disk radius.
    h_target : float
        Requested element size away from gradings.  The generator guarantees
        element diameters <= h_target (and <= local_h inside grading balls).
    gradings : sequence of (center, local_h, grading_radius)
        Element size is at most local_h within grading_radius of center,
        growing linearly with distance outside.
    constraint_polylines : sequence of point lists
        Polylines that must be resolved by mesh vertices and edges exactly
        (later slit insertion requires this).
    coarsen_beyond : float, optional
        If set, the background size grows like |x|/coarsen_beyond beyond that
        radius (used for large truncated domains).
    grade_slope : float
        Growth rate of the local size with distance from a grading ball.
    min_h : float, optional
        Reject gradings requesting local_h below this (default 1e-6 * radius).
    relax_iters : int
        Force-relaxation sweeps for interior points.
    """
    radius = float(radius)
    h_target = float(h_target)
    if not radius > 0.0:
        raise MeshError("radius must be positive")
    if not 0.0 < h_target <= 0.7 * radius:
        raise MeshError(f"h_target {h_target} infeasible for radius {radius}")
    if min_h is None:
        min_h = 1e-6 * radius
    problems = []
    for g in gradings:
        c, hl, rad = g
        c = np.asarray(c, float)
        if hl < min_h:
            problems.append(f"grading at {tuple(c)}: local_h {hl} below minimum {min_h}")
        if hl >= h_target:
            problems.append(f"grading at {tuple(c)}: local_h {hl} must be < h_target {h_target}")
        if rad <= 0.0:
            problems.append(f"grading at {tuple(c)}: radius must be positive")
        if c[0] < -1e-12 * radius or np.hypot(c[0], c[1]) > radius * (1.0 + 1e-12):
            problems.append(f"grading center {tuple(c)} outside the half-disk")
    if problems:
        raise MeshError("infeasible grading request: " + "; ".join(problems))

    size = _Sizing(h_target, gradings, grade_slope, coarsen_beyond, radius, min_h)
    polylines = [np.asarray(p, float).reshape(-1, 2) for p in constraint_polylines]
    for poly in polylines:
        if len(poly) < 2:
            raise MeshError("constraint polyline needs at least two points")
        if np.any(poly[:, 0] < -1e-12 * radius) or np.any(np.hypot(poly[:, 0], poly[:, 1]) > radius * (1.0 + 1e-12)):
            raise MeshError("constraint polyline leaves the half-disk")

    tol = 1e-9 * radius

    # --- boundary breakpoints ------------------------------------------------
    def on_diameter(p):
        return abs(p[0]) <= tol

    def on_arc(p):
        return abs(np.hypot(p[0], p[1]) - radius) <= tol

    diam_breaks = {-radius, 0.0, radius}
    arc_breaks = {-np.pi / 2.0, np.pi / 2.0}
    anchor_pts = []
    for poly in polylines:
        for p in (poly[0], poly[-1]):
            if on_diameter(p):
                diam_breaks.add(float(p[1]))
                anchor_pts.append(np.array([0.0, p[1]]))
            elif on_arc(p):
                arc_breaks.add(float(np.arctan2(p[1], p[0])))
    for c, _, _ in size.gradings:
        if on_diameter(c):
            diam_breaks.add(float(c[1]))
        elif on_arc(c):
            arc_breaks.add(float(np.arctan2(c[1], c[0])))

    # --- fixed points: diameter chain, arc chain, polyline chains -----------
    db = sorted(diam_breaks)
    diam_pts = [np.array([0.0, db[0]])]
    for lo, hi in zip(db[:-1], db[1:]):
        seg = _march_segment(np.array([0.0, lo]), np.array([0.0, hi]), size)
        diam_pts.extend(seg[1:])
    diam_pts = np.asarray(diam_pts)
    diam_pts[:, 0] = 0.0  # exact

    ab = sorted(arc_breaks)
    arc_pts = [radius * np.array([np.cos(ab[0]), np.sin(ab[0])])]
    for lo, hi in zip(ab[:-1], ab[1:]):
        seg = _march_arc(radius, lo, hi, size)
        arc_pts.extend(seg[1:])
    arc_pts = np.asarray(arc_pts)

    poly_chains_pts = []
    for poly in polylines:
        chain = [poly[0]]
        for k in range(len(poly) - 1):
            seg = _march_segment(poly[k], poly[k + 1], size)
            chain.extend(seg[1:])
        poly_chains_pts.append(np.asarray(chain))

    free_centers = []
    for c, _, _ in size.gradings:
        if on_diameter(c) or on_arc(c):
            continue
        if polylines and _polyline_distance(c[None, :], polylines)[0] <= tol:
            continue
        free_centers.append(c)

    # --- dedupe fixed points, keep chain index maps --------------------------
    fixed: list[np.ndarray] = []
    index: dict[tuple, int] = {}

    def _key(p):
        return (round(float(p[0]) / tol), round(float(p[1]) / tol))

    def _add(p):
        k = _key(p)
        if k in index:
            return index[k]
        index[k] = len(fixed)
        fixed.append(np.asarray(p, float))
        return index[k]

    diam_chain = [_add(p) for p in diam_pts]
    arc_chain = [_add(p) for p in arc_pts]
    poly_chains = [[_add(p) for p in chain] for chain in poly_chains_pts]
    for c in free_centers:
        _add(c)
    fixed = np.asarray(fixed)

    # --- sleeve rows protecting polyline edges -------------------------------
    sleeves = []
    for chain in poly_chains_pts:
        mids = 0.5 * (chain[:-1] + chain[1:])
        tang = chain[1:] - chain[:-1]
        tlen = np.hypot(tang[:, 0], tang[:, 1])
        nrm = np.stack([-tang[:, 1], tang[:, 0]], axis=1) / tlen[:, None]
        off = 0.8 * size(mids)
        for sgn in (+1.0, -1.0):
            sleeves.append(mids + sgn * off[:, None] * nrm)
    if sleeves:
        sleeves = np.concatenate(sleeves)
        s_h = size(sleeves)
        keep = (sleeves[:, 0] >= 0.3 * s_h) & (np.hypot(sleeves[:, 0], sleeves[:, 1]) <= radius - 0.3 * s_h)
        keep &= _polyline_distance(sleeves, polylines) >= 0.55 * s_h
        sleeves = sleeves[keep]
        if len(sleeves):
            d, _ = cKDTree(fixed).query(sleeves)
            sleeves = sleeves[d >= 0.55 * size(sleeves)]
    else:
        sleeves = np.empty((0, 2))

    locked = np.vstack([fixed, sleeves])

    # --- interior candidates: hierarchical hex lattices ----------------------
    h_all = size(locked)
    h_max = float(_SIZE_FACTOR * size.requested(np.array([[radius * 0.99, 0.0]]))[0])
    if coarsen_beyond is not None:
        h_max = float(_SIZE_FACTOR * min(h_target * max(1.0, radius / coarsen_beyond),
                                         size.base_cap()))
    h_min_eff = max(float(h_all.min()), _SIZE_FACTOR * min_h)
    ratio = np.sqrt(2.0)
    n_levels = max(1, int(np.ceil(np.log(h_max / h_min_eff) / np.log(ratio))) + 1)

    accepted = [locked]
    tree = cKDTree(locked)
    for lev in range(n_levels - 1, -1, -1):
        h_lev = h_max / ratio**lev
        band_lo = h_lev / ratio**0.5
        band_hi = h_lev * ratio**0.5
        if lev == 0:
            band_hi = np.inf
        if lev == n_levels - 1:
            band_lo = 0.0
        # bounding boxes where this band can occur (union over sizing terms)
        boxes = []
        fb = _SIZE_FACTOR * h_target
        if coarsen_beyond is None:
            if band_lo <= fb < band_hi:
                boxes.append((0.0, radius, -radius, radius))
        else:
            # base term in band on an annulus; its bbox scales with the band
            if fb < band_hi:
                if np.isinf(band_hi):
                    r_cap = radius
                else:
                    r_cap = min(radius, coarsen_beyond * band_hi / fb + 3.0 * h_lev)
                boxes.append((0.0, r_cap, -r_cap, r_cap))
        for c, hl, rad in size.gradings:
            if _SIZE_FACTOR * hl < band_hi:
                reach = rad + (band_hi / _SIZE_FACTOR - hl) / size.slope + 3.0 * h_lev
                if np.isinf(reach):
                    reach = 2.0 * radius
                boxes.append((c[0] - reach, c[0] + reach, c[1] - reach, c[1] + reach))
        if not boxes:
            continue
        cands = []
        for xlo, xhi, ylo, yhi in boxes:
            xlo = max(xlo, 0.0)
            xhi = min(xhi, radius)
            ylo = max(ylo, -radius)
            yhi = min(yhi, radius)
            if xhi <= xlo or yhi <= ylo:
                continue
            cands.append(_hex_lattice(xlo, xhi, ylo, yhi, h_lev))
        if not cands:
            continue
        cands = np.unique(np.concatenate(cands), axis=0)
        ch = size(cands)
        sel = (ch >= band_lo) & (ch < band_hi)
        sel &= cands[:, 0] >= 0.45 * ch
        sel &= np.hypot(cands[:, 0], cands[:, 1]) <= radius - 0.45 * ch
        cands = cands[sel]
        ch = ch[sel]
        if polylines and len(cands):
            sel = _polyline_distance(cands, polylines) >= 1.2 * ch
            cands = cands[sel]
            ch = ch[sel]
        if not len(cands):
            continue
        d, _ = tree.query(cands)
        keep = d >= 0.74 * ch
        if np.any(keep):
            accepted.append(cands[keep])
            tree = cKDTree(np.concatenate(accepted))

    pts = np.concatenate(accepted)
    n_locked = len(locked)
    if len(pts) > 500000:
        raise MeshError(f"sizing produces too many points ({len(pts)})")

    # --- force relaxation of free interior points ----------------------------
    free = pts[n_locked:].copy()
    for _ in range(int(relax_iters)):
        allp = np.vstack([locked, free])
        tri = Delaunay(allp)
        s = tri.simplices
        e = np.concatenate([s[:, [0, 1]], s[:, [1, 2]], s[:, [2, 0]]])
        e.sort(axis=1)
        e = np.unique(e, axis=0)
        pi = allp[e[:, 0]]
        pj = allp[e[:, 1]]
        dv = pi - pj
        dl = np.hypot(dv[:, 0], dv[:, 1])
        dl = np.maximum(dl, 1e-300)
        mid = 0.5 * (pi + pj)
        want = _FSCALE * size(mid)
        fmag = np.maximum(want - dl, 0.0) / dl
        fvec = dv * fmag[:, None]
        forces = np.zeros_like(allp)
        np.add.at(forces, e[:, 0], fvec)
        np.add.at(forces, e[:, 1], -fvec)
        move = 0.25 * forces[n_locked:]
        if not len(move):
            break
        h_here = size(free)
        mnorm = np.hypot(move[:, 0], move[:, 1])
        cap = 0.3 * h_here
        scale = np.where(mnorm > cap, cap / np.maximum(mnorm, 1e-300), 1.0)
        free = free + move * scale[:, None]
        # keep points inside the domain and away from the slit lines
        h_here = size(free)
        free[:, 0] = np.maximum(free[:, 0], 0.25 * h_here)
        r = np.hypot(free[:, 0], free[:, 1])
        out = r > radius - 0.25 * h_here
        if np.any(out):
            f = (radius - 0.25 * h_here[out]) / r[out]
            free[out] *= f[:, None]
        if polylines and len(free):
            dpoly = _polyline_distance(free, polylines)
            bad = dpoly < 0.75 * h_here
            if np.any(bad):
                # push offenders back out along the shortest escape direction
                for idx in np.nonzero(bad)[0]:
                    p = free[idx]
                    best = None
                    for poly in polylines:
                        for k in range(len(poly) - 1):
                            a, b = poly[k], poly[k + 1]
                            ab = b - a
                            t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
                            proj = a + t * ab
                            dd = np.hypot(*(p - proj))
                            if best is None or dd < best[0]:
                                best = (dd, proj)
                    dd, proj = best
                    if dd < 1e-14:
                        continue
                    free[idx] = proj + (p - proj) * (0.75 * h_here[idx] / dd)
        if float(np.max(mnorm * scale / np.maximum(h_here, 1e-300))) < 0.06:
            break

    allp = np.vstack([locked, free])
    # drop crowded free points (rare; deterministic order)
    tree = cKDTree(allp)
    pairs = tree.query_pairs(r=float(0.5 * size(allp).max()), output_type="ndarray")
    if len(pairs):
        hp = size(allp)
        d = np.hypot(*(allp[pairs[:, 0]] - allp[pairs[:, 1]]).T)
        lim = 0.45 * np.minimum(hp[pairs[:, 0]], hp[pairs[:, 1]])
        drop = set()
        for (i, j), dd, ll in sorted(zip(pairs.tolist(), d, lim)):
            if dd >= ll or i in drop or j in drop:
                continue
            if j >= n_locked:
                drop.add(j)
            elif i >= n_locked:
                drop.add(i)
        if drop:
            keep = np.ones(len(allp), bool)
            keep[list(drop)] = False
            allp = allp[keep]

    # --- triangulate; split-and-retry any unresolved chain edge --------------
    # in thin wedges (slit hugging the diameter) a marched edge occasionally
    # loses its diametral circle to a neighbor; inserting the midpoint shrinks
    # the circle and settles within a few rounds
    all_chains = [diam_chain, arc_chain] + poly_chains
    for _repair in range(9):
        tri = Delaunay(allp)
        triangles = tri.simplices.astype(np.int64)
        v = allp
        d1 = v[triangles[:, 1]] - v[triangles[:, 0]]
        d2 = v[triangles[:, 2]] - v[triangles[:, 0]]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        flip = area2 < 0.0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        area2 = np.abs(area2)
        if np.any(area2 < 1e-13 * radius**2):
            raise MeshError("degenerate triangle produced; adjust sizing")
        # canonical order for determinism independent of qhull internals
        order = np.lexsort((triangles[:, 2], triangles[:, 1], triangles[:, 0]))
        triangles = triangles[order]

        edges, _ = _edge_table(triangles)
        nv = len(allp)
        key = edges[:, 0] * nv + edges[:, 1]

        def has_edge(a, b):
            a, b = (a, b) if a < b else (b, a)
            k = a * nv + b
            pos = np.searchsorted(key, k)
            return pos < len(key) and key[pos] == k

        new_pts = []
        for ci, chain in enumerate(all_chains):
            for pos in range(len(chain) - 2, -1, -1):
                a, b = chain[pos], chain[pos + 1]
                if has_edge(a, b):
                    continue
                mid = 0.5 * (allp[a] + allp[b])
                if ci == 1:  # arc chain: keep the point on the circle
                    mid *= radius / np.hypot(mid[0], mid[1])
                chain.insert(pos + 1, len(allp) + len(new_pts))
                new_pts.append(mid)
        if not new_pts:
            break
        allp = np.vstack([allp, np.asarray(new_pts)])
    else:
        raise MeshError(
            "constraint polyline not resolved by the triangulation; "
            "re-mesh with finer sizing near the polyline"
        )

    b_edges = []
    b_tags = []
    for chain, tag in ((diam_chain, DIAMETER), (arc_chain, DIRICHLET_ARC)):
        for a, b in zip(chain[:-1], chain[1:]):
            b_edges.append((a, b))
            b_tags.append(tag)

    mesh = PlanarMesh(
        vertices=allp,
        triangles=triangles,
        boundary_edges=np.asarray(b_edges, dtype=np.int64),
        boundary_tags=np.asarray(b_tags, dtype=object),
        fe_order=fe_order,
        radius=radius,
    )
    mesh.validate()

    # grading contract: element diameter bounded by requested sizes
    tvert = mesh.vertices[mesh.triangles]
    cent = tvert.mean(axis=1)
    diam = np.maximum(
        np.hypot(*(tvert[:, 0] - tvert[:, 1]).T),
        np.maximum(np.hypot(*(tvert[:, 1] - tvert[:, 2]).T), np.hypot(*(tvert[:, 2] - tvert[:, 0]).T)),
    )
    allowed = size.requested(cent) + size.slope * diam  # size at centroid, slack for growth across the element
    if np.any(diam > allowed * 1.05):
        worst = int(np.argmax(diam / allowed))
        raise MeshError(
            f"element diameter {diam[worst]:.3g} exceeds local size bound "
            f"{allowed[worst]:.3g} near {tuple(cent[worst])}"
        )
    return mesh


# ---------------------------------------------------------------------------
# slit insertion


def insert_slit(mesh: PlanarMesh, polyline, *, tol: float | None = None):
    """Duplicate nodes along a resolved polyline, producing a slit mesh.

    The polyline must already be resolved by mesh vertices and edges (build the
    mesh with the polyline passed as a constraint).  Interior polyline nodes
    are duplicated; endpoints (interior tips or boundary anchors) are not.
    Triangles strictly on the minus side (right of the oriented polyline) swap
    to the duplicated nodes.  Returns ``(slit_mesh, topology)``; the input mesh
    is not modified.
    """
    poly = np.asarray(polyline, float).reshape(-1, 2)
    if len(poly) < 2:
        raise MeshError("slit polyline needs at least two points")
    if tol is None:
        tol = 1e-8 * mesh.radius
    verts = mesh.vertices
    tree = cKDTree(verts)

    # resolve the chain of vertex ids along the polyline
    chain = []
    for k in range(len(poly) - 1):
        a, b = poly[k], poly[k + 1]
        seglen = float(np.hypot(*(b - a)))
        cand = tree.query_ball_point(0.5 * (a + b), 0.5 * seglen + 10 * tol)
        cand = np.asarray(sorted(cand), dtype=np.int64)
        d = _segment_distance(verts[cand], a, b)
        on = cand[d <= tol]
        if len(on) < 2:
            raise MeshError("slit polyline is not resolved by mesh vertices; "
                            "re-mesh with the polyline as a constraint")
        s = (verts[on] - a) @ (b - a)
        on = on[np.argsort(s)]
        if np.hypot(*(verts[on[0]] - a)) > tol or np.hypot(*(verts[on[-1]] - b)) > tol:
            raise MeshError("slit polyline endpoints are not mesh vertices")
        if chain:
            if chain[-1] != on[0]:
                raise MeshError("slit polyline segments do not join at a shared vertex")
            chain.extend(on[1:].tolist())
        else:
            chain.extend(on.tolist())
    chain = np.asarray(chain, dtype=np.int64)
    if len(np.unique(chain)) != len(chain):
        raise MeshError("slit polyline revisits a vertex")

    edges, _ = _edge_table(mesh.triangles)
    nv = mesh.num_vertices
    key = edges[:, 0] * nv + edges[:, 1]
    for a, b in zip(chain[:-1], chain[1:]):
        aa, bb = (a, b) if a < b else (b, a)
        pos = np.searchsorted(key, aa * nv + bb)
        if pos >= len(key) or key[pos] != aa * nv + bb:
            raise MeshError("slit polyline edge missing from mesh; "
                            "re-mesh with the polyline as a constraint")

    def _boundary_kind(vid):
        p = verts[vid]
        if abs(p[0]) <= tol or abs(np.hypot(p[0], p[1]) - mesh.radius) <= 1e-7 * mesh.radius:
            return "boundary"
        return "tip"

    start_kind = _boundary_kind(chain[0])
    end_kind = _boundary_kind(chain[-1])
    interior = chain[1:-1]
    if len(interior) == 0:
        raise MeshError("slit polyline has no interior nodes; refine the mesh")

    minus_of = {int(v): nv + i for i, v in enumerate(interior)}
    new_verts = np.vstack([verts, verts[interior]])

    # classify incident triangles by the side of their centroid
    tris = mesh.triangles.copy()
    touch = np.isin(tris, interior).any(axis=1)
    idx = np.nonzero(touch)[0]
    cent = verts[mesh.triangles[idx]].mean(axis=1)
    # signed side against the nearest polyline segment
    side = np.zeros(len(idx))
    bestd = np.full(len(idx), np.inf)
    for k in range(len(poly) - 1):
        a, b = poly[k], poly[k + 1]
        d = _segment_distance(cent, a, b)
        upd = d < bestd
        if np.any(upd):
            ab = b - a
            cr = ab[0] * (cent[upd, 1] - a[1]) - ab[1] * (cent[upd, 0] - a[0])
            side[upd] = cr
            bestd[upd] = d[upd]
    if np.any(side == 0.0):
        raise MeshError("cannot classify a slit-adjacent triangle")
    minus_tris = idx[side < 0.0]
    remap = np.arange(len(new_verts), dtype=np.int64)
    for v, m in minus_of.items():
        remap[v] = m
    tris[minus_tris] = remap[tris[minus_tris]]

    def _mapped(vid):
        return minus_of.get(int(vid), int(vid))

    b_edges = mesh.boundary_edges.tolist()
    b_tags = mesh.boundary_tags.tolist()
    for a, b in zip(chain[:-1], chain[1:]):
        b_edges.append((int(a), int(b)))
        b_tags.append(SLIT_PLUS)
        b_edges.append((_mapped(a), _mapped(b)))
        b_tags.append(SLIT_MINUS)

    pairs = np.array([(int(v), minus_of[int(v)]) for v in interior], dtype=np.int64)
    slit_pairs = np.vstack([mesh.slit_pairs, pairs]) if len(mesh.slit_pairs) else pairs

    out = PlanarMesh(
        vertices=new_verts,
        triangles=tris,
        boundary_edges=np.asarray(b_edges, dtype=np.int64),
        boundary_tags=np.asarray(b_tags, dtype=object),
        fe_order=mesh.fe_order,
        radius=mesh.radius,
        slit_pairs=slit_pairs,
    )
    out.validate()
    chain_minus = np.array([_mapped(v) for v in chain], dtype=np.int64)
    topo = SlitTopology(
        pairs=pairs,
        chain_plus=chain.copy(),
        chain_minus=chain_minus,
        start_kind=start_kind,
        end_kind=end_kind,
        polyline=poly,
    )
    return out, topo


# ---------------------------------------------------------------------------
# point location


class _Locator:
    """Batched point-in-triangle queries with deterministic tie-breaking."""

    def __init__(self, mesh: PlanarMesh):
        self.mesh = mesh
        v = mesh.vertices
        t = mesh.triangles
        self.tree = cKDTree(v)
        # vertex -> incident triangles (CSR)
        flat = t.ravel()
        order = np.argsort(flat, kind="stable")
        self.vt_tris = (order // 3).astype(np.int64)
        counts = np.bincount(flat, minlength=len(v))
        self.vt_ptr = np.concatenate([[0], np.cumsum(counts)])
        # per-triangle affine inverse for barycentric coordinates
        p0 = v[t[:, 0]]
        d1 = v[t[:, 1]] - p0
        d2 = v[t[:, 2]] - p0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.p0 = p0
        self.inv = np.empty((len(t), 2, 2))
        self.inv[:, 0, 0] = d2[:, 1] / det
        self.inv[:, 0, 1] = -d2[:, 0] / det
        self.inv[:, 1, 0] = -d1[:, 1] / det
        self.inv[:, 1, 1] = d1[:, 0] / det

    def _candidates(self, pt_idx, vert_ids):
        tris = []
        for v in vert_ids:
            tris.append(self.vt_tris[self.vt_ptr[v]:self.vt_ptr[v + 1]])
        return np.unique(np.concatenate(tris)) if tris else np.empty(0, np.int64)

    def locate(self, points: np.ndarray, tol: float = 1e-9):
        points = np.atleast_2d(np.asarray(points, float))
        n = len(points)
        tri_out = np.full(n, -1, dtype=np.int64)
        bary_out = np.zeros((n, 3))
        for k in (8, 32):
            todo = np.nonzero(tri_out < 0)[0]
            if not len(todo):
                break
            kk = min(k, len(self.mesh.vertices))
            _, near = self.tree.query(points[todo], k=kk)
            near = np.atleast_2d(near)
            for row, i in enumerate(todo):
                cands = self._candidates(i, near[row])
                hit = self._test(points[i], cands, tol)
                if hit is not None:
                    tri_out[i], bary_out[i] = hit
        # brute-force fallback for stragglers that are plausibly inside
        todo = np.nonzero(tri_out < 0)[0]
        for i in todo:
            p = points[i]
            if p[0] < -1e-12 or np.hypot(p[0], p[1]) > self.mesh.radius * (1 + 1e-12):
                continue
            hit = self._test(p, np.arange(len(self.mesh.triangles)), tol)
            if hit is not None:
                tri_out[i], bary_out[i] = hit
        return tri_out, bary_out

    def _test(self, p, cands, tol):
        if not len(cands):
            return None
        rel = p[None, :] - self.p0[cands]
        b12 = np.einsum("tij,tj->ti", self.inv[cands], rel)
        b0 = 1.0 - b12[:, 0] - b12[:, 1]
        bary = np.column_stack([b0, b12])
        ok = np.all(bary >= -tol, axis=1)
        if not np.any(ok):
            return None
        winner = np.nonzero(ok)[0][0]  # cands sorted ascending: lowest id wins
        b = np.clip(bary[winner], 0.0, 1.0)
        return int(cands[winner]), b / b.sum()


def locate_point(mesh: PlanarMesh, point, tol: float = 1e-9):
    """Find the triangle containing ``point``.

    Returns ``(triangle_id, barycentric)`` or ``None`` when the point lies
    outside the mesh.  Points on shared edges report the lowest adjacent
    triangle id.
    """
    tri, bary = mesh._get_locator().locate(np.asarray(point, float)[None, :], tol)
    if tri[0] < 0:
        return None
    return int(tri[0]), bary[0]


# ---------------------------------------------------------------------------
# file I/O


def save_mesh(mesh: PlanarMesh, path) -> None:
    """Write the mesh in the plain-text section format (lossless round trip).

    Sections: NODES (id x y), TRIANGLES (id v1 v2 v3), BOUNDARY (v1 v2 tag),
    SLITPAIRS (plus minus).  fe_order and the domain radius ride in comment
    headers.  Floats use shortest round-trip representation.
    """
    lines = [
        "# half-disk-mesh v1",
        f"# radius {mesh.radius!r}",
        f"# fe_order {mesh.fe_order}",
        f"NODES {mesh.num_vertices}",
    ]
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append(f"TRIANGLES {mesh.num_triangles}")
    for i, (a, b, c) in enumerate(mesh.triangles):
        lines.append(f"{i} {a} {b} {c}")
    lines.append(f"BOUNDARY {len(mesh.boundary_edges)}")
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"{a} {b} {tag}")
    lines.append(f"SLITPAIRS {len(mesh.slit_pairs)}")
    for a, b in mesh.slit_pairs:
        lines.append(f"{a} {b}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> PlanarMesh:
    """Read a mesh written by :func:`save_mesh`."""
    radius = 1.0
    fe_order = 2
    with open(path, "r", encoding="ascii") as fh:
        raw = [ln.rstrip("\n") for ln in fh]
    body = []
    for ln in raw:
        if ln.startswith("#"):
            parts = ln[1:].split()
            if len(parts) == 2 and parts[0] == "radius":
                radius = float(parts[1])
            elif len(parts) == 2 and parts[0] == "fe_order":
                fe_order = int(parts[1])
            continue
        if ln.strip():
            body.append(ln)
    pos = 0

    def _section(name):
        nonlocal pos
        head = body[pos].split()
        if len(head) != 2 or head[0] != name:
            raise ValueError(f"expected section {name}, found {body[pos]!r}")
        count = int(head[1])
        rows = body[pos + 1: pos + 1 + count]
        if len(rows) != count:
            raise ValueError(f"section {name} truncated")
        pos += 1 + count
        return rows

    nodes = _section("NODES")
    verts = np.empty((len(nodes), 2))
    for row in nodes:
        i, x, y = row.split()
        verts[int(i)] = (float(x), float(y))
    tris_rows = _section("TRIANGLES")
    tris = np.empty((len(tris_rows), 3), dtype=np.int64)
    for row in tris_rows:
        i, a, b, c = row.split()
        tris[int(i)] = (int(a), int(b), int(c))
    bnd = _section("BOUNDARY")
    b_edges = np.empty((len(bnd), 2), dtype=np.int64)
    b_tags = np.empty(len(bnd), dtype=object)
    for i, row in enumerate(bnd):
        a, b, tag = row.split()
        b_edges[i] = (int(a), int(b))
        b_tags[i] = tag
    slits = _section("SLITPAIRS")
    sp = np.empty((len(slits), 2), dtype=np.int64)
    for i, row in enumerate(slits):
        a, b = row.split()
        sp[i] = (int(a), int(b))
    if pos != len(body):
        raise ValueError(f"unexpected trailing content: {body[pos]!r}")
    return PlanarMesh(verts, tris, b_edges, b_tags, fe_order=fe_order,
                      radius=radius, slit_pairs=sp)
