"""Frequency-function machinery centered at the straight-boundary corner.

All quantities live on half-disk sectors around the origin with Dirichlet
rays at theta = +-pi/2:

* H(u, r): boundary average of u^2 over the arc of radius r, scaled by 1/r.
* E(u, r, lam): sector energy of u minus lam times the weighted mass.
* frequency N = E / H, which equals the vanishing order for homogeneous
  fields and satisfies (log H)'(r) = 2 N(r) / r for interior eigenfields.

Fields come in two flavors behind one sampler interface: finite element
coefficient vectors on a mesh, or closed-form callables.  The sampler also
powers the corner expansion fit (vanishing order and leading coefficient) and
the pointwise comparison between rescaled eigenfields and crack limit
profiles.
"""
from __future__ import annotations

import numpy as np

from .assembly import WeightField
from .mesh import PlanarMesh
from .quadrature import gauss_legendre, shape_functions, shape_gradients, TRI_DEGREE2, TRI_DEGREE4

__all__ = [
    "FieldSampler",
    "boundary_average_H",
    "energy_E",
    "frequency",
    "frequency_profile",
    "logH_derivative_check",
    "vanishing_order_and_beta",
    "blowup_modulus_compare",
]


class FieldSampler:
    """Uniform evaluation interface for FE fields and closed-form fields.

    ``split_angles`` lists polar angles where the field (or its gradient) may
    jump; quadratures split their panels there.
    """

    def __init__(self, *, mesh=None, values=None, fn=None, grad_fn=None,
                 radius=None, split_angles=()):
        if (mesh is None) == (fn is None):
            raise ValueError("provide exactly one of (mesh, values) or fn")
        self.mesh = mesh
        self.values_full = None if values is None else np.asarray(values, float)
        self.fn = fn
        self.grad_fn = grad_fn
        self._radius = radius
        self.split_angles = tuple(float(a) for a in split_angles)

    @classmethod
    def from_fe(cls, mesh: PlanarMesh, values_full, split_angles=()):
        return cls(mesh=mesh, values=values_full, radius=mesh.radius,
                   split_angles=split_angles)

    @classmethod
    def from_callable(cls, fn, grad_fn=None, radius=np.inf, split_angles=()):
        return cls(fn=fn, grad_fn=grad_fn, radius=radius, split_angles=split_angles)

    @property
    def radius(self) -> float:
        return self._radius if self._radius is not None else np.inf

    # -- evaluation ----------------------------------------------------------

    def _locate(self, pts: np.ndarray):
        loc = self.mesh._get_locator()
        tri, bary = loc.locate(pts)
        if np.any(tri < 0):
            bad = pts[tri < 0][0]
            raise ValueError(f"sample point {tuple(bad)} outside the mesh")
        return tri, bary

    def values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.fn is not None:
            return np.asarray(self.fn(pts), float)
        tri, bary = self._locate(pts)
        dofs = self.mesh.triangle_dofs()[tri]
        shapes = shape_functions(self.mesh.fe_order, bary)  # (n, ndof)
        return np.sum(shapes * self.values_full[dofs], axis=1)

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.fn is not None:
            if self.grad_fn is None:
                raise ValueError("no gradient available for this field")
            return np.asarray(self.grad_fn(pts), float)
        tri, bary = self._locate(pts)
        mesh = self.mesh
        dofs = mesh.triangle_dofs()[tri]
        v = mesh.vertices
        t = mesh.triangles[tri]
        d1 = v[t[:, 1]] - v[t[:, 0]]
        d2 = v[t[:, 2]] - v[t[:, 0]]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        g = np.empty((len(t), 3, 2))
        g[:, 1, 0] = d2[:, 1] / det
        g[:, 1, 1] = -d2[:, 0] / det
        g[:, 2, 0] = -d1[:, 1] / det
        g[:, 2, 1] = d1[:, 0] / det
        g[:, 0] = -g[:, 1] - g[:, 2]
        dndl = shape_gradients(mesh.fe_order, bary)           # (n, ndof, 3)
        coef = self.values_full[dofs]                         # (n, ndof)
        s = np.einsum("nd,ndk->nk", coef, dndl)               # (n, 3)
        return np.einsum("nk,nki->ni", s, g)


def _angular_panels(split_angles, lo=-np.pi / 2.0, hi=np.pi / 2.0):
    cuts = sorted({lo, hi, *(a for a in split_angles if lo < a < hi)})
    return list(zip(cuts[:-1], cuts[1:]))


def _angular_nodes(sampler: FieldSampler, n_nodes: int):
    """Composite Gauss nodes/weights over the half-circle, split at the
    sampler's jump angles, roughly n_nodes total."""
    panels = _angular_panels(sampler.split_angles)
    total = np.pi
    nodes = []
    weights = []
    for lo, hi in panels:
        span = hi - lo
        sub = max(1, int(np.ceil(span / total * n_nodes / 8.0)))
        for k in range(sub):
            a = lo + span * k / sub
            b = lo + span * (k + 1) / sub
            x, w = gauss_legendre(8, a, b)
            nodes.append(x)
            weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def boundary_average_H(sampler: FieldSampler, r: float, n_nodes: int = 256) -> float:
    """(1/r) * integral of u^2 over the arc of radius r (equals the angular
    integral of u(r, t)^2)."""
    if not 0.0 < r < sampler.radius:
        raise ValueError(f"arc radius {r} outside the sampled domain")
    t, w = _angular_nodes(sampler, n_nodes)
    pts = r * np.stack([np.cos(t), np.sin(t)], axis=1)
    u = sampler.values(pts)
    H = float(np.sum(w * u**2))
    if H <= 0.0:
        raise ValueError(f"vanishing boundary average at radius {r}")
    return H


def _tri_geometry(v, t, idx):
    p0 = v[t[idx, 0]]
    d1 = v[t[idx, 1]] - p0
    d2 = v[t[idx, 2]] - p0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    g = np.empty((len(idx), 3, 2))
    g[:, 1, 0] = d2[:, 1] / det
    g[:, 1, 1] = -d2[:, 0] / det
    g[:, 2, 0] = -d1[:, 1] / det
    g[:, 2, 1] = d1[:, 0] / det
    g[:, 0] = -g[:, 1] - g[:, 2]
    return area, g


def _fe_element_energy(mesh: PlanarMesh, values_full, idx, lam, weight):
    """Per-element integrals of |grad u|^2 - lam q u^2 (exact quadrature)."""
    if not len(idx):
        return np.zeros(0)
    v = mesh.vertices
    t = mesh.triangles
    area, g = _tri_geometry(v, t, idx)
    order = mesh.fe_order
    coef = values_full[mesh.triangle_dofs()[idx]]             # (n, ndof)

    bk, wk = TRI_DEGREE2.points, TRI_DEGREE2.weights
    dndl = shape_gradients(order, bk)                         # (nq, ndof, 3)
    s = np.einsum("nd,qdk->nqk", coef, dndl)                  # (n, nq, 3)
    gr = np.einsum("nqk,nki->nqi", s, g)                      # (n, nq, 2)
    e_stiff = np.einsum("q,nq->n", wk, np.sum(gr**2, axis=2)) * area

    bm, wm = TRI_DEGREE4.points, TRI_DEGREE4.weights
    nshapes = shape_functions(order, bm)
    uq = coef @ nshapes.T                                     # (n, nq)
    pts = np.einsum("qk,nki->nqi", bm, v[t[idx]])
    qv = weight(pts.reshape(-1, 2)).reshape(len(idx), -1)
    e_mass = np.einsum("q,nq->n", wm, qv * uq**2) * area
    return e_stiff - lam * e_mass


def _clip_convex_halfplane(poly, n_hat, d):
    """Sutherland-Hodgman clip of a convex polygon against x . n_hat <= d."""
    out = []
    m = len(poly)
    vals = [p @ n_hat - d for p in poly]
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        va, vb = vals[i], vals[(i + 1) % m]
        if va <= 0.0:
            out.append(a)
        if (va < 0.0) != (vb < 0.0) and va != vb:
            s = va / (va - vb)
            out.append(a + s * (b - a))
    return out


def _element_clip_energy(sampler, tri_id, r, lam, weight):
    """Integral of the energy density over (element intersect disk of radius
    r), for an element straddling the circle.

    The circular boundary is replaced by its chord through the two crossing
    points; the missing circular segment is added back with a one-point
    correction (midpoint of the arc, actual field value there).  For the rare
    non-generic crossing patterns, falls back to barycentric subdivision.
    """
    mesh = sampler.mesh
    verts = mesh.vertices[mesh.triangles[tri_id]]

    # crossing points on the triangle edges
    cross = []
    for k in range(3):
        a, b = verts[k], verts[(k + 1) % 3]
        d = b - a
        qa = d @ d
        qb = 2.0 * (a @ d)
        qc = a @ a - r * r
        disc = qb * qb - 4.0 * qa * qc
        if disc <= 0.0:
            continue
        sq = np.sqrt(disc)
        for root in ((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)):
            if 1e-12 < root < 1.0 - 1e-12:
                cross.append(a + root * d)

    def density(points):
        points = np.atleast_2d(points)
        gr = sampler.gradients(points)
        uu = sampler.values(points)
        qv = weight(points)
        return np.sum(gr**2, axis=1) - lam * qv * uu**2

    def polygon_integral(poly):
        total = 0.0
        bq, wq = TRI_DEGREE4.points, TRI_DEGREE4.weights
        for k in range(1, len(poly) - 1):
            tri = np.stack([poly[0], poly[k], poly[k + 1]])
            d1 = tri[1] - tri[0]
            d2 = tri[2] - tri[0]
            area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
            if area == 0.0:
                continue
            pts = bq @ tri
            total += area * float(np.sum(wq * density(pts)))
        return total

    if len(cross) == 2:
        x1, x2 = cross
        mid = 0.5 * (x1 + x2)
        nm = np.linalg.norm(mid)
        if nm > 1e-12 * r:
            n_hat = mid / nm
            poly = _clip_convex_halfplane(list(verts), n_hat, float(x1 @ n_hat))
            if len(poly) >= 3:
                total = polygon_integral([np.asarray(p) for p in poly])
                chord = float(np.linalg.norm(x2 - x1))
                theta = 2.0 * np.arcsin(min(1.0, chord / (2.0 * r)))
                seg_area = 0.5 * r * r * (theta - np.sin(theta))
                arc_mid = (r * (1.0 - 1e-9)) * n_hat
                total += seg_area * float(density(arc_mid)[0])
                return total

    # fallback: dyadic barycentric subdivision with in/out classification
    total = 0.0
    stack = [(verts, 0)]
    bq, wq = TRI_DEGREE4.points, TRI_DEGREE4.weights
    while stack:
        tri, depth = stack.pop()
        rad = np.hypot(tri[:, 0], tri[:, 1])
        if np.all(rad <= r):
            d1 = tri[1] - tri[0]
            d2 = tri[2] - tri[0]
            area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
            pts = bq @ tri
            total += area * float(np.sum(wq * density(pts)))
        elif np.all(rad >= r):
            continue
        elif depth >= 8:
            continue
        else:
            m01 = 0.5 * (tri[0] + tri[1])
            m12 = 0.5 * (tri[1] + tri[2])
            m20 = 0.5 * (tri[2] + tri[0])
            for sub in ((tri[0], m01, m20), (m01, tri[1], m12),
                        (m20, m12, tri[2]), (m01, m12, m20)):
                stack.append((np.stack(sub), depth + 1))
    return total


def energy_E(sampler: FieldSampler, r: float, lam: float = 0.0,
             weight: WeightField | None = None, n_ang: int = 256) -> float:
    """Sector energy int_{D_r^+} (|grad u|^2 - lam q u^2).

    FE fields use exact element integrals for elements fully inside the
    circle; elements straddling the circle are clipped against the chord
    through their crossing points with a circular-segment correction.
    Closed-form fields use polar tensor quadrature.  (Elements with all three
    vertices outside the circle can still overlap it by at most a sagitta
    sliver of area O(h^3/r); this is neglected.)
    """
    if weight is None:
        weight = WeightField.one()
    if not 0.0 < r < sampler.radius:
        raise ValueError(f"sector radius {r} outside the sampled domain")

    if sampler.fn is not None:
        tt, wt = _angular_nodes(sampler, n_ang)
        ct, st = np.cos(tt), np.sin(tt)
        total = 0.0
        n_panels = 24
        for k in range(n_panels):
            a = r * k / n_panels
            b = r * (k + 1) / n_panels
            xr, wr = gauss_legendre(6, a, b)
            for rho, wrho in zip(xr, wr):
                pts = rho * np.stack([ct, st], axis=1)
                gr = sampler.gradients(pts)
                uu = sampler.values(pts)
                qv = weight(pts)
                integrand = np.sum(gr**2, axis=1) - lam * qv * uu**2
                total += wrho * rho * float(np.sum(wt * integrand))
        return total

    mesh = sampler.mesh
    v = mesh.vertices
    t = mesh.triangles
    dvert = np.hypot(v[t][:, :, 0], v[t][:, :, 1])
    dmin = dvert.min(axis=1)
    dmax = dvert.max(axis=1)
    inside = np.nonzero(dmax <= r)[0]
    straddle = np.nonzero((dmin < r) & (dmax > r))[0]
    total = float(np.sum(_fe_element_energy(mesh, sampler.values_full, inside, lam, weight)))
    for tri_id in straddle:
        total += _element_clip_energy(sampler, int(tri_id), r, lam, weight)
    return total


def frequency(sampler: FieldSampler, r: float, lam: float = 0.0,
              weight: WeightField | None = None) -> float:
    """Frequency N(r) = E(r) / H(r); tends to the vanishing order at the
    corner as r -> 0 for corner-regular fields."""
    return energy_E(sampler, r, lam, weight) / boundary_average_H(sampler, r)


def frequency_profile(sampler: FieldSampler, radii, lam: float = 0.0,
                      weight: WeightField | None = None) -> dict:
    """H, E and their quotient over a strictly increasing list of radii."""
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must increase strictly")
    H = np.array([boundary_average_H(sampler, float(r)) for r in radii])
    E = np.array([energy_E(sampler, float(r), lam, weight) for r in radii])
    return {"radii": radii, "H": H, "E": E, "N": E / H}


def logH_derivative_check(sampler: FieldSampler, radii, lam: float = 0.0,
                          weight: WeightField | None = None) -> dict:
    """Residuals of the identity d/dr log H = 2 N / r on a uniform grid.

    The derivative is the centered difference across the grid, evaluated at
    interior radii; the residual carries the O(step^2) difference error plus
    quadrature/interpolation error of H and N, so it vanishes under grid
    refinement on smooth fields.
    """
    radii = np.asarray(radii, float)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii for a centered difference")
    steps = np.diff(radii)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
        raise ValueError("radii must be uniformly spaced and increasing")
    dr = float(steps[0])
    H = np.array([boundary_average_H(sampler, float(r)) for r in radii])
    inner = radii[1:-1]
    nvals = np.array([frequency(sampler, float(r), lam, weight) for r in inner])
    dlogh = (np.log(H[2:]) - np.log(H[:-2])) / (2.0 * dr)
    resid = dlogh - 2.0 * nvals / inner
    return {"radii": inner, "frequency": nvals, "residual": resid,
            "max_abs_residual": float(np.max(np.abs(resid)))}


def vanishing_order_and_beta(sampler: FieldSampler, radii=None, max_order: int = 6,
                             n_ang: int = 256, j_hint: int | None = None) -> dict:
    """Corner expansion fit at the origin.

    Projects the field onto the Dirichlet sector harmonics sin(k(pi/2 - t)) on
    several arcs, then fits each candidate order k with the two-term model
    beta r^k (1 + gamma r^2) and picks the order with the smallest relative
    misfit.  Returns order, beta (sign carried by the projection), the per-
    order misfits, and the raw projections.
    """
    if radii is None:
        rmax = 0.16 * min(sampler.radius, 1.0)
        radii = np.geomspace(0.25 * rmax, rmax, 8)
    radii = np.asarray(radii, float)
    tt, wt = _angular_nodes(sampler, n_ang)
    proj = np.empty((len(radii), max_order))
    for i, r in enumerate(radii):
        pts = r * np.stack([np.cos(tt), np.sin(tt)], axis=1)
        u = sampler.values(pts)
        for k in range(1, max_order + 1):
            basis = np.sin(k * (np.pi / 2.0 - tt))
            proj[i, k - 1] = (2.0 / np.pi) * float(np.sum(wt * u * basis))

    results = {}
    for k in range(1, max_order + 1):
        b = proj[:, k - 1]
        A = np.stack([radii**k, radii ** (k + 2)], axis=1)
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        model = A @ coef
        denom = float(np.linalg.norm(b))
        misfit = float(np.linalg.norm(b - model)) / denom if denom > 0 else np.inf
        results[k] = (float(coef[0]), misfit)
    # smallest misfit wins; ties break toward the lower order via dict order
    best = min(results, key=lambda k: results[k][1])
    if j_hint is not None:
        if not 1 <= j_hint <= max_order:
            raise ValueError(f"j_hint {j_hint} outside candidate range")
        best = j_hint
    return {
        "order": int(best),
        "beta": results[best][0],
        "misfit": results[best][1],
        "all_orders": {k: {"beta": v[0], "misfit": v[1]} for k, v in results.items()},
        "radii": radii,
        "projections": proj,
    }


def blowup_modulus_compare(eigen_sampler: FieldSampler, scale: float, beta: float,
                           j: int, limit_modulus_fn, *, box_radius: float = 2.0,
                           spacing: float = 0.1, crack_angle: float | None = None) -> dict:
    """Sup-distance between the rescaled eigenfield modulus and a limit
    profile modulus over a grid on the half-disk of ``box_radius``.

    The eigenfield is sampled at scale*x and divided by beta*scale^j; grid
    points closer than ``spacing`` to the crack ray are skipped (the modulus
    is continuous there but its gradient is not, and the FE fields are
    roughest along the slit).
    """
    xs = np.arange(0.5 * spacing, box_radius, spacing)
    ys = np.arange(-box_radius + 0.5 * spacing, box_radius, spacing)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    rr = np.hypot(pts[:, 0], pts[:, 1])
    keep = rr < 0.98 * box_radius
    keep &= rr > 2.0 * spacing
    if crack_angle is not None:
        d = np.abs(pts[:, 0] * np.sin(crack_angle) - pts[:, 1] * np.cos(crack_angle))
        along = pts[:, 0] * np.cos(crack_angle) + pts[:, 1] * np.sin(crack_angle)
        on_ray = (d < spacing) & (along > 0.0)
        keep &= ~on_ray
    pts = pts[keep]
    mod_eig = np.abs(eigen_sampler.values(scale * pts)) / (abs(beta) * scale**j)
    mod_lim = np.asarray(limit_modulus_fn(pts), float)
    diff = np.abs(mod_eig - mod_lim)
    return {
        "sup_diff": float(np.max(diff)),
        "limit_scale": float(np.max(np.abs(mod_lim))),
        "points": pts,
        "rescaled": mod_eig,
        "limit": mod_lim,
    }
