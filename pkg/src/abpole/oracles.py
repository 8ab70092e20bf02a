"""Closed-form reference spectrum of the unit half-disk Dirichlet Laplacian.

Separation of variables in polar coordinates gives eigenvalues that are
squared Bessel zeros j_{m,k}^2 with angular factor sin(m(pi/2 - theta)),
m >= 1.  These serve as ground truth for the continuous-mode solver and for
the leading-coefficient extraction: near the corner at the origin the m-th
mode opens like beta * r^m * sin(m(pi/2 - theta)) with
beta = c * (j_{m,k}/2)^m / m!, where c normalizes the mode in L2.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import jn_zeros, jv

__all__ = ["HalfDiskMode", "half_disk_modes", "mode_field", "mode_gradient"]


@dataclass(frozen=True)
class HalfDiskMode:
    value: float          # eigenvalue j_{m,k}^2
    m: int                # angular index (vanishing order at the origin)
    k: int                # radial index (1-based)
    zero: float           # j_{m,k}
    norm_const: float     # c with ||c J_m(j r) sin(m(pi/2-t))||_L2 = 1
    beta: float           # leading corner coefficient of the normalized mode

    @property
    def vanishing_order(self) -> int:
        return self.m


def half_disk_modes(count: int, max_m: int = 30, max_k: int = 30) -> list:
    """Lowest ``count`` Dirichlet modes of the unit half-disk, sorted by
    eigenvalue (all are simple)."""
    cand = []
    for m in range(1, max_m + 1):
        zeros = jn_zeros(m, max_k)
        for k, z in enumerate(zeros, start=1):
            cand.append((float(z) ** 2, m, k, float(z)))
    cand.sort()
    out = []
    for value, m, k, z in cand[:count]:
        # ||J_m(z r) sin(m(pi/2-t))||^2 = (pi/4) * J_{m+1}(z)^2
        c = 1.0 / np.sqrt(np.pi / 4.0 * jv(m + 1, z) ** 2)
        beta = c * (z / 2.0) ** m / factorial(m)
        out.append(HalfDiskMode(value, m, k, z, float(c), float(beta)))
    return out


def mode_field(mode: HalfDiskMode):
    """Callable (n,2)->(n,) evaluating the normalized closed-form mode."""

    def f(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        t = np.arctan2(pts[:, 1], pts[:, 0])
        return mode.norm_const * jv(mode.m, mode.zero * r) * np.sin(mode.m * (np.pi / 2.0 - t))

    return f


def mode_gradient(mode: HalfDiskMode):
    """Callable (n,2)->(n,2): Cartesian gradient of the normalized mode."""
    m, z, c = mode.m, mode.zero, mode.norm_const

    def grad(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        x, y = pts[:, 0], pts[:, 1]
        r = np.hypot(x, y)
        t = np.arctan2(y, x)
        jm = jv(m, z * r)
        # J_m'(s) = J_{m-1}(s) - (m/s) J_m(s)
        s = z * r
        jp = jv(m - 1, s) - m * jm / np.where(s == 0.0, 1.0, s)
        ang = np.sin(m * (np.pi / 2.0 - t))
        dang = -m * np.cos(m * (np.pi / 2.0 - t))
        fr = c * z * jp * ang            # d/dr
        ft = c * jm * dang               # d/dtheta
        rr = np.where(r == 0.0, 1.0, r)
        gx = fr * x / rr - ft * y / rr**2
        gy = fr * y / rr + ft * x / rr**2
        out = np.stack([gx, gy], axis=1)
        at0 = r == 0.0
        if np.any(at0):
            out[at0] = [c * z / 2.0, 0.0] if m == 1 else [0.0, 0.0]
        return out

    return grad
