"""Quadrature rules and Lagrange shape tables shared by the assembly routines.

Triangle rules are given in barycentric coordinates with weights summing to 1;
multiply by the physical triangle area when integrating.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "TriangleRule",
    "TRI_DEGREE2",
    "TRI_DEGREE4",
    "gauss_legendre",
    "shape_functions",
    "shape_gradients",
]


class TriangleRule(NamedTuple):
    points: np.ndarray   # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sums to 1


# 3-point degree-2 rule (midpoints of edges).
TRI_DEGREE2 = TriangleRule(
    np.array(
        [
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ]
    ),
    np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
)

# 6-point degree-4 rule (two symmetric orbits).
_A1 = 0.445948490915965
_A2 = 0.091576213509771
TRI_DEGREE4 = TriangleRule(
    np.array(
        [
            [1.0 - 2.0 * _A1, _A1, _A1],
            [_A1, 1.0 - 2.0 * _A1, _A1],
            [_A1, _A1, 1.0 - 2.0 * _A1],
            [1.0 - 2.0 * _A2, _A2, _A2],
            [_A2, 1.0 - 2.0 * _A2, _A2],
            [_A2, _A2, 1.0 - 2.0 * _A2],
        ]
    ),
    np.array(
        [
            0.223381589678011,
            0.223381589678011,
            0.223381589678011,
            0.109951743655322,
            0.109951743655322,
            0.109951743655322,
        ]
    ),
)


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0):
    """Gauss-Legendre nodes/weights mapped onto [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def shape_functions(order: int, bary: np.ndarray) -> np.ndarray:
    """Nodal shape functions at barycentric points.

    Node order: the 3 vertices, then for order 2 the midside nodes of edges
    (0,1), (1,2), (2,0).  Returns an array of shape (npts, ndof).
    """
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    if order == 1:
        return np.stack([l0, l1, l2], axis=1)
    if order == 2:
        return np.stack(
            [
                l0 * (2.0 * l0 - 1.0),
                l1 * (2.0 * l1 - 1.0),
                l2 * (2.0 * l2 - 1.0),
                4.0 * l0 * l1,
                4.0 * l1 * l2,
                4.0 * l2 * l0,
            ],
            axis=1,
        )
    raise ValueError(f"unsupported element order {order}")


def shape_gradients(order: int, bary: np.ndarray) -> np.ndarray:
    """Barycentric gradients dN/dlambda_k, shape (npts, ndof, 3)."""
    npts = bary.shape[0]
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    z = np.zeros(npts)
    if order == 1:
        g = np.empty((npts, 3, 3))
        g[:, 0] = np.stack([z + 1.0, z, z], axis=1)
        g[:, 1] = np.stack([z, z + 1.0, z], axis=1)
        g[:, 2] = np.stack([z, z, z + 1.0], axis=1)
        return g
    if order == 2:
        g = np.empty((npts, 6, 3))
        g[:, 0] = np.stack([4.0 * l0 - 1.0, z, z], axis=1)
        g[:, 1] = np.stack([z, 4.0 * l1 - 1.0, z], axis=1)
        g[:, 2] = np.stack([z, z, 4.0 * l2 - 1.0], axis=1)
        g[:, 3] = np.stack([4.0 * l1, 4.0 * l0, z], axis=1)
        g[:, 4] = np.stack([z, 4.0 * l2, 4.0 * l1], axis=1)
        g[:, 5] = np.stack([4.0 * l2, z, 4.0 * l0], axis=1)
        return g
    raise ValueError(f"unsupported element order {order}")
