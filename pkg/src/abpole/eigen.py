"""Sparse symmetric eigensolves for the reduced pencils.

Shift-invert Lanczos at sigma=0 with a deterministic start vector; results are
validated by residual and mass-orthonormality checks and sign-aligned so that
repeated runs return bitwise comparable data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import OperatorAssembly

__all__ = ["EigenPair", "SpectrumSlice", "solve_lowest", "align_sign", "simplicity_guard"]


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray  # free-DOF coefficients, mass-normalized
    residual: float


@dataclass
class SpectrumSlice:
    pairs: list
    assembly: OperatorAssembly

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs])

    def vector_full(self, n: int) -> np.ndarray:
        """Full-DOF expansion of the n-th eigenfunction (0-based)."""
        return self.assembly.expand(self.pairs[n].vector)

    def gap_below(self, n: int) -> float:
        if n == 0:
            return self.pairs[0].value
        return self.pairs[n].value - self.pairs[n - 1].value

    def gap_above(self, n: int) -> float:
        if n + 1 >= len(self.pairs):
            raise ValueError("requested gap beyond computed slice")
        return self.pairs[n + 1].value - self.pairs[n].value


def solve_lowest(assembly: OperatorAssembly, count: int, *, tol: float = 1e-9,
                 seed: int = 0, extra: int = 2,
                 maxiter: int | None = None) -> SpectrumSlice:
    """Lowest ``count`` eigenpairs of K u = lambda M u on the free DOFs.

    Solves for ``count + extra`` pairs so trailing values are converged, then
    keeps the requested ones.  Residuals ||K u - lambda M u|| / (||u||_M (1 +
    lambda)) are recorded per pair; a residual above 100*tol raises.
    """
    K = assembly.K_red
    M = assembly.M_red
    n = K.shape[0]
    k = min(count + extra, n - 1)
    if k < count:
        raise ValueError("reduced system too small for requested eigencount")
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    vals, vecs = spla.eigsh(K, k=k, M=M, sigma=0.0, which="LM", v0=v0, tol=0.0,
                            maxiter=maxiter)
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    pairs = []
    for i in range(count):
        u = vecs[:, i]
        mu = M @ u
        norm = float(np.sqrt(u @ mu))
        u = u / norm
        lam = float(vals[i])
        res = float(np.linalg.norm(K @ u - lam * (M @ u)) / (1.0 + lam))
        if res > 100.0 * tol:
            raise RuntimeError(f"eigenpair {i} residual {res:.2e} exceeds tolerance")
        pairs.append(EigenPair(lam, align_sign(u), res))
    return SpectrumSlice(pairs, assembly)


def align_sign(u: np.ndarray, reference: np.ndarray | None = None,
               M: sp.spmatrix | None = None) -> np.ndarray:
    """Deterministic sign convention.

    Against a reference vector: make the (M-weighted) overlap positive.
    Standalone: make the largest-magnitude entry positive, tie broken by the
    lowest index.
    """
    u = np.asarray(u, float)
    if reference is not None:
        ip = float(reference @ (M @ u)) if M is not None else float(reference @ u)
        return -u if ip < 0.0 else u
    i = int(np.argmax(np.abs(u)))
    return -u if u[i] < 0.0 else u


def simplicity_guard(values: np.ndarray, n: int, gap_tol: float) -> None:
    """Raise when the n-th eigenvalue (0-based) is too close to a neighbor to
    be tracked as a simple mode."""
    values = np.asarray(values, float)
    lam = values[n]
    gaps = []
    if n > 0:
        gaps.append(values[n] - values[n - 1])
    if n + 1 < len(values):
        gaps.append(values[n + 1] - values[n])
    if gaps and min(gaps) < gap_tol * max(1.0, abs(lam)):
        raise RuntimeError(
            f"eigenvalue {lam:.6g} at position {n} has relative gap "
            f"{min(gaps) / max(1.0, abs(lam)):.2e} below guard {gap_tol:.2e}"
        )
