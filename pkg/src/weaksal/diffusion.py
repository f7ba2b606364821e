"""Smoothing the binary hidden labeling into a saliency map.

The hard labels h diffuse over the similarity graph by solving the
symmetric positive-definite system (I + gamma*L) z = gamma*h with L the
graph Laplacian; stronger edges pull neighbors toward each other.  The raw
solution is min-max normalized per image so the map spans [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, eye_array

from .exceptions import DimensionMismatch, SolveFailure
from .features import minmax

DENSE_LIMIT = 64


def laplacian(graph):
    """Sparse graph Laplacian D - V from the similarity weights."""
    n = graph.n_regions
    if len(graph.edges) == 0:
        return coo_matrix((n, n)).tocsr()
    j, k = graph.edges[:, 0], graph.edges[:, 1]
    w = graph.weights
    rows = np.concatenate([j, k, j, k])
    cols = np.concatenate([k, j, j, k])
    vals = np.concatenate([-w, -w, w, w])
    return coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def solve_diffusion(h, graph, gamma):
    """Raw diffusion solve: z with (I + gamma*L) z = gamma*h.

    Uses a direct dense solve for small graphs and Jacobi-preconditioned
    conjugate gradients above DENSE_LIMIT regions.  Raises SolveFailure if
    the infinity-norm residual exceeds 1e-8.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    n = graph.n_regions
    if len(h) != n:
        raise DimensionMismatch(f"labeling length {len(h)} for {n} regions")
    lap = laplacian(graph)
    system = (eye_array(n, format="csr") + gamma * lap).tocsr()
    rhs = gamma * h
    if n <= DENSE_LIMIT:
        z = np.linalg.solve(system.toarray(), rhs)
    else:
        z = _cg_jacobi(system, rhs)
    residual = np.max(np.abs(system @ z - rhs)) if n else 0.0
    if residual > 1e-8:
        raise SolveFailure(f"diffusion residual {residual:.3e} above 1e-8")
    return z


def _cg_jacobi(system, rhs, rtol=1e-12):
    n = len(rhs)
    diag = system.diagonal()
    x = np.zeros(n)
    r = rhs.copy()
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs == 0:
        return x
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for _ in range(10 * n):
        ap = system @ p
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= rtol * norm_rhs:
            break
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def diffuse(h, graph, gamma=10.0):
    """Region saliency scores in [0, 1] from a hidden labeling.

    The raw solve scales with gamma, so the result is min-max normalized;
    a constant raw solution (e.g. h all equal on a tight graph) is clipped
    to [0, 1] instead, preserving all-zeros and all-ones labelings.
    """
    z = solve_diffusion(h, graph, gamma)
    if len(z) == 0:
        return z
    spread = z.max() - z.min()
    if spread > 1e-12 * max(1.0, abs(z.max())):
        return minmax(z)
    return np.clip(z, 0.0, 1.0)          # constant up to solver noise


@dataclass
class SaliencyMap:
    """Per-region scores, their pixel rendering, and the existence verdict."""

    z: np.ndarray          # (N,) in [0, 1]
    pixels: np.ndarray     # (H, W) grayscale in [0, 1]
    existence: int

    def to_uint8(self):
        return np.round(255.0 * self.pixels).astype(np.uint8)


def render(z, seg, y_star, force_black_on_background=False):
    """Paint each region's score onto its pixels.

    With the flag set, a no-existence prediction yields the all-zeros map
    (both scores and pixels), matching the all-black ground truth
    convention for background images.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if len(z) != seg.n_regions:
        raise DimensionMismatch(f"score length {len(z)} for {seg.n_regions} regions")
    if force_black_on_background and y_star == 0:
        z = np.zeros_like(z)
    return SaliencyMap(z=z, pixels=z[seg.labels], existence=int(y_star))
