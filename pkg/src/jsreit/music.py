"""MUSIC localization baseline on the reconstruction grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layerpot as lp
from .geometry import BoundaryMesh, Grid


@dataclass
class MusicSpectrum:
    """Normalized MUSIC imaging functional, one value per grid cell."""

    grid: Grid
    values: np.ndarray
    signal_dim: int
    rank_one_cells: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def to_csv(self, path) -> None:
        self.grid.to_csv(path, self.values)


def signal_dimension(s: np.ndarray, rtol: float = 1e-12) -> int:
    """Index of the largest relative gap s_i / s_{i+1} among significant singular values."""
    s = np.asarray(s, dtype=float)
    sig = s[s > rtol * s[0]] if s.size and s[0] > 0 else s[:0]
    if sig.size == 0:
        raise ValueError("data matrix is zero")
    if sig.size < s.size:
        # numerically rank deficient: the gap to the noise floor is the largest one
        return int(sig.size)
    if sig.size == 1:
        return 1
    return int(np.argmax(sig[:-1] / sig[1:]) + 1)


def noise_projector(Y: np.ndarray, s: int | None = None) -> tuple[np.ndarray, int]:
    """P = I - U_s U_s' for the s dominant left singular vectors of Y.

    Returns the projector and the signal dimension used.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m = Y.shape[0]
    U, sv, _ = np.linalg.svd(Y, full_matrices=False)
    if s is None:
        s = signal_dimension(sv)
    if s < 1:
        raise ValueError("signal subspace dimension must be at least 1")
    if s >= m or s > len(sv):
        raise ValueError(f"signal subspace dimension {s} exceeds what Y supports")
    Us = U[:, :s]
    return np.eye(m) - Us @ Us.T, s


def steering_table(grid: Grid, points: BoundaryMesh, neumann: lp.NeumannFunction) -> np.ndarray:
    """(N_k)_{ij} = d/dy_k N(x_i, y_j) at measurement points; shape (m, n, 2)."""
    return neumann.gradient_on_boundary(points.nodes, grid.centers)


def music_spectrum(grid: Grid, points: BoundaryMesh, neumann: lp.NeumannFunction | None,
                   P: np.ndarray, table: np.ndarray | None = None, signal_dim: int = 0,
                   rank_tol: float = 1e-8) -> MusicSpectrum:
    """1 / lambda_min(U_j' P U_j) with U_j an orthonormal basis of the steering pair at cell j."""
    if table is None:
        if neumann is None:
            raise ValueError("need either a steering table or a NeumannFunction")
        table = steering_table(grid, points, neumann)
    vals = np.empty(grid.n)
    rank_one = []
    for j in range(grid.n):
        U, s, _ = np.linalg.svd(table[:, j, :], full_matrices=False)
        r = int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0
        if r == 0:
            vals[j] = 0.0
            continue
        if r == 1:
            rank_one.append(j)
        Uj = U[:, :r]
        lmin = np.linalg.eigvalsh(Uj.T @ P @ Uj)[0]
        vals[j] = 1.0 / max(lmin, np.finfo(float).tiny)
    vals /= vals.max()
    return MusicSpectrum(grid=grid, values=vals, signal_dim=signal_dim,
                         rank_one_cells=np.array(rank_one, dtype=int))
