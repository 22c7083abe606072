"""Assembly of the pairwise joint-sparse system Y = A X."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layerpot as lp
from .geometry import BoundaryMesh, Grid

KERNEL_TAGS = ("calderon", "neumann-partial")


@dataclass
class JointSystem:
    """A = [A1 A2] (m x 2n), data Y (m x M), and the column norms removed from A."""

    A: np.ndarray
    Y: np.ndarray
    col_norms: np.ndarray
    grid: Grid
    kernel: str

    @property
    def n(self) -> int:
        return self.A.shape[1] // 2

    def physical(self, X: np.ndarray) -> np.ndarray:
        """Undo the column normalisation on a recovered X."""
        return X / self.col_norms[:, None]


def kernel_for(geometry: str) -> str:
    return "neumann-partial" if geometry == "m16p" else "calderon"


def assemble_Y(measurements, kernel: str | None = None) -> np.ndarray:
    """Data matrix: (-1/2 I + K) of each trace, or the raw traces for partial data."""
    kernel = kernel_for(measurements.geometry) if kernel is None else kernel
    if kernel not in KERNEL_TAGS:
        raise ValueError(f"unknown kernel tag {kernel!r}")
    if measurements.geometry == "m16p" and kernel != "neumann-partial":
        raise ValueError("partial-boundary data needs the neumann-partial kernel")
    if kernel == "neumann-partial":
        return np.array(measurements.data, dtype=float, copy=True)
    return lp.apply_half_minus_K(measurements.points, measurements.data)


def _check_clearance(grid: Grid, points: np.ndarray) -> None:
    d2 = ((grid.centers[None, :, :] - points[:, None, :]) ** 2).sum(-1)
    if np.sqrt(d2.min()) < 0.25 * grid.h:
        raise ValueError("a grid center lies within h/4 of a measurement point")


def kernel_table(grid: Grid, points: BoundaryMesh, kernel: str = "calderon",
                 neumann: lp.NeumannFunction | None = None) -> np.ndarray:
    """grad_y G(x_i, y_j) for G = Gamma(x - y) or the Neumann function; shape (m, n, 2)."""
    x = points.nodes
    _check_clearance(grid, x)
    if kernel == "calderon":
        return lp.grad_y_gamma(x, grid.centers)
    if kernel == "neumann-partial":
        if neumann is None:
            raise ValueError("neumann-partial kernel needs a NeumannFunction")
        return neumann.gradient_on_boundary(x, grid.centers)
    raise ValueError(f"unknown kernel tag {kernel!r}")


def assemble_A(grid: Grid, points: BoundaryMesh, kernel: str = "calderon",
               neumann: lp.NeumannFunction | None = None, table: np.ndarray | None = None) -> np.ndarray:
    """Midpoint-rule sensing matrix [A1 A2], entries [grad_y G(x_i, y_j)]_d * delta."""
    G = kernel_table(grid, points, kernel, neumann) if table is None else table
    return np.hstack([G[..., 0], G[..., 1]]) * grid.delta


def subcell_A(grid: Grid, points: BoundaryMesh, q: int = 4) -> np.ndarray:
    """Sensing matrix with a q x q sub-cell midpoint rule (Gamma kernel only)."""
    h = grid.h
    offs = (np.arange(q) + 0.5) / q * h - h / 2
    A1 = np.zeros((len(points), grid.n))
    A2 = np.zeros_like(A1)
    for ox in offs:
        for oy in offs:
            G = lp.grad_y_gamma(points.nodes, grid.centers + np.array([ox, oy]))
            A1 += G[..., 0]
            A2 += G[..., 1]
    return np.hstack([A1, A2]) * grid.delta / q**2


def normalize_columns(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise ValueError("sensing matrix has a zero column")
    return A / norms, norms


def precondition(A: np.ndarray, Y: np.ndarray, lam: float | None = None):
    """Regularised preconditioner P = (S^2 + lam I)^(-1/2) U'; returns (PA, PY).

    The default lam is 1e-3 * sigma_max(A)^2.
    """
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if lam is None:
        lam = 1e-3 * s[0] ** 2
    if lam < 0:
        raise ValueError("preconditioner regularisation must be non-negative")
    P = U.T / np.sqrt(s**2 + lam)[:, None]
    return P @ A, P @ Y


def build_joint_system(grid: Grid, measurements, kernel: str | None = None,
                       neumann: lp.NeumannFunction | None = None,
                       table: np.ndarray | None = None) -> JointSystem:
    kernel = kernel_for(measurements.geometry) if kernel is None else kernel
    Y = assemble_Y(measurements, kernel)
    A = assemble_A(grid, measurements.points, kernel, neumann, table)
    An, norms = normalize_columns(A)
    return JointSystem(A=An, Y=Y, col_norms=norms, grid=grid, kernel=kernel)
