"""Joint sparse recovery of induced currents and internal-potential estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import layerpot as lp
from .forward import background_potential
from .geometry import Grid


@dataclass
class MsblState:
    X: np.ndarray  # (2n, M)
    gamma: np.ndarray  # (n,), shared by rows i and i + n
    lam: float
    iterations: int
    history: list[dict] = field(default_factory=list)

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.gamma > 0)


def msbl(A: np.ndarray, Y: np.ndarray, iter_max: int = 15, prune: float = 1e-3,
         lam_floor: float = 1e-12) -> MsblState:
    """M-SBL with variance components tied across the row pairs (i, i + n).

    Runs exactly ``iter_max`` sweeps of: Lambda = (A Gamma A' + lam I)^-1,
    X = Gamma A' Lambda Y, the paired gamma update, relative pruning below
    ``prune``, and the noise update lam = sqrt(|Y - AX|_F^2 / (M tr Lambda)).
    The returned X is zero on every row pair whose gamma was pruned.
    """
    if iter_max < 1:
        raise ValueError("iter_max must be at least 1")
    A = np.asarray(A, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] != A.shape[0]:
        Y = Y.T
    m, n2 = A.shape
    if n2 % 2:
        raise ValueError("A must have an even number of columns [A1 A2]")
    n = n2 // 2
    M = Y.shape[1]
    smax2 = np.linalg.norm(A, 2) ** 2
    floor = lam_floor * smax2
    lam = 0.01 * smax2
    gamma = np.ones(n)
    I = np.eye(m)
    history = []
    X = np.zeros((n2, M))
    for it in range(1, iter_max + 1):
        g2 = np.concatenate([gamma, gamma])
        C = (A * g2) @ A.T + lam * I
        try:
            cho = sla.cho_factor(C, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"A Gamma A' + lam I not positive definite at iteration {it}") from exc
        LY = sla.cho_solve(cho, Y, check_finite=False)
        LA = sla.cho_solve(cho, A, check_finite=False)
        X = g2[:, None] * (A.T @ LY)

        quad = np.einsum("ij,ij->j", A, LA)
        num = np.sum(X[:n] ** 2, axis=1) + np.sum(X[n:] ** 2, axis=1)
        den = M * (quad[:n] + quad[n:])
        new = np.where(gamma > 0, np.sqrt(num / den), 0.0)
        gmax = new.max()
        if gmax > 0:
            new[new / gmax < prune] = 0.0
        else:
            new[:] = 0.0
        gamma = new

        trace = np.trace(sla.cho_solve(cho, I, check_finite=False))
        resid = np.linalg.norm(Y - A @ X) ** 2
        lam = max(np.sqrt(resid / (M * trace)), floor)
        history.append({"iteration": it, "lambda": float(lam), "active": int((gamma > 0).sum())})
    # rows pruned by the last gamma update are zeroed so X and gamma share one support
    X[np.concatenate([gamma, gamma]) == 0] = 0.0
    return MsblState(X=X, gamma=gamma, lam=float(lam), iterations=iter_max, history=history)


def current_spectrum(X: np.ndarray) -> np.ndarray:
    """p_j = sqrt(sum over components and excitations of X^2) for the row pair (j, j + n)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0] // 2
    return np.sqrt(np.sum(X[:n] ** 2, axis=1) + np.sum(X[n:] ** 2, axis=1))


@dataclass
class SupportEstimate:
    indices: np.ndarray
    spectrum: np.ndarray
    threshold: float

    def __len__(self) -> int:
        return len(self.indices)


def extract_support(p: np.ndarray, eps: float = 1e-2) -> SupportEstimate:
    p = np.asarray(p, dtype=float)
    pmax = p.max() if p.size else 0.0
    if pmax <= 0:
        raise ValueError("spectrum is identically zero; no support to extract")
    return SupportEstimate(indices=np.flatnonzero(p / pmax > eps), spectrum=p, threshold=eps)


def tsvd_currents(A_sub: np.ndarray, Y: np.ndarray, ratio: float = 1e-2) -> np.ndarray:
    """Truncated-SVD least squares keeping singular values >= ratio * s_max."""
    U, s, Vt = np.linalg.svd(A_sub, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise ValueError("all singular values truncated")
    keep = s >= ratio * s[0]
    if not keep.any():
        raise ValueError("all singular values truncated")
    return Vt[keep].T @ ((U[:, keep].T @ Y) / s[keep, None])


def currents_on_support(X: np.ndarray, support) -> np.ndarray:
    """Reshape rows of a physical X (2n, M) on ``support`` into (n_tilde, M, 2)."""
    idx = np.asarray(getattr(support, "indices", support))
    n = X.shape[0] // 2
    return np.stack([X[idx], X[idx + n]], axis=-1)


@dataclass
class InternalPotential:
    cells: np.ndarray  # grid indices of the support
    values: np.ndarray  # (n_tilde, M)
    gradients: np.ndarray  # (n_tilde, M, 2)


def _stencil(grid: Grid, cells: np.ndarray):
    """Evaluation points: support cells plus their four lattice neighbours."""
    lut = {}
    pts = []
    base = grid.index[cells]
    for i, j in base:
        for di, dj in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
            key = (int(i + di), int(j + dj))
            if key not in lut:
                lut[key] = len(pts)
                pts.append(((key[0] + 0.5) * grid.h, (key[1] + 0.5) * grid.h))
    return np.array(pts), lut


def estimate_internal_potential(measurements, grid: Grid, support, currents: np.ndarray,
                                kernel: str = "calderon",
                                neumann: lp.NeumannFunction | None = None) -> InternalPotential:
    """Potential u_k on the support from boundary data and estimated currents.

    Full-boundary data: u = U + D[(u - U)] - sum grad_y Gamma(x - y_j) . I(y_j) delta.
    Partial data: u = U + sum grad_y N(x, y_j) . I(y_j) delta.
    The self-cell term is dropped.  Gradients are finite differences on the
    lattice: central inside the support, one-sided at its edge, and central
    through the neighbouring points for isolated cells.  Neighbours outside
    the domain are skipped in favour of the one-sided difference.
    """
    cells = np.asarray(getattr(support, "indices", support))
    if cells.size == 0:
        raise ValueError("empty support")
    I = np.asarray(currents, dtype=float)  # (n_tilde, M, 2)
    ks = list(measurements.ks)
    M = len(ks)
    pts, lut = _stencil(grid, cells)
    ys = grid.centers[cells]

    usable = lp.winding_number(measurements.points.curve.pos(np.linspace(0, 2 * np.pi, 1024, endpoint=False)),
                               pts) != 0
    if not np.all(usable[[lut[tuple(map(int, grid.index[c]))] for c in cells]]):
        raise ValueError("a support cell lies outside the domain")
    U = np.column_stack([background_potential(k, pts) for k in ks])
    if kernel == "calderon":
        D = lp.double_layer_matrix(measurements.points, pts, warn=False)
        base = U + D @ measurements.data
        G = -lp.grad_y_gamma(pts, ys, exclude_self=True)
    elif kernel == "neumann-partial":
        if neumann is None:
            raise ValueError("partial data needs a NeumannFunction")
        base = U
        G = neumann.gradient_interior(pts, ys, exclude_self=True)
    else:
        raise ValueError(f"unknown kernel tag {kernel!r}")

    vol = np.einsum("pjd,jkd->pk", G, I) * grid.delta
    u = base + vol  # (n_pts, M)

    in_support = {tuple(map(int, grid.index[c])) for c in cells}
    grads = np.zeros((len(cells), M, 2))
    h = grid.h
    for r, c in enumerate(cells):
        i, j = map(int, grid.index[c])
        here = u[lut[(i, j)]]
        for d, (di, dj) in enumerate(((1, 0), (0, 1))):
            fwd, bwd = (i + di, j + dj), (i - di, j - dj)
            f_ok, b_ok = usable[lut[fwd]], usable[lut[bwd]]
            if not (f_ok or b_ok):
                raise ValueError("support touches the domain boundary margin")
            f_in, b_in = fwd in in_support, bwd in in_support
            if f_ok and (not b_ok or (f_in and not b_in)):
                grads[r, :, d] = (u[lut[fwd]] - here) / h
            elif b_ok and (not f_ok or (b_in and not f_in)):
                grads[r, :, d] = (here - u[lut[bwd]]) / h
            else:
                grads[r, :, d] = (u[lut[fwd]] - u[lut[bwd]]) / (2 * h)
    values = np.array([u[lut[tuple(map(int, grid.index[c]))]] for c in cells])
    return InternalPotential(cells=cells, values=values, gradients=grads)
