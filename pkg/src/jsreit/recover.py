"""Conductivity recovery: reduced and linearised systems, C-SALSA solver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import layerpot as lp
from .forward import background_gradient
from .geometry import Grid
from .sensing import assemble_Y, kernel_for


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class ConductivitySystem:
    """Stacked y = A x with x_j = sigma(y_j) - 1 on ``cells``; A columns unit-normalised."""

    A: np.ndarray
    y: np.ndarray
    col_norms: np.ndarray
    cells: np.ndarray
    grid: Grid
    dropped: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass(frozen=True)
class CsalsaParams:
    c_tau: float = 1.0
    mu: float = 1.01
    c_eps: float = 0.04
    tol: float = 1e-8
    max_iter: int = 5000

    def __post_init__(self):
        if self.mu <= 1:
            raise ValueError("continuation factor mu must exceed 1")
        if self.c_eps <= 0:
            raise ValueError("ball radius factor must be positive")


TAU_FACTORS = (8, 4, 2, 1, 1 / 2, 1 / 4, 1 / 8)
EPS_FACTORS = (0.02, 0.04, 0.06, 0.08, 0.1, 0.2, 0.3)


@dataclass
class CsalsaResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float
    eps: float
    tau0: float


def soft_threshold(s, tau: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.maximum(np.abs(s) - tau, 0.0)


def project_ball(s, center, radius: float) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    d = s - center
    nd = np.linalg.norm(d)
    if nd <= radius:
        return s.copy()
    return center + d * (radius / nd)


def _finish(A, y, x, eps, converged, it, tau0):
    return CsalsaResult(x=x, converged=converged, iterations=it,
                        residual=float(np.linalg.norm(A @ x - y)), eps=eps, tau0=tau0)


def csalsa(A: np.ndarray, y: np.ndarray, params: CsalsaParams = CsalsaParams()) -> CsalsaResult:
    """min |x|_1 subject to |Ax - y|_2 <= c_eps |y|_2 by C-SALSA with tau continuation.

    H1 = I and H2 = A; the u-step solves (I + A'A) u = zeta1 + A' zeta2 with
    one Cholesky factor.  tau starts at c_tau * mean|(A'A + I)^-1 A'y| and is
    divided by mu every sweep.  Iteration stops once the l1 norm of a feasible
    iterate changes by less than ``tol`` relatively.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = A.shape[1]
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        return CsalsaResult(np.zeros(n), True, 0, 0.0, 0.0, 0.0)
    eps = params.c_eps * ynorm
    slack = eps * 1e-6

    cho = sla.cho_factor(np.eye(n) + A.T @ A, lower=True, check_finite=False)
    Aty = A.T @ y
    s0 = sla.cho_solve(cho, Aty, check_finite=False)
    tau = params.c_tau * float(np.mean(np.abs(s0)))
    tau0 = tau

    v1, d1 = np.zeros(n), np.zeros(n)
    v2, d2 = y.copy(), np.zeros_like(y)
    prev_cost = None
    best, best_cost = None, np.inf
    for it in range(1, params.max_iter + 1):
        z1, z2 = v1 + d1, v2 + d2
        u = sla.cho_solve(cho, z1 + A.T @ z2, check_finite=False)
        Au = A @ u
        s1 = u - d1
        s2 = Au - d2
        v1 = soft_threshold(s1, tau)
        v2 = project_ball(s2, y, eps)
        d1 = d1 - u + v1
        d2 = d2 - Au + v2
        tau /= params.mu

        feasible = np.linalg.norm(Au - y) <= eps + slack
        cost = float(np.abs(u).sum())
        if feasible:
            if cost < best_cost:
                best, best_cost = u.copy(), cost
            if prev_cost is not None and cost > 0 and abs(cost - prev_cost) / cost < params.tol:
                return _finish(A, y, u, eps, True, it, tau0)
            prev_cost = cost
        else:
            prev_cost = None
    warnings.warn("C-SALSA hit the iteration cap; returning the best feasible iterate",
                  ConvergenceWarning, stacklevel=2)
    return _finish(A, y, u if best is None else best, eps, False, params.max_iter, tau0)


def _normalize(A: np.ndarray):
    norms = np.linalg.norm(A, axis=0)
    keep = norms > 0
    return A[:, keep] / norms[keep], norms[keep], np.flatnonzero(~keep)


def _stacked_system(kernel_tab: np.ndarray, grads: np.ndarray, Y: np.ndarray, grid: Grid, cells):
    """Rows block k: -(grad_y G(x_i, y_j) . grad u_k(y_j)) delta; kernel_tab (m, nc, 2), grads (nc, M, 2)."""
    M = Y.shape[1]
    blocks = [-np.einsum("ijd,jd->ij", kernel_tab, grads[:, k, :]) * grid.delta for k in range(M)]
    A = np.vstack(blocks)
    y = Y.T.ravel()
    An, norms, dropped = _normalize(A)
    keep = np.setdiff1d(np.arange(len(cells)), dropped)
    return ConductivitySystem(A=An, y=y, col_norms=norms, cells=np.asarray(cells)[keep], grid=grid,
                              dropped=np.asarray(cells)[dropped])


def assemble_conductivity_system(grid: Grid, potential, measurements, kernel: str | None = None,
                                 table: np.ndarray | None = None,
                                 neumann: lp.NeumannFunction | None = None) -> ConductivitySystem:
    """Reduced system on the estimated support using the estimated internal potential.

    ``table`` is an optional precomputed (m, n, 2) grad_y-kernel table over the whole grid.
    """
    kernel = kernel_for(measurements.geometry) if kernel is None else kernel
    cells = potential.cells
    if table is None:
        from .sensing import kernel_table
        tab = kernel_table(grid, measurements.points, kernel, neumann)[:, cells]
    else:
        tab = table[:, cells]
    Y = assemble_Y(measurements, kernel)
    return _stacked_system(tab, potential.gradients, Y, grid, cells)


def assemble_linearized_system(grid: Grid, measurements, kernel: str | None = None,
                               table: np.ndarray | None = None,
                               neumann: lp.NeumannFunction | None = None) -> ConductivitySystem:
    """Full-grid Born system with the background gradients grad H_k."""
    kernel = kernel_for(measurements.geometry) if kernel is None else kernel
    if table is None:
        from .sensing import kernel_table
        table = kernel_table(grid, measurements.points, kernel, neumann)
    grads = np.stack([background_gradient(k, grid.centers) for k in measurements.ks], axis=1)
    Y = assemble_Y(measurements, kernel)
    return _stacked_system(table, grads, Y, grid, np.arange(grid.n))


@dataclass
class ReconField:
    """Reconstructed sigma - 1 on every grid cell."""

    grid: Grid
    values: np.ndarray
    support: np.ndarray
    solver: CsalsaResult | None = None

    @property
    def sigma(self) -> np.ndarray:
        return self.values + 1.0

    def to_csv(self, path) -> None:
        self.grid.to_csv(path, self.values)


def recover_conductivity(system: ConductivitySystem, params: CsalsaParams = CsalsaParams()) -> ReconField:
    res = csalsa(system.A, system.y, params)
    values = np.zeros(system.grid.n)
    values[system.cells] = res.x / system.col_norms
    return ReconField(grid=system.grid, values=values, support=system.cells, solver=res)


def grid_search(system: ConductivitySystem, truth: np.ndarray, mu: float = 1.01,
                tau_factors=TAU_FACTORS, eps_factors=EPS_FACTORS):
    """Pick (c_tau, c_eps) minimising the relative error against a known truth."""
    from .harness import relative_error

    best = None
    for ct in tau_factors:
        for ce in eps_factors:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                field_ = recover_conductivity(system, CsalsaParams(c_tau=ct, mu=mu, c_eps=ce))
            err = relative_error(truth, field_.values)
            if best is None or err < best[0]:
                best = (err, ct, ce)
    return best
