"""Laplace kernels and Nystrom discretisations of 2-D layer potentials.

Conventions: ``Gamma(x) = ln|x| / (2 pi)``, unit normals point outward, and
the Neumann-Poincare operator is

    K[phi](x) = 1/(2 pi) int <y - x, nu_y> / |x - y|^2 phi(y) dsigma(y),

so that K[1] = 1/2 on a closed curve and the interior double-layer limit is
(1/2 I + K).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .geometry import BoundaryMesh, winding_number

_TWO_PI = 2.0 * np.pi


class BoundaryProximityWarning(UserWarning):
    """Interior evaluation point closer to the boundary than the quadrature resolves."""


def gamma(x) -> np.ndarray:
    """Fundamental solution ln|x| / (2 pi); ``x`` has shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0):
        raise ValueError("fundamental solution is singular at x = 0")
    return np.log(r2) / (2 * _TWO_PI)


def grad_gamma(x) -> np.ndarray:
    """Gradient x / (2 pi |x|^2) of the fundamental solution."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(r2 == 0):
        raise ValueError("fundamental solution is singular at x = 0")
    return x / (_TWO_PI * r2)


def grad_y_gamma(x, y, exclude_self: bool = False) -> np.ndarray:
    """Pairwise table of grad_y Gamma(x_i - y_j) = (y_j - x_i) / (2 pi |x_i - y_j|^2).

    Returns an array of shape (len(x), len(y), 2).  With ``exclude_self``
    coincident pairs get 0 instead of raising.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    diff = y[None, :, :] - x[:, None, :]
    r2 = np.sum(diff * diff, axis=-1, keepdims=True)
    same = r2 == 0
    if same.any():
        if not exclude_self:
            raise ValueError("coincident source and target points")
        r2 = np.where(same, 1.0, r2)
    return np.where(same, 0.0, diff / (_TWO_PI * r2))


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: np.ndarray
    tag: str

    def __matmul__(self, other):
        return self.matrix @ other


def _pairwise(targets: np.ndarray, sources: np.ndarray):
    diff = sources[None, :, :] - targets[:, None, :]
    return diff, np.sum(diff * diff, axis=-1)


def np_matrix(mesh: BoundaryMesh, targets: BoundaryMesh | np.ndarray | None = None, tol: float = 1e-9) -> np.ndarray:
    """Nystrom matrix of K with sources on ``mesh``, evaluated at boundary ``targets``.

    A target that coincides with a source node gets the smooth-curve limit
    curvature / (4 pi) times that node's weight.
    """
    tx = mesh.nodes if targets is None else getattr(targets, "nodes", targets)
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    diff, r2 = _pairwise(tx, mesh.nodes)
    scale = max(1.0, float(np.abs(mesh.nodes).max()))
    coincident = r2 < (tol * scale) ** 2
    num = np.einsum("ijk,jk->ij", diff, mesh.normals)
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = num / (_TWO_PI * r2)
    if coincident.any():
        ii, jj = np.nonzero(coincident)
        kern[ii, jj] = mesh.curvature[jj] / (2 * _TWO_PI)
    return kern * mesh.weights[None, :]


def np_operator(mesh: BoundaryMesh, eval_points: BoundaryMesh | np.ndarray | None = None) -> OperatorMatrix:
    """Discretised Neumann-Poincare operator on ``mesh``."""
    return OperatorMatrix(np_matrix(mesh, eval_points), "K")


def np_adjoint_matrix(mesh: BoundaryMesh) -> np.ndarray:
    """Nystrom matrix of the adjoint operator K* on the mesh's own nodes."""
    diff, r2 = _pairwise(mesh.nodes, mesh.nodes)
    np.fill_diagonal(r2, 1.0)
    # <x_i - y_j, nu_i> = -<diff_ij, nu_i>
    num = -np.einsum("ijk,ik->ij", diff, mesh.normals)
    kern = num / (_TWO_PI * r2)
    np.fill_diagonal(kern, mesh.curvature / (2 * _TWO_PI))
    return kern * mesh.weights[None, :]


def apply_half_minus_K(points: BoundaryMesh, values) -> np.ndarray:
    """Apply (-1/2 I + K) to data known only at the sampling points.

    K is discretised on the sampling points themselves with their own
    arc-length weights.  ``values`` may be a vector or an (m, M) array.
    """
    if len(points) < 4:
        raise ValueError("need at least 4 sampling points")
    v = np.asarray(values, dtype=float)
    K = np_matrix(points)
    return -0.5 * v + K @ v


def double_layer_matrix(mesh: BoundaryMesh, x, warn: bool = True) -> np.ndarray:
    """Matrix D with D @ phi = D_{dOmega}[phi](x) at off-boundary points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    diff, r2 = _pairwise(x, mesh.nodes)
    if np.any(r2 == 0):
        raise ValueError("double layer evaluated on a boundary node")
    if warn:
        dist = np.sqrt(r2.min(axis=1))
        if np.any(dist < 2 * mesh.node_spacing()):
            warnings.warn(
                "double layer evaluated within two node spacings of the boundary",
                BoundaryProximityWarning, stacklevel=2,
            )
    num = np.einsum("ijk,jk->ij", diff, mesh.normals)
    return num / (_TWO_PI * r2) * mesh.weights[None, :]


def double_layer(mesh: BoundaryMesh, density, x) -> np.ndarray | float:
    """Double layer potential of ``density`` at interior (or exterior) point(s) ``x``."""
    x_arr = np.asarray(x, dtype=float)
    out = double_layer_matrix(mesh, x_arr) @ np.asarray(density, dtype=float)
    return float(out[0]) if x_arr.ndim == 1 and out.ndim == 1 else out


def single_layer_matrix(mesh: BoundaryMesh, x) -> np.ndarray:
    """Single layer S[psi](x) = int Gamma(x - y) psi(y) dsigma(y) at off-curve points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, r2 = _pairwise(x, mesh.nodes)
    if np.any(r2 == 0):
        raise ValueError("single layer evaluated on a node; use single_layer_self")
    return np.log(r2) / (2 * _TWO_PI) * mesh.weights[None, :]


def single_layer_grad_matrices(mesh: BoundaryMesh, x) -> tuple[np.ndarray, np.ndarray]:
    """Matrices for the x-gradient of the single layer at off-curve points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    diff, r2 = _pairwise(x, mesh.nodes)
    # grad_x Gamma(x - y) = (x - y) / (2 pi |x - y|^2) = -diff / (2 pi r2)
    g = -diff / (_TWO_PI * r2[..., None]) * mesh.weights[None, :, None]
    return g[..., 0], g[..., 1]


def normal_derivative_single_layer(source: BoundaryMesh, target: BoundaryMesh) -> np.ndarray:
    """d/dnu_x S_source[psi](x) at nodes of a different, disjoint curve."""
    diff, r2 = _pairwise(target.nodes, source.nodes)
    num = -np.einsum("ijk,ik->ij", diff, target.normals)
    return num / (_TWO_PI * r2) * source.weights[None, :]


def _kress_weights(L: int) -> np.ndarray:
    """Circulant weights R_k for int ln(4 sin^2((t - s)/2)) f(s) ds, k = i - j."""
    if L % 2:
        raise ValueError("Kress quadrature needs an even node count")
    n = L // 2
    k = np.arange(L)
    tau = np.pi * k / n
    m = np.arange(1, n)
    R = -(2 * np.pi / n) * (np.cos(np.outer(tau, m)) / m).sum(axis=1)
    R -= (np.pi / n**2) * np.cos(n * tau)
    return R


def single_layer_self(mesh: BoundaryMesh) -> np.ndarray:
    """Single layer on its own uniformly parametrised curve, Kress product rule."""
    if not mesh.is_uniform:
        raise ValueError("Kress quadrature needs a uniform full-period parametrisation")
    L = len(mesh)
    t = mesh.params
    R = _kress_weights(L)
    idx = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    Rm = R[idx]
    _, r2 = _pairwise(mesh.nodes, mesh.nodes)
    s2 = 4 * np.sin((t[:, None] - t[None, :]) / 2) ** 2
    np.fill_diagonal(s2, 1.0)
    np.fill_diagonal(r2, 1.0)
    smooth = np.log(r2 / s2)
    np.fill_diagonal(smooth, 2 * np.log(mesh.speed))
    dt = 2 * np.pi / L
    # ln|x - y| = 1/2 ln(4 sin^2) + 1/2 smooth
    S = (0.5 * Rm + 0.5 * smooth * dt) * mesh.speed[None, :] / _TWO_PI
    return S


def trig_interpolate(values: np.ndarray, t_new) -> np.ndarray:
    """Evaluate the trigonometric interpolant of uniform periodic samples at ``t_new``."""
    v = np.asarray(values, dtype=float)
    L = v.shape[0]
    c = np.fft.fft(v, axis=0) / L
    k = np.fft.fftfreq(L, d=1.0 / L)
    if L % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant is real
        nyq = L // 2
        c = np.concatenate([c, c[nyq:nyq + 1] * 0.5], axis=0)
        c[nyq] *= 0.5
        k = np.concatenate([k, [L // 2]])
        k[nyq] = -L // 2
    E = np.exp(1j * np.outer(np.asarray(t_new, dtype=float), k))
    return np.real(E @ c)


class NeumannFunction:
    """y-gradients of the Neumann function N(x, y) of the domain bounded by ``mesh``.

    N solves -Lap_x N = delta_y, dN/dnu_x = -1/|dOmega|, zero boundary mean.
    Differentiating the identity (-1/2 I + K)[N(., y)] = Gamma(. - y) + c(x)
    (c independent of y) in y gives, for each component d,

        (-1/2 I + K)[d_{y_d} N(., y)] = d_{y_d} Gamma(. - y),

    a second-kind equation solved once per y with a bordered zero-mean
    constraint.  Interior values use
    grad_y N(x, y) = -grad_y Gamma(x - y) + D[grad_y N(., y)](x).
    """

    def __init__(self, mesh: BoundaryMesh):
        self.mesh = mesh
        L = len(mesh)
        B = np.empty((L + 1, L + 1))
        B[:L, :L] = np_matrix(mesh) - 0.5 * np.eye(L)
        B[:L, L] = -1.0
        B[L, :L] = mesh.weights
        B[L, L] = 0.0
        self._lu = sla.lu_factor(B)
        rcond = sla.lapack.dgecon(self._lu[0], np.linalg.norm(B, 1))[0]
        if rcond < 1e-13:
            raise np.linalg.LinAlgError("singular Neumann corrector system")

    def boundary_density(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Traces of grad_y N(., y_j) at mesh nodes: array (L, ny, 2), plus constants (ny, 2)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        L = len(self.mesh)
        rhs = grad_y_gamma(self.mesh.nodes, y)  # (L, ny, 2)
        ny = len(y)
        full = np.zeros((L + 1, ny * 2))
        full[:L] = rhs.reshape(L, ny * 2)
        sol = sla.lu_solve(self._lu, full)
        return sol[:L].reshape(L, ny, 2), sol[L].reshape(ny, 2)

    def gradient_on_boundary(self, x, y, density=None) -> np.ndarray:
        """grad_y N(x_i, y_j) for points ``x`` lying on the boundary curve; shape (nx, ny, 2)."""
        x = np.atleast_2d(getattr(x, "nodes", x))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        phi, c = self.boundary_density(y) if density is None else density
        K = np_matrix(self.mesh, x)
        Kphi = np.einsum("il,ljd->ijd", K, phi)
        g = grad_y_gamma(x, y)
        return 2.0 * (Kphi - g - c[None, :, :])

    def gradient_interior(self, x, y, density=None, exclude_self: bool = False) -> np.ndarray:
        """grad_y N(x_i, y_j) for interior points ``x``; shape (nx, ny, 2).

        Coincident pairs raise unless ``exclude_self``, which sets them to 0.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        phi, _ = self.boundary_density(y) if density is None else density
        D = double_layer_matrix(self.mesh, x)
        out = np.einsum("il,ljd->ijd", D, phi) - grad_y_gamma(x, y, exclude_self)
        if exclude_self:
            same = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1) == 0
            out[same] = 0.0
        return out


def neumann_gradient(mesh: BoundaryMesh, x, y, interior: bool = False) -> np.ndarray:
    """grad_y N(x, y) for boundary (default) or interior points x."""
    y_arr = np.atleast_2d(np.asarray(y, dtype=float))
    if np.any(winding_number(mesh.nodes, y_arr) == 0):
        raise ValueError("source point y must lie strictly inside the domain")
    nf = NeumannFunction(mesh)
    out = nf.gradient_interior(x, y_arr) if interior else nf.gradient_on_boundary(x, y_arr)
    if np.asarray(x).ndim == 1 and np.asarray(y).ndim == 1:
        return out[0, 0]
    return out


def _log_antiderivative(a: np.ndarray, t: np.ndarray) -> np.ndarray:
    """int ln(a^2 + t^2) dt."""
    with np.errstate(divide="ignore", invalid="ignore"):
        atan = np.where(a == 0, 0.0, a * np.arctan(t / np.where(a == 0, 1.0, a)))
        tlog = np.where((a == 0) & (t == 0), 0.0, t * np.log(a * a + t * t))
    return tlog - 2 * t + 2 * atan


def cell_grad_y_gamma(x, centers, h: float) -> np.ndarray:
    """Exact integrals of grad_y Gamma(x - y) over the squares of side h at ``centers``.

    By the divergence theorem each component is a difference of line integrals
    of Gamma over opposite square edges, which have closed forms.  Shape
    (len(x), len(centers), 2).  Finite for x inside a cell.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    dx = c[None, :, 0] - x[:, None, 0]
    dy = c[None, :, 1] - x[:, None, 1]
    r = h / 2
    scale = 1.0 / (4 * np.pi)

    def edge(a, lo, hi):
        return _log_antiderivative(a, hi) - _log_antiderivative(a, lo)

    g1 = scale * (edge(dx + r, dy - r, dy + r) - edge(dx - r, dy - r, dy + r))
    g2 = scale * (edge(dy + r, dx - r, dx + r) - edge(dy - r, dx - r, dx + r))
    return np.stack([g1, g2], axis=-1)
