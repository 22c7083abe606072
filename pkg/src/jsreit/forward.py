"""Forward transmission solver, background potentials and synthetic measurements."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import layerpot as lp
from .geometry import BoundaryMesh, Scenario, make_ellipse, measurement_points


def background_potential(k: int, x) -> np.ndarray:
    """Harmonic polynomial H_k at x: x1, x2, x1^2 - x2^2, x1 x2 for k = 1..4."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    if k == 1:
        return x1
    if k == 2:
        return x2
    if k == 3:
        return x1**2 - x2**2
    if k == 4:
        return x1 * x2
    raise ValueError(f"excitation index must be 1..4, got {k}")


def background_gradient(k: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    one, zero = np.ones_like(x1), np.zeros_like(x1)
    if k == 1:
        return np.stack([one, zero], axis=-1)
    if k == 2:
        return np.stack([zero, one], axis=-1)
    if k == 3:
        return np.stack([2 * x1, -2 * x2], axis=-1)
    if k == 4:
        return np.stack([x2, x1], axis=-1)
    raise ValueError(f"excitation index must be 1..4, got {k}")


@dataclass(frozen=True)
class Excitation:
    """Boundary current g_k = grad H_k . nu."""

    k: int

    def current(self, mesh: BoundaryMesh) -> np.ndarray:
        return np.sum(background_gradient(self.k, mesh.nodes) * mesh.normals, axis=1)

    def potential(self, x) -> np.ndarray:
        return background_potential(self.k, x)

    def gradient(self, x) -> np.ndarray:
        return background_gradient(self.k, x)


def excitations(M: int) -> list[Excitation]:
    return [Excitation(k) for k in range(1, M + 1)]


@dataclass
class TransmissionSolution:
    """Single-layer densities for u_k = H_k + S_dOmega[psi] + sum_p S_dDp[phi_p] - const."""

    mesh: BoundaryMesh
    inclusion_meshes: list[BoundaryMesh]
    ks: list[int]
    psi: np.ndarray  # (L, M)
    phis: list[np.ndarray]  # each (L_p, M)
    perturbation: np.ndarray  # (u_k - U_k) at mesh nodes, (L, M)
    offset: np.ndarray  # constant removed from H_k + w so that u_k has zero boundary mean
    rcond: float = float("nan")

    def trace(self, t) -> np.ndarray:
        """(u_k - U_k) at boundary parameter values ``t`` via trigonometric interpolation."""
        return lp.trig_interpolate(self.perturbation, t)

    def potential(self, x) -> np.ndarray:
        """u_k at interior points off the inclusion boundaries, shape (len(x), M)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = lp.single_layer_matrix(self.mesh, x) @ self.psi
        for m, phi in zip(self.inclusion_meshes, self.phis):
            u += lp.single_layer_matrix(m, x) @ phi
        H = np.column_stack([background_potential(k, x) for k in self.ks])
        return H + u - self.offset[None, :]

    def gradient(self, x) -> np.ndarray:
        """grad u_k at interior points off the inclusion boundaries, shape (len(x), M, 2)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g = np.stack([background_gradient(k, x) for k in self.ks], axis=1)
        for m, dens in [(self.mesh, self.psi)] + list(zip(self.inclusion_meshes, self.phis)):
            G1, G2 = lp.single_layer_grad_matrices(m, x)
            g += np.stack([G1 @ dens, G2 @ dens], axis=-1)
        return g


def solve_transmission(
    scenario: Scenario,
    ks=None,
    mesh: BoundaryMesh | None = None,
    nodes: int = 2000,
    inclusion_nodes: int | None = None,
) -> TransmissionSolution:
    """Solve the transmission problem for excitations ``ks`` with one dense system.

    Unknowns are single-layer densities on the outer boundary and on each
    inclusion boundary.  The outer Neumann block (-1/2 I + K*) is bordered
    with a zero-mean constraint on its density.
    """
    ks = list(range(1, scenario.M + 1)) if ks is None else list(ks)
    mesh = make_ellipse(scenario.a, scenario.b, nodes) if mesh is None else mesh
    inclusion_nodes = nodes if inclusion_nodes is None else inclusion_nodes
    incl = [an.shape.mesh(inclusion_nodes) for an in scenario.anomalies]
    sig = [an.conductivity for an in scenario.anomalies]
    curves = [mesh] + incl
    sizes = [len(c) for c in curves]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    Ntot = offs[-1] + 1
    A = np.zeros((Ntot, Ntot))
    rhs = np.zeros((Ntot, len(ks)))
    L0 = sizes[0]

    A[:L0, :L0] = lp.np_adjoint_matrix(mesh) - 0.5 * np.eye(L0)
    A[:L0, -1] = 1.0
    A[-1, :L0] = mesh.weights
    for p, (m, s) in enumerate(zip(incl, sig), start=1):
        sl = slice(offs[p], offs[p + 1])
        lam = (s + 1) / (2 * (s - 1))
        A[sl, sl] = lam * np.eye(sizes[p]) - lp.np_adjoint_matrix(m)
        for q, src in enumerate(curves):
            if q == p:
                continue
            ql = slice(offs[q], offs[q + 1])
            A[sl, ql] = -lp.normal_derivative_single_layer(src, m)
        # flux of the inclusion's single layer through the outer boundary
        A[:L0, sl] = lp.normal_derivative_single_layer(m, mesh)
        for j, k in enumerate(ks):
            rhs[sl, j] = np.sum(background_gradient(k, m.nodes) * m.normals, axis=1)

    lu = sla.lu_factor(A, overwrite_a=False, check_finite=False)
    rcond = float(sla.lapack.dgecon(lu[0], np.linalg.norm(A, 1))[0])
    sol = sla.lu_solve(lu, rhs)
    psi = sol[:L0]
    phis = [sol[offs[p]:offs[p + 1]] for p in range(1, len(curves))]

    w = lp.single_layer_self(mesh) @ psi
    for m, phi in zip(incl, phis):
        w += lp.single_layer_matrix(m, mesh.nodes) @ phi
    per = mesh.weights.sum()
    w_mean = mesh.weights @ w / per
    H_mean = np.array([mesh.weights @ background_potential(k, mesh.nodes) for k in ks]) / per
    return TransmissionSolution(
        mesh=mesh, inclusion_meshes=incl, ks=ks, psi=psi, phis=phis,
        perturbation=w - w_mean[None, :], offset=w_mean + H_mean, rcond=rcond,
    )


@dataclass
class MeasurementSet:
    """Sampled (u_k - U_k) at measurement points, with a noiseless copy."""

    data: np.ndarray  # (m, M)
    clean: np.ndarray  # (m, M)
    points: BoundaryMesh
    geometry: str
    snr: float
    seed: int | None
    ks: list[int] = field(default_factory=lambda: [1, 2])

    @property
    def m(self) -> int:
        return self.data.shape[0]

    def to_files(self, stem) -> tuple[Path, Path]:
        stem = Path(stem)
        csv = stem.with_suffix(".csv")
        header = "t,x1,x2," + ",".join(f"k{k}" for k in self.ks)
        body = np.column_stack([self.points.params, self.points.nodes, self.data])
        np.savetxt(csv, body, delimiter=",", header=header, comments="")
        clean = stem.with_name(stem.name + "_clean").with_suffix(".csv")
        np.savetxt(clean, np.column_stack([self.points.params, self.points.nodes, self.clean]),
                   delimiter=",", header=header, comments="")
        meta = stem.with_suffix(".json")
        meta.write_text(json.dumps({
            "geometry": self.geometry, "snr": self.snr, "seed": self.seed, "ks": self.ks,
            "m": self.m, "data": csv.name, "clean": clean.name,
        }, indent=2))
        return csv, meta

    @classmethod
    def from_files(cls, stem, mesh: BoundaryMesh, half: str = "upper") -> "MeasurementSet":
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".json").read_text())
        pts = measurement_points(meta["geometry"], mesh, half=half)
        raw = np.loadtxt(stem.with_name(meta["data"]), delimiter=",", skiprows=1, ndmin=2)
        clean = np.loadtxt(stem.with_name(meta["clean"]), delimiter=",", skiprows=1, ndmin=2)
        if not np.allclose(raw[:, 0], pts.params):
            raise ValueError("stored sampling points do not match the geometry tag")
        snr = meta["snr"]
        return cls(data=raw[:, 3:], clean=clean[:, 3:], points=pts, geometry=meta["geometry"],
                   snr=float("inf") if snr is None else float(snr), seed=meta["seed"], ks=meta["ks"])


def add_noise(signal: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Gaussian noise with per-entry variance |s|^2 / (m 10^(snr/10))."""
    if not np.isfinite(snr_db):
        return signal.copy()
    scale = np.linalg.norm(signal) / np.sqrt(signal.size) / 10 ** (snr_db / 20)
    return signal + scale * rng.standard_normal(signal.shape)


def measure(solution: TransmissionSolution, scenario: Scenario, seed: int | None = 0,
            geometry: str | None = None, snr: float | None = None) -> MeasurementSet:
    """Sample the perturbation trace at the geometry's points and add noise per excitation."""
    geometry = scenario.geometry if geometry is None else geometry
    snr = scenario.snr if snr is None else snr
    pts = measurement_points(geometry, solution.mesh, half=scenario.half)
    clean = solution.trace(pts.params)
    data = np.empty_like(clean)
    for j, k in enumerate(solution.ks):
        rng = np.random.default_rng([0 if seed is None else seed, k])
        data[:, j] = add_noise(clean[:, j], snr, rng)
    return MeasurementSet(data=data, clean=clean, points=pts, geometry=geometry, snr=snr,
                          seed=seed, ks=list(solution.ks))
