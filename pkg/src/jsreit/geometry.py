"""Domains, anomaly shapes, boundary meshes and reconstruction grids.

Every closed curve here is a smooth 2*pi-periodic parametrisation traversed
counterclockwise, so the trapezoidal rule in the parameter is spectrally
accurate for smooth integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GEOMETRY_TAGS = ("m100", "m32", "m16", "m16p")


@dataclass(frozen=True)
class Curve:
    """Closed parametric curve x(t), t in [0, 2*pi).

    ``pos``, ``d1`` and ``d2`` map an array of parameters to (len(t), 2)
    arrays holding x(t), x'(t) and x''(t).
    """

    pos: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    name: str = "curve"

    def discretize(self, L: int, t: np.ndarray | None = None, dt: float | None = None) -> "BoundaryMesh":
        if t is None:
            if L < 4:
                raise ValueError("need at least 4 nodes")
            t = 2 * np.pi * np.arange(L) / L
            dt = 2 * np.pi / L
        t = np.asarray(t, dtype=float)
        x = self.pos(t)
        xp = self.d1(t)
        xpp = self.d2(t)
        speed = np.hypot(xp[:, 0], xp[:, 1])
        # outward normal of a counterclockwise curve: tangent rotated by -90 deg
        normals = np.column_stack([xp[:, 1], -xp[:, 0]]) / speed[:, None]
        curvature = (xp[:, 0] * xpp[:, 1] - xp[:, 1] * xpp[:, 0]) / speed**3
        weights = speed * (dt if dt is not None else 2 * np.pi / len(t))
        return BoundaryMesh(
            nodes=x, normals=normals, weights=weights, curvature=curvature,
            params=t, speed=speed, curve=self,
        )


@dataclass(frozen=True)
class BoundaryMesh:
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    curvature: np.ndarray
    params: np.ndarray
    speed: np.ndarray
    curve: Curve | None = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def perimeter(self) -> float:
        return float(self.weights.sum())

    @property
    def is_uniform(self) -> bool:
        """True for a full-period uniform parameter grid (Kress quadrature applies)."""
        L = len(self.params)
        expected = self.params[0] + 2 * np.pi * np.arange(L) / L
        return bool(np.allclose(self.params, expected, atol=1e-12))

    def signed_area(self) -> float:
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def node_spacing(self) -> float:
        return float(self.weights.max())

    def to_csv(self, path) -> None:
        data = np.column_stack([self.params, self.nodes, self.normals, self.curvature, self.weights])
        np.savetxt(path, data, delimiter=",", header="t,x1,x2,nu1,nu2,curvature,weight", comments="")


def ellipse_curve(a: float, b: float, center: Sequence[float] = (0.0, 0.0)) -> Curve:
    cx, cy = map(float, center)
    return Curve(
        pos=lambda t: np.column_stack([cx + a * np.cos(t), cy + b * np.sin(t)]),
        d1=lambda t: np.column_stack([-a * np.sin(t), b * np.cos(t)]),
        d2=lambda t: np.column_stack([-a * np.cos(t), -b * np.sin(t)]),
        name=f"ellipse({a:g},{b:g})",
    )


def kite_curve(center: Sequence[float] = (0.0, 0.0), scale: float = 1.5) -> Curve:
    """Kite (cos t + 0.65 cos 2t - 0.65, 1.5 sin t), scaled and shifted."""
    cx, cy = map(float, center)
    s = float(scale)
    return Curve(
        pos=lambda t: np.column_stack(
            [cx + s * (np.cos(t) + 0.65 * np.cos(2 * t) - 0.65), cy + s * 1.5 * np.sin(t)]
        ),
        d1=lambda t: np.column_stack([s * (-np.sin(t) - 1.3 * np.sin(2 * t)), s * 1.5 * np.cos(t)]),
        d2=lambda t: np.column_stack([s * (-np.cos(t) - 2.6 * np.cos(2 * t)), -s * 1.5 * np.sin(t)]),
        name=f"kite({s:g})",
    )


def make_ellipse(a: float, b: float, L: int) -> BoundaryMesh:
    """Uniform-parameter discretisation of the ellipse (a cos t, b sin t)."""
    if a <= 0 or b <= 0:
        raise ValueError("ellipse semi-axes must be positive")
    if L < 16:
        raise ValueError("L must be at least 16")
    return ellipse_curve(a, b).discretize(L)


@dataclass(frozen=True)
class AnomalyShape:
    """A disk (center, radius) or kite (center, scale) inclusion."""

    kind: str
    center: tuple[float, float]
    size: float

    def __post_init__(self):
        if self.kind not in ("disk", "kite"):
            raise ValueError(f"unknown anomaly kind {self.kind!r}")
        if self.size <= 0:
            raise ValueError("anomaly radius/scale must be positive")

    @classmethod
    def disk(cls, center, radius: float) -> "AnomalyShape":
        return cls("disk", (float(center[0]), float(center[1])), float(radius))

    @classmethod
    def kite(cls, center=(0.0, 0.0), scale: float = 1.5) -> "AnomalyShape":
        return cls("kite", (float(center[0]), float(center[1])), float(scale))

    def curve(self) -> Curve:
        if self.kind == "disk":
            return ellipse_curve(self.size, self.size, self.center)
        return kite_curve(self.center, self.size)

    def mesh(self, L: int) -> BoundaryMesh:
        return self.curve().discretize(L)

    def contains(self, points: np.ndarray, polygon_nodes: int = 4096) -> np.ndarray:
        """Point-in-shape test; analytic for disks, winding number for kites."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "disk":
            d2 = (p[:, 0] - self.center[0]) ** 2 + (p[:, 1] - self.center[1]) ** 2
            return d2 < self.size**2
        poly = self.curve().pos(2 * np.pi * np.arange(polygon_nodes) / polygon_nodes)
        return winding_number(poly, p) != 0


def winding_number(polygon: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Winding number of a closed polygon around each point."""
    p = np.atleast_2d(points)
    a = polygon[None, :, :] - p[:, None, :]
    b = np.roll(polygon, -1, axis=0)[None, :, :] - p[:, None, :]
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = (a * b).sum(-1)
    return np.rint(np.arctan2(cross, dot).sum(axis=1) / (2 * np.pi)).astype(int)


@dataclass(frozen=True)
class Anomaly:
    shape: AnomalyShape
    conductivity: float


@dataclass
class Scenario:
    """Background ellipse, inclusions and acquisition settings."""

    a: float = 10.0
    b: float = 7.0
    anomalies: list[Anomaly] = field(default_factory=list)
    h: float = 0.5
    geometry: str = "m100"
    M: int = 2
    snr: float = 40.0
    name: str = "custom"
    half: str = "upper"

    def __post_init__(self):
        if self.geometry not in GEOMETRY_TAGS:
            raise ValueError(f"geometry must be one of {GEOMETRY_TAGS}")
        if self.M not in (1, 2, 3, 4):
            raise ValueError("M must be between 1 and 4")
        for an in self.anomalies:
            if not (an.conductivity > 0) or not np.isfinite(an.conductivity):
                raise ValueError("anomaly conductivity must be positive and finite")
            if an.conductivity == 1:
                raise ValueError("anomaly conductivity must differ from the background value 1")
            nodes = an.shape.mesh(256).nodes
            if np.any((nodes[:, 0] / self.a) ** 2 + (nodes[:, 1] / self.b) ** 2 >= 1):
                raise ValueError("anomaly must lie strictly inside the background ellipse")
        for i, p in enumerate(self.anomalies):
            for q in self.anomalies[i + 1:]:
                if np.any(q.shape.contains(p.shape.mesh(256).nodes)) or np.any(
                    p.shape.contains(q.shape.mesh(256).nodes)
                ):
                    raise ValueError("anomalies must be pairwise disjoint")

    def replace(self, **kw) -> "Scenario":
        d = dict(self.__dict__)
        d.update(kw)
        return Scenario(**d)


@dataclass(frozen=True)
class Grid:
    """Cell-centred reconstruction lattice restricted to the ellipse."""

    centers: np.ndarray
    h: float
    sigma: np.ndarray
    index: np.ndarray  # integer lattice coordinates (i, j) of each center

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def delta(self) -> float:
        return self.h**2

    @property
    def contrast(self) -> np.ndarray:
        """sigma - 1 per cell."""
        return self.sigma - 1.0

    def lookup(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.index)}

    def to_csv(self, path, values: np.ndarray | None = None) -> None:
        v = self.sigma if values is None else values
        data = np.column_stack([self.centers, v])
        np.savetxt(path, data, delimiter=",", header="y1,y2,value", comments="")


def label_cells(centers: np.ndarray, anomalies: Sequence[Anomaly]) -> np.ndarray:
    sigma = np.ones(len(centers))
    for an in anomalies:
        sigma[an.shape.contains(centers)] = an.conductivity
    return sigma


def build_grid(scenario: Scenario, margin: float | None = None) -> Grid:
    """Lattice points (i + 1/2) h kept when inside the ellipse shrunk by ``margin``.

    The default margin is h/2, i.e. the semi-axes (a - h/2, b - h/2).
    """
    h = scenario.h
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    margin = 0.5 * h if margin is None else margin
    a, b = scenario.a - margin, scenario.b - margin
    if a <= 0 or b <= 0:
        raise ValueError("empty grid")
    ni = int(np.ceil(scenario.a / h)) + 1
    nj = int(np.ceil(scenario.b / h)) + 1
    I, J = np.meshgrid(np.arange(-ni, ni), np.arange(-nj, nj), indexing="xy")
    I, J = I.ravel(), J.ravel()
    X, Y = (I + 0.5) * h, (J + 0.5) * h
    keep = (X / a) ** 2 + (Y / b) ** 2 < 1
    if not keep.any():
        raise ValueError("empty grid")
    centers = np.column_stack([X[keep], Y[keep]])
    index = np.column_stack([I[keep], J[keep]])
    return Grid(centers=centers, h=h, sigma=label_cells(centers, scenario.anomalies), index=index)


def measurement_points(tag: str, mesh: BoundaryMesh, half: str = "upper") -> BoundaryMesh:
    """Sampling points on the background boundary for a geometry tag.

    Returns a coarse ``BoundaryMesh`` whose weights are the arc-length
    quadrature weights of the sampled points.  ``m16p`` samples the
    half-interval t in [0, pi] (``half="upper"``) or [pi, 2*pi].
    """
    if mesh.curve is None:
        raise ValueError("mesh has no parametrisation attached")
    if tag == "m16p":
        t0 = 0.0 if half == "upper" else np.pi
        t = t0 + np.pi * np.arange(16) / 15
        dt = np.full(16, np.pi / 15)
        dt[[0, -1]] *= 0.5
        pts = mesh.curve.discretize(16, t=t, dt=1.0)
        return BoundaryMesh(
            nodes=pts.nodes, normals=pts.normals, weights=pts.speed * dt,
            curvature=pts.curvature, params=t, speed=pts.speed, curve=mesh.curve,
        )
    try:
        m = {"m100": 100, "m32": 32, "m16": 16}[tag]
    except KeyError:
        raise ValueError(f"unknown geometry tag {tag!r}") from None
    return mesh.curve.discretize(m)


def sparse_target_a(**kw) -> Scenario:
    anomalies = [
        Anomaly(AnomalyShape.disk((-1.5, 0.0), 1.0), 2.0),
        Anomaly(AnomalyShape.disk((1.5, 0.0), 1.0), 5.0),
    ]
    return Scenario(anomalies=anomalies, name="sparseA", **kw)


def sparse_target_b(**kw) -> Scenario:
    anomalies = [
        Anomaly(AnomalyShape.disk((-4.0, 1.5), 1.0), 0.5),
        Anomaly(AnomalyShape.disk((0.0, -1.0), 0.7), 5.0),
        Anomaly(AnomalyShape.disk((4.0, 2.0), 0.85), 2.0),
    ]
    return Scenario(anomalies=anomalies, name="sparseB", **kw)


def kite_target(**kw) -> Scenario:
    return Scenario(anomalies=[Anomaly(AnomalyShape.kite((0.0, 0.0), 1.5), 5.0)], name="kite", **kw)


SCENARIOS = {"sparseA": sparse_target_a, "sparseB": sparse_target_b, "kite": kite_target}
