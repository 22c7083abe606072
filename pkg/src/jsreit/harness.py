"""Pipeline orchestration, metrics and report tables."""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import layerpot as lp
from .forward import MeasurementSet, TransmissionSolution, measure, solve_transmission
from .geometry import (
    GEOMETRY_TAGS, SCENARIOS, Anomaly, AnomalyShape, BoundaryMesh, Grid, Scenario,
    build_grid, measurement_points,
)
from .jsr import (
    current_spectrum, currents_on_support, estimate_internal_potential, extract_support, msbl,
    tsvd_currents,
)
from .music import music_spectrum, noise_projector, steering_table
from .recover import (
    ConvergenceWarning, CsalsaParams, assemble_conductivity_system, assemble_linearized_system,
    recover_conductivity,
)
from .sensing import build_joint_system, kernel_for, kernel_table, normalize_columns, precondition

log = logging.getLogger(__name__)

METHODS = ("jsr", "linearized", "music")

# per-scenario iteration counts and (c_tau, c_eps) pairs
SOLVER_DEFAULTS = {
    "sparseA": {"iter_max": 15, "jsr": (1.0, 0.04), "linearized": (8.0, 0.06)},
    "sparseB": {"iter_max": 14, "jsr": (0.5, 0.02), "linearized": (0.125, 0.08)},
    "kite": {"iter_max": 9, "jsr": (0.125, 0.06), "linearized": (0.25, 0.1)},
}
MU = {"jsr": 1.01, "linearized": 1.001}
C_TAU_CANDIDATES = (8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125)
EXTENDED = ("kite",)
PARTIAL_EXTENDED_EPS = 0.2


def relative_error(x_true, x_recon) -> float:
    """Squared l2 misfit of the contrast field relative to the squared l2 norm of the truth."""
    x_true = np.asarray(x_true, dtype=float)
    x_recon = np.asarray(x_recon, dtype=float)
    if x_true.shape != x_recon.shape:
        raise ValueError("fields live on different grids")
    denom = float(np.sum(x_true**2))
    if denom == 0:
        raise ValueError("true contrast is identically zero")
    return float(np.sum((x_true - x_recon) ** 2) / denom)


def recoverability_bound(m: int, rank: int) -> float:
    """Largest row support the MMV problem can be guaranteed to recover: (m + rank) / 2."""
    if m < 1 or rank < 1:
        raise ValueError("m and rank must be positive")
    return (m + rank) / 2


@dataclass
class RunConfig:
    scenario: str = "sparseA"
    method: str = "jsr"
    geometry: str = "m100"
    M: int = 2
    snr: float = 40.0
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    support_eps: float = 1e-2
    c_tau: float | None = None
    c_eps: float | None = None
    mu: float | None = None
    iter_max: int | None = None
    rho_t: float = 1e-2
    lam_precond: float | None = None
    music_dim: int | None = None
    oracle_support: bool = False
    forward_nodes: int = 2000
    neumann_nodes: int = 1000
    scenario_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.geometry not in GEOMETRY_TAGS:
            raise ValueError(f"geometry must be one of {GEOMETRY_TAGS}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        self.seeds = [int(s) for s in self.seeds]

    @property
    def kernel(self) -> str:
        return kernel_for(self.geometry)

    @property
    def extended(self) -> bool:
        return self.scenario in EXTENDED

    def csalsa_params(self) -> CsalsaParams:
        method = "jsr" if self.method == "jsr" else "linearized"
        ct, ce = SOLVER_DEFAULTS[self.scenario][method]
        if method == "jsr" and self.extended and self.geometry == "m16p":
            ce = PARTIAL_EXTENDED_EPS
        return CsalsaParams(
            c_tau=ct if self.c_tau is None else self.c_tau,
            mu=MU[method] if self.mu is None else self.mu,
            c_eps=ce if self.c_eps is None else self.c_eps,
        )

    def msbl_iterations(self) -> int:
        return SOLVER_DEFAULTS[self.scenario]["iter_max"] if self.iter_max is None else self.iter_max

    def build_scenario(self) -> Scenario:
        return SCENARIOS[self.scenario](geometry=self.geometry, M=self.M, snr=self.snr,
                                        **self.scenario_overrides)

    def replace(self, **kw) -> "RunConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return RunConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SeedResult:
    seed: int
    error: float
    status: str = "ok"
    values: np.ndarray | None = None
    support_size: int = 0
    timings: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)


@dataclass
class RunReport:
    config: RunConfig
    results: list[SeedResult]
    bound: float
    grid: Grid | None = None
    paths: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.results], dtype=float)

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.errors)

    @property
    def mean(self) -> float:
        e = self.errors[self.ok]
        return float(e.mean()) if e.size else float("nan")

    @property
    def std(self) -> float:
        e = self.errors[self.ok]
        return float(e.std()) if e.size else float("nan")

    def stage_means(self) -> dict[str, float]:
        keys = sorted({k for r in self.results for k in r.timings})
        return {k: float(np.mean([r.timings.get(k, 0.0) for r in self.results])) for k in keys}

    def to_json(self, path) -> Path:
        """Metrics and config as JSON, fields alongside as ``.npz``."""
        path = Path(path)
        seeds = [{"seed": r.seed, "error": r.error, "status": r.status, "support_size": r.support_size,
                  "timings": r.timings, "solver": r.solver} for r in self.results]
        path.write_text(json.dumps({"config": self.config.to_dict(), "bound": self.bound,
                                    "results": seeds}, indent=2, default=float))
        vals = {f"seed{r.seed}": r.values for r in self.results if r.values is not None}
        np.savez_compressed(path.with_suffix(".npz"), **vals)
        return path

    @classmethod
    def from_json(cls, path) -> "RunReport":
        path = Path(path)
        d = json.loads(path.read_text())
        config = RunConfig(**d["config"])
        npz = path.with_suffix(".npz")
        vals = dict(np.load(npz)) if npz.exists() else {}
        results = [SeedResult(seed=r["seed"], error=float(r["error"]), status=r["status"],
                              values=vals.get(f"seed{r['seed']}"), support_size=r["support_size"],
                              timings=r["timings"], solver=r["solver"]) for r in d["results"]]
        return cls(config=config, results=results, bound=d["bound"], grid=build_grid(config.build_scenario()))

    def summary(self) -> dict:
        c = self.config
        return {"scenario": c.scenario, "method": c.method, "geometry": c.geometry, "M": c.M,
                "snr": c.snr, "support_eps": c.support_eps, "seeds": len(self.results),
                "failed": int((~self.ok).sum()), "mean": self.mean, "std": self.std,
                "bound": self.bound}


@dataclass
class Workspace:
    """Everything shared by the seeds of one run: forward solution, grid, kernel tables."""

    scenario: Scenario
    solution: TransmissionSolution | None
    grid: Grid
    points: BoundaryMesh
    table: np.ndarray
    neumann: lp.NeumannFunction | None
    steering: np.ndarray | None = None


_FORWARD_CACHE: dict[Any, TransmissionSolution] = {}
_NEUMANN_CACHE: dict[Any, lp.NeumannFunction] = {}


def _scenario_key(sc: Scenario, M: int, nodes: int):
    an = tuple((a.shape.kind, tuple(a.shape.center), a.shape.size, a.conductivity) for a in sc.anomalies)
    return (sc.a, sc.b, an, M, nodes)


def forward_solution(scenario: Scenario, nodes: int = 2000) -> TransmissionSolution:
    """Forward solve once per (domain, anomalies, M, nodes); later calls hit the cache."""
    key = _scenario_key(scenario, scenario.M, nodes)
    if key not in _FORWARD_CACHE:
        _FORWARD_CACHE[key] = solve_transmission(scenario, nodes=nodes)
    return _FORWARD_CACHE[key]


def neumann_function(a: float, b: float, nodes: int) -> lp.NeumannFunction:
    from .geometry import make_ellipse

    key = (a, b, nodes)
    if key not in _NEUMANN_CACHE:
        _NEUMANN_CACHE[key] = lp.NeumannFunction(make_ellipse(a, b, nodes))
    return _NEUMANN_CACHE[key]


def prepare(config: RunConfig, forward: bool = True) -> Workspace:
    """Grid, measurement points and kernel tables; the forward solve is skipped if ``forward`` is False."""
    from .geometry import make_ellipse

    sc = config.build_scenario()
    sol = forward_solution(sc, config.forward_nodes) if forward else None
    mesh = sol.mesh if forward else make_ellipse(sc.a, sc.b, config.forward_nodes)
    grid = build_grid(sc)
    pts = measurement_points(config.geometry, mesh, half=sc.half)
    neu = None
    if config.kernel == "neumann-partial" or config.method == "music":
        neu = neumann_function(sc.a, sc.b, config.neumann_nodes)
    table = kernel_table(grid, pts, config.kernel, neu)
    steering = None
    if config.method == "music":
        steering = table if config.kernel == "neumann-partial" else steering_table(grid, pts, neu)
    return Workspace(scenario=sc, solution=sol, grid=grid, points=pts, table=table,
                     neumann=neu, steering=steering)


def _solver_info(res) -> dict:
    return {"converged": bool(res.converged), "iterations": int(res.iterations),
            "residual": float(res.residual), "eps": float(res.eps)}


def _estimate_currents(config: RunConfig, ws: Workspace, ms: MeasurementSet, timings: dict):
    """M-SBL support (and T-SVD currents for extended targets); returns (support indices, currents)."""
    grid = ws.grid
    t0 = time.perf_counter()
    js = build_joint_system(grid, ms, config.kernel, ws.neumann, ws.table)
    timings["assembly"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if config.oracle_support:
        sup = np.flatnonzero(grid.contrast != 0)
    else:
        if config.extended:
            PA, PY = precondition(js.A, js.Y, config.lam_precond)
            PA, pnorms = normalize_columns(PA)
            st = msbl(PA, PY, config.msbl_iterations())
            X = js.physical(st.X / pnorms[:, None])
        else:
            st = msbl(js.A, js.Y, config.msbl_iterations())
            X = js.physical(st.X)
        sup = extract_support(current_spectrum(X), config.support_eps).indices
    if config.extended or config.oracle_support:
        cols = np.concatenate([sup, sup + grid.n])
        Xs = tsvd_currents(js.A[:, cols], js.Y, config.rho_t) / js.col_norms[cols, None]
        Xfull = np.zeros((2 * grid.n, js.Y.shape[1]))
        Xfull[cols] = Xs
        X = Xfull
    timings["msbl"] = time.perf_counter() - t0
    return sup, currents_on_support(X, sup)


def reconstruct(config: RunConfig, ws: Workspace, ms: MeasurementSet) -> SeedResult:
    """Run the configured method on one measurement set."""
    grid = ws.grid
    truth = grid.contrast
    timings: dict[str, float] = {}
    seed = -1 if ms.seed is None else int(ms.seed)
    params = config.csalsa_params()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.simplefilter("ignore", lp.BoundaryProximityWarning)
        if config.method == "jsr":
            sup, cur = _estimate_currents(config, ws, ms, timings)
            t0 = time.perf_counter()
            pot = estimate_internal_potential(ms, grid, sup, cur, config.kernel, ws.neumann)
            timings["potential"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            system = assemble_conductivity_system(grid, pot, ms, config.kernel, ws.table, ws.neumann)
            timings["assembly"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            rec = recover_conductivity(system, params)
            timings["csalsa"] = time.perf_counter() - t0
            values, info, nsup = rec.values, _solver_info(rec.solver), len(sup)
        elif config.method == "linearized":
            t0 = time.perf_counter()
            system = assemble_linearized_system(grid, ms, config.kernel, ws.table, ws.neumann)
            timings["assembly"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            rec = recover_conductivity(system, params)
            timings["csalsa"] = time.perf_counter() - t0
            values, info, nsup = rec.values, _solver_info(rec.solver), grid.n
        else:
            t0 = time.perf_counter()
            P, s = noise_projector(ms.data, config.music_dim)
            spec = music_spectrum(grid, ws.points, ws.neumann, P, table=ws.steering, signal_dim=s)
            timings["music"] = time.perf_counter() - t0
            values, info, nsup = spec.values, {"signal_dim": s}, grid.n
    timings["total"] = sum(timings.values())
    err = relative_error(truth, values) if config.method != "music" and np.any(truth) else float("nan")
    return SeedResult(seed=seed, error=err, values=values, support_size=nsup, timings=timings,
                      solver=info)


def run_scenario(config: RunConfig, workspace: Workspace | None = None) -> RunReport:
    """Forward once, then measure and reconstruct for every seed; per-seed failures are recorded."""
    ws = prepare(config) if workspace is None else workspace
    results = []
    for seed in config.seeds:
        ms = measure(ws.solution, ws.scenario, seed=seed)
        try:
            results.append(reconstruct(config, ws, ms))
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.warning("seed %d failed: %s", seed, exc)
            results.append(SeedResult(seed=seed, error=float("nan"), status=f"failed: {exc}"))
    rank = int(np.linalg.matrix_rank(ws.solution.trace(ws.points.params)))
    return RunReport(config=config, results=results,
                     bound=recoverability_bound(len(ws.points), max(rank, 1)), grid=ws.grid)


def tune_csalsa(config: RunConfig, c_tau=C_TAU_CANDIDATES, c_eps=None,
                progress=None) -> tuple[RunConfig, dict[tuple[float, float], float]]:
    """Grid search over (c_tau, c_eps); returns the config with the lowest mean error and all means.

    ``c_eps`` defaults to the configured value only. The forward solve and kernel
    tables are shared across candidates.
    """
    if config.method == "music":
        raise ValueError("MUSIC has no solver constants to tune")
    base = config.csalsa_params()
    eps_set = (base.c_eps,) if c_eps is None else tuple(c_eps)
    ws = prepare(config)
    means = {}
    for ct in c_tau:
        for ce in eps_set:
            rep = run_scenario(config.replace(c_tau=ct, c_eps=ce), workspace=ws)
            means[(ct, ce)] = rep.mean
            if progress:
                progress(f"c_tau={ct:g} c_eps={ce:g}: mean {rep.mean:.4f}")
    finite = {k: v for k, v in means.items() if np.isfinite(v)}
    if not finite:
        raise ValueError("every candidate failed")
    ct, ce = min(finite, key=finite.get)
    return config.replace(c_tau=ct, c_eps=ce), means


# --- output -----------------------------------------------------------------------------------

def field_image(grid: Grid, values: np.ndarray, path, absolute: bool = True) -> Path:
    """Write a binary PGM with one pixel per lattice cell, scaled to [0, 255]."""
    v = np.abs(values) if absolute else np.asarray(values, dtype=float)
    idx = grid.index
    i0, j0 = idx.min(axis=0)
    w, h = idx.max(axis=0) - idx.min(axis=0) + 1
    img = np.zeros((h, w))
    lo, hi = float(v.min()), float(v.max())
    scaled = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    img[h - 1 - (idx[:, 1] - j0), idx[:, 0] - i0] = scaled
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(np.round(img * 255).astype(np.uint8).tobytes())
    return path


def _write_csv(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        if rows:
            names = list(dict.fromkeys(k for row in rows for k in row))
            wr = csv.DictWriter(fh, fieldnames=names, restval="")
            wr.writeheader()
            wr.writerows(rows)
    return path


def report(reports: list[RunReport], outdir) -> dict[str, Path]:
    """Error table, per-stage timing table, support-threshold sweep and field images."""
    if not reports:
        raise ValueError("need at least one run report")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    err_rows = [r.summary() for r in reports]
    paths = {"errors": _write_csv(out / "errors.csv", err_rows)}

    time_rows = []
    for r in reports:
        st = r.stage_means()
        solver = st.get("msbl", 0.0) + st.get("csalsa", 0.0) + st.get("music", 0.0)
        time_rows.append({"scenario": r.config.scenario, "method": r.config.method,
                          "geometry": r.config.geometry, "assembly": st.get("assembly", 0.0),
                          "msbl": st.get("msbl", 0.0), "potential": st.get("potential", 0.0),
                          "csalsa": st.get("csalsa", 0.0), "music": st.get("music", 0.0),
                          "solver": solver, "total": st.get("total", 0.0)})
    paths["timings"] = _write_csv(out / "timings.csv", time_rows)

    groups: dict[tuple, list[RunReport]] = {}
    for r in reports:
        if r.config.method == "jsr":
            c = r.config
            groups.setdefault((c.scenario, c.geometry, c.M, c.snr), []).append(r)
    sweep_rows = []
    for (sc, geo, M, snr), rs in groups.items():
        if len({r.config.support_eps for r in rs}) > 1:
            for r in sorted(rs, key=lambda r: r.config.support_eps):
                sweep_rows.append({"scenario": sc, "geometry": geo, "support_eps": r.config.support_eps,
                                   "mean": r.mean, "std": r.std})
    if sweep_rows:
        paths["eps_sweep"] = _write_csv(out / "eps_sweep.csv", sweep_rows)

    per_seed = []
    for k, r in enumerate(reports):
        c = r.config
        stem = f"{k:02d}_{c.scenario}_{c.method}_{c.geometry}_M{c.M}"
        for s in r.results:
            per_seed.append({"run": stem, "seed": s.seed, "error": s.error, "status": s.status,
                             "support": s.support_size, **{f"t_{a}": b for a, b in s.timings.items()}})
        first = next((s for s in r.results if s.values is not None), None)
        if first is not None and r.grid is not None:
            paths[f"image:{stem}"] = field_image(r.grid, first.values, out / f"{stem}.pgm")
            r.grid.to_csv(out / f"{stem}.csv", first.values)
    paths["seeds"] = _write_csv(out / "seeds.csv", per_seed)
    meta = {"runs": [dict(r.summary(), config=r.config.to_dict()) for r in reports]}
    (out / "runs.json").write_text(json.dumps(meta, indent=2, default=float))
    paths["meta"] = out / "runs.json"
    return paths


# --- config files ------------------------------------------------------------------------------

def scenario_from_dict(d: dict) -> Scenario:
    """Scenario from a mapping: either ``{name: sparseA, ...overrides}`` or an explicit anomaly list."""
    d = dict(d)
    name = d.pop("name", None)
    if "anomalies" in d:
        an = []
        for item in d.pop("anomalies"):
            kind = item.get("kind", "disk")
            if kind == "disk":
                shape = AnomalyShape.disk(item["center"], item["radius"])
            elif kind == "kite":
                shape = AnomalyShape.kite(item.get("center", (0.0, 0.0)), item.get("scale", 1.5))
            else:
                raise ValueError(f"unknown anomaly kind {kind!r}")
            an.append(Anomaly(shape, float(item["sigma"])))
        return Scenario(anomalies=an, name=name or "custom", **d)
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}")
    return SCENARIOS[name](**d)


def scenario_to_dict(sc: Scenario) -> dict:
    an = []
    for a in sc.anomalies:
        item = {"kind": a.shape.kind, "center": [float(c) for c in a.shape.center], "sigma": a.conductivity}
        item["radius" if a.shape.kind == "disk" else "scale"] = float(a.shape.size)
        an.append(item)
    return {"name": sc.name, "a": sc.a, "b": sc.b, "h": sc.h, "geometry": sc.geometry, "M": sc.M,
            "snr": sc.snr, "half": sc.half, "anomalies": an}


def load_config(path) -> RunConfig:
    data = yaml.safe_load(Path(path).read_text()) or {}
    return RunConfig(**data)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
