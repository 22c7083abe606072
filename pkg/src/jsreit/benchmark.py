"""Acceptance checks: the full table regeneration plus fast numerical contracts.

Each check returns a :class:`Check`; ``run_checks`` evaluates all of them and
``benchmark --check`` exits nonzero when any fails.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import layerpot as lp
from .forward import solve_transmission
from .geometry import Anomaly, AnomalyShape, Scenario, build_grid, make_ellipse, sparse_target_a, sparse_target_b
from .harness import RunConfig, RunReport, recoverability_bound, run_scenario
from .jsr import msbl
from .recover import project_ball, soft_threshold

SWEEP_EPS = (1e-3, 1e-2, 1e-1, 0.3)


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


@dataclass
class BenchmarkRuns:
    """All pipeline runs the table-level checks draw on, keyed by a short label."""

    reports: dict[str, RunReport] = field(default_factory=dict)

    def __getitem__(self, key: str) -> RunReport:
        return self.reports[key]


def run_benchmark(seeds=range(20), forward_nodes: int = 2000, progress=None) -> BenchmarkRuns:
    seeds = list(seeds)
    plan = {
        "A/jsr/m100": RunConfig("sparseA", "jsr", "m100"),
        "A/lin/m100": RunConfig("sparseA", "linearized", "m100"),
        "A/jsr/m32": RunConfig("sparseA", "jsr", "m32"),
        "A/jsr/m16": RunConfig("sparseA", "jsr", "m16"),
        "A/jsr/m16p": RunConfig("sparseA", "jsr", "m16p"),
        "B/jsr/m100": RunConfig("sparseB", "jsr", "m100"),
        "B/lin/m100": RunConfig("sparseB", "linearized", "m100"),
        "kite/jsr/m100": RunConfig("kite", "jsr", "m100"),
        "kite/lin/m100": RunConfig("kite", "linearized", "m100"),
        "A/music/M4": RunConfig("sparseA", "music", "m100", M=4),
    }
    for eps in SWEEP_EPS:
        plan[f"A/jsr/eps={eps:g}"] = RunConfig("sparseA", "jsr", "m100", support_eps=eps)
    runs = BenchmarkRuns()
    for key, cfg in plan.items():
        cfg = cfg.replace(seeds=seeds if key != "A/music/M4" else seeds[:1], forward_nodes=forward_nodes)
        t0 = time.perf_counter()
        runs.reports[key] = run_scenario(cfg)
        if progress:
            progress(f"{key}: mean {runs[key].mean:.4f} ({time.perf_counter() - t0:.1f} s)")
    return runs


# --- fast contracts ---------------------------------------------------------------------------

def check_bounds() -> Check:
    got = [recoverability_bound(m, 2) for m in (100, 32, 16)]
    return Check(1, "recoverability bounds", got == [51, 17, 9], f"{got} (expected [51, 17, 9])")


def check_support_sizes() -> Check:
    na = 2 * int(np.count_nonzero(build_grid(sparse_target_a()).contrast))
    nb = 2 * int(np.count_nonzero(build_grid(sparse_target_b()).contrast))
    ok = abs(na - 48) <= 4 and abs(nb - 56) <= 8
    return Check(2, "||X||_0 counts", ok, f"target A {na} (48 +- 4), target B {nb} (56 +- 8)")


def concentric_disk_trace(R: float, rho: float, sigma: float, theta) -> np.ndarray:
    """(u - x1) on |x| = R for a disk of radius rho and conductivity sigma, flux of x1 on |x| = R.

    Inside u = A r cos t; outside u = (B r + C / r) cos t with B - C / R^2 = 1.
    """
    lhs = np.array([[0.0, 1.0, -1.0 / R**2],
                    [rho, -rho, -1.0 / rho],
                    [sigma, -1.0, 1.0 / rho**2]])
    A, B, C = np.linalg.solve(lhs, [1.0, 0.0, 0.0])
    return (B * R + C / R - R) * np.cos(theta)


def check_forward_oracle(nodes: int = 2000) -> Check:
    R, rho, sigma = 3.0, 1.0, 4.0
    sc = Scenario(a=R, b=R, anomalies=[Anomaly(AnomalyShape.disk((0.0, 0.0), rho), sigma)])
    sol = solve_transmission(sc, ks=[1], nodes=nodes)
    t = np.linspace(0, 2 * np.pi, 97, endpoint=False)
    ref = concentric_disk_trace(R, rho, sigma, t)
    err = float(np.linalg.norm(sol.trace(t)[:, 0] - ref) / np.linalg.norm(ref))
    return Check(5, "forward solver vs concentric-disk series", err < 1e-6, f"relative error {err:.2e} (< 1e-6)")


def check_layer_potentials() -> Check:
    mesh = make_ellipse(10.0, 7.0, 2000)
    k1 = float(np.abs(lp.np_matrix(mesh) @ np.ones(len(mesh)) - 0.5).max())
    x = np.array([[0.0, 0.0], [3.0, -2.0], [-7.5, 3.0]])
    d1 = float(np.abs(lp.double_layer(mesh, np.ones(len(mesh)), x) - 1.0).max())
    R = 2.0
    neu = lp.NeumannFunction(make_ellipse(R, R, 2000))
    y = np.array([[0.4, -0.3]])
    xs = np.array([[0.5, 0.2], [-0.9, 1.1]])
    g = neu.gradient_interior(xs, y)[:, 0, :]
    ng = disk_neumann_gradient(xs, y[0], R)
    nerr = float(np.abs(g - ng).max() / np.abs(ng).max())
    ok = k1 < 1e-8 and d1 < 1e-8 and nerr < 1e-6
    return Check(6, "layer-potential identities", ok, f"|K[1]-1/2| {k1:.1e}, |D[1]-1| {d1:.1e}, Neumann {nerr:.1e}")


def disk_neumann_gradient(x, y, R: float) -> np.ndarray:
    """grad_y N(x, y) for the disk of radius R from the image formula.

    N(x, y) = -1/(2 pi) (ln|x - y| + ln| |y| x / R - R y / |y| |) + ln(R) / pi.
    """
    x = np.atleast_2d(x)
    y = np.asarray(y, dtype=float)
    d = x - y
    g1 = d / (np.sum(d**2, axis=1)[:, None])  # grad_y ln|x - y| = -(x - y)/|x - y|^2, sign applied below
    ny = np.linalg.norm(y)
    # w(y) = |y| x / R - R y / |y|; |w|^2 = |y|^2 |x|^2 / R^2 - 2 x.y + R^2
    xx = np.sum(x**2, axis=1)
    w2 = ny**2 * xx / R**2 - 2 * (x @ y) + R**2
    grad_w2 = 2 * y[None, :] * xx[:, None] / R**2 - 2 * x
    g2 = grad_w2 / (2 * w2[:, None])
    return -(-g1 + g2) / (2 * np.pi)


def synthetic_mmv(seed: int = 0):
    """20 x 40 Gaussian A, pairwise rows {3, 23} and {7, 27} active, M = 4."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((20, 40))
    A /= np.linalg.norm(A, axis=0)
    X = np.zeros((40, 4))
    for i in (3, 7):
        X[[i, i + 20]] = rng.standard_normal((2, 4)) + np.sign(rng.standard_normal((2, 4)))
    return A, X, A @ X


def check_mmv() -> Check:
    A, X, Y = synthetic_mmv()
    st = msbl(A, Y, iter_max=30)
    sup = set(st.active.tolist())
    err = float(np.linalg.norm(st.X - X) / np.linalg.norm(X))
    ok = sup == {3, 7} and err < 1e-3
    return Check(7, "noiseless MMV recovery", ok, f"support {sorted(sup)}, relative error {err:.1e}")


def convex_argmin(right_derivative, lo: float, hi: float, steps: int = 200) -> float:
    """Minimizer of a convex function on [lo, hi] by bisection on the sign of its right derivative."""
    if right_derivative(lo) >= 0:
        return lo
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if right_derivative(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def prox_brute_force_gap(trials: int = 1000, seed: int = 0) -> float:
    """Largest gap between the closed-form proxes and a bisection minimization of each prox objective."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        s, tau = rng.normal(scale=3.0), rng.uniform(0.01, 2.0)
        # 1/2 (x - s)^2 + tau |x|
        ref = convex_argmin(lambda x: (x - s) + (tau if x >= 0 else -tau), -abs(s) - 1, abs(s) + 1)
        worst = max(worst, abs(float(soft_threshold(s, tau)) - ref))
        # (x - s)^2 restricted to |x - c| <= eps
        c, eps = rng.normal(scale=3.0), rng.uniform(0.01, 2.0)
        ref = convex_argmin(lambda x: 2 * (x - s), c - eps, c + eps)
        got = float(project_ball(np.array([s]), np.array([c]), eps)[0])
        worst = max(worst, abs(got - ref))
    return worst


# --- table-level checks -----------------------------------------------------------------------

def check_error_table(runs: BenchmarkRuns) -> Check:
    a, al, k = runs["A/jsr/m100"].mean, runs["A/lin/m100"].mean, runs["kite/jsr/m100"].mean
    geo = [runs[f"A/jsr/{g}"].mean for g in ("m100", "m32", "m16", "m16p")]
    ordered = all(x < y for x, y in zip(geo, geo[1:]))
    ok = 0.25 <= a <= 0.50 and 0.58 <= al <= 0.70 and 0.18 <= k <= 0.30 and ordered
    detail = (f"A proposed {a:.4f} [0.25, 0.50]; A linearized {al:.4f} [0.58, 0.70]; "
              f"kite proposed {k:.4f} [0.18, 0.30]; m100<m32<m16<m16p {np.round(geo, 4).tolist()} -> {ordered}")
    return Check(3, "error table", ok, detail)


def check_dominance(runs: BenchmarkRuns) -> Check:
    pairs = {s: (runs[f"{s}/jsr/m100"].mean, runs[f"{s}/lin/m100"].mean) for s in ("A", "B", "kite")}
    ok = all(p < q for p, q in pairs.values())
    detail = ", ".join(f"{s} {p:.3f} vs {q:.3f}" for s, (p, q) in pairs.items())
    return Check(4, "proposed beats linearized", ok, detail)


def check_csalsa(runs: BenchmarkRuns) -> Check:
    keys = ["A/jsr/m100", "A/lin/m100", "A/jsr/m32", "A/jsr/m16", "A/jsr/m16p", "kite/jsr/m100", "kite/lin/m100"]
    worst, n = 0.0, 0
    for key in keys:
        for r in runs[key].results:
            if r.solver.get("converged"):
                n += 1
                worst = max(worst, r.solver["residual"] / r.solver["eps"])
    gap = prox_brute_force_gap()
    ok = worst <= 1 + 1e-6 and gap < 1e-10
    return Check(8, "C-SALSA contracts", ok,
                 f"max residual/eps {worst:.8f} over {n} converged solves; prox gap {gap:.1e}")


def check_sweep(runs: BenchmarkRuns) -> Check:
    means = {eps: runs[f"A/jsr/eps={eps:g}"].mean for eps in SWEEP_EPS}
    ok = means[0.3] > means[1e-2]
    return Check(9, "support-threshold sweep", ok,
                 ", ".join(f"eps={e:g}: {m:.3f}" for e, m in means.items()) + " (need eps=0.3 > eps=0.01)")


def anomaly_peaks(values: np.ndarray, grid, scenario) -> list[float]:
    """Max of a normalized field over the cells of each anomaly."""
    v = np.abs(values)
    v = v / v.max() if v.max() > 0 else v
    return [float(v[an.shape.contains(grid.centers)].max()) for an in scenario.anomalies]


def check_music(runs: BenchmarkRuns) -> Check:
    sc = sparse_target_a()
    mus = runs["A/music/M4"]
    left_m, right_m = anomaly_peaks(mus.results[0].values, mus.grid, sc)
    prop = runs["A/jsr/m100"]
    first = next(r for r in prop.results if r.values is not None)
    left_p, right_p = anomaly_peaks(first.values, prop.grid, sc)
    ok = left_m < 0.5 * right_m and left_p > 0.5 and right_p > 0.5
    return Check(10, "MUSIC comparison", ok,
                 f"MUSIC left/right {left_m:.3f}/{right_m:.3f}; proposed left/right {left_p:.3f}/{right_p:.3f}")


def check_timing(runs: BenchmarkRuns) -> Check:
    tp = runs["A/jsr/m100"].stage_means().get("csalsa", np.nan)
    tl = runs["A/lin/m100"].stage_means().get("csalsa", np.nan)
    ratio = tl / tp
    return Check(11, "conductivity-solve timing ratio", bool(ratio >= 2), f"linearized/proposed = {ratio:.1f} (>= 2)")


FAST_CHECKS = (check_bounds, check_support_sizes, check_forward_oracle, check_layer_potentials, check_mmv)
RUN_CHECKS = (check_error_table, check_dominance, check_csalsa, check_sweep, check_music, check_timing)


def run_checks(runs: BenchmarkRuns) -> list[Check]:
    checks = [f() for f in FAST_CHECKS] + [f(runs) for f in RUN_CHECKS]
    return sorted(checks, key=lambda c: c.number)
