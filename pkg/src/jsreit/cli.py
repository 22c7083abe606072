"""Command-line entry point: simulate, reconstruct, run, tune, benchmark and report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .forward import MeasurementSet, measure
from .geometry import GEOMETRY_TAGS, SCENARIOS, make_ellipse
from .harness import (
    C_TAU_CANDIDATES, METHODS, RunConfig, RunReport, SeedResult, field_image, forward_solution, load_config, prepare,
    reconstruct, report, run_scenario, save_config, tune_csalsa,
)

log = logging.getLogger("jsreit")

_CONFIG_FIELDS = ("scenario", "method", "geometry", "M", "snr", "seeds", "support_eps", "c_tau", "c_eps",
                  "mu", "iter_max", "rho_t", "lam_precond", "music_dim", "forward_nodes", "neumann_nodes")


def _add_run_flags(p: argparse.ArgumentParser, method: bool = True) -> None:
    p.add_argument("--config", type=Path, help="YAML file with RunConfig fields; flags override it")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    if method:
        p.add_argument("--method", choices=METHODS)
    p.add_argument("--geometry", choices=GEOMETRY_TAGS)
    p.add_argument("--M", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--snr", type=float, help="dB; 'inf' for noiseless")
    p.add_argument("--seeds", type=int, nargs="+", help="explicit seed list")
    p.add_argument("--n-seeds", type=int, help="use seeds 0..N-1")
    p.add_argument("--support-eps", type=float)
    p.add_argument("--c-tau", type=float)
    p.add_argument("--c-eps", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--iter-max", type=int)
    p.add_argument("--rho-t", type=float)
    p.add_argument("--lam-precond", type=float)
    p.add_argument("--music-dim", type=int)
    p.add_argument("--forward-nodes", type=int)
    p.add_argument("--neumann-nodes", type=int)


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    kw = {}
    for name in _CONFIG_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    if getattr(args, "n_seeds", None):
        kw["seeds"] = list(range(args.n_seeds))
    return cfg.replace(**kw)


def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = cfg.build_scenario()
    sol = forward_solution(sc, cfg.forward_nodes)
    (out / "run.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    for seed in cfg.seeds:
        ms = measure(sol, sc, seed=seed)
        csv, meta = ms.to_files(out / f"{cfg.scenario}_{cfg.geometry}_seed{seed}")
        print(meta)
    return 0


def cmd_reconstruct(args) -> int:
    cfg = config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ws = prepare(cfg, forward=False)
    results = []
    for stem in args.measurements:
        stem = Path(stem)
        ms = MeasurementSet.from_files(stem, make_ellipse(ws.scenario.a, ws.scenario.b, 16), half=ws.scenario.half)
        if ms.geometry != cfg.geometry:
            cfg = cfg.replace(geometry=ms.geometry)
            ws = prepare(cfg, forward=False)
        res = reconstruct(cfg, ws, ms)
        name = stem.name + f"_{cfg.method}"
        ws.grid.to_csv(out / f"{name}.csv", res.values)
        field_image(ws.grid, res.values, out / f"{name}.pgm")
        results.append(res)
        print(f"{stem.name}: error {res.error:.4f}  support {res.support_size}")
    rep = RunReport(config=cfg.replace(seeds=[r.seed for r in results]), results=results, bound=float("nan"),
                    grid=ws.grid)
    rep.to_json(out / f"{cfg.scenario}_{cfg.method}_{cfg.geometry}.json")
    return 0


def cmd_benchmark(args) -> int:
    from .benchmark import run_benchmark, run_checks

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = range(args.n_seeds)
    runs = run_benchmark(seeds=seeds, forward_nodes=args.forward_nodes, progress=print)
    for key, rep in runs.reports.items():
        rep.to_json(out / (key.replace("/", "_").replace("=", "") + ".json"))
    paths = report(list(runs.reports.values()), out)
    print(f"tables written to {paths['errors'].parent}")
    if not args.check:
        return 0
    checks = run_checks(runs)
    for c in checks:
        print(c.line())
    (out / "checks.json").write_text(json.dumps([c.__dict__ for c in checks], indent=2))
    return 0 if all(c.passed for c in checks) else 1


def cmd_report(args) -> int:
    files = []
    for p in args.runs:
        p = Path(p)
        files += sorted(p.glob("*.json")) if p.is_dir() else [p]
    reports = []
    for f in files:
        try:
            reports.append(RunReport.from_json(f))
        except (KeyError, TypeError, json.JSONDecodeError):
            log.debug("skipping %s", f)
    if not reports:
        print("no run reports found", file=sys.stderr)
        return 2
    paths = report(reports, args.out)
    for k, v in paths.items():
        if not k.startswith("image:"):
            print(f"{k}: {v}")
    return 0


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    rep = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep.to_json(out / f"{cfg.scenario}_{cfg.method}_{cfg.geometry}_M{cfg.M}.json")
    print(json.dumps(rep.summary(), default=float))
    return 0


def cmd_tune(args) -> int:
    cfg = config_from_args(args)
    best, means = tune_csalsa(cfg, c_tau=args.c_tau_grid, c_eps=args.c_eps_grid, progress=print)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(best, out / "best.yaml")
    rows = [{"c_tau": ct, "c_eps": ce, "mean": m} for (ct, ce), m in means.items()]
    (out / "tune.json").write_text(json.dumps(rows, indent=2, default=float))
    print(f"best c_tau={best.c_tau:g} c_eps={best.c_eps:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jsreit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="forward solve and write noisy boundary data")
    _add_run_flags(s, method=False)
    s.add_argument("--out", default="data")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reconstruct", help="run a method on stored measurements")
    _add_run_flags(r)
    r.add_argument("measurements", nargs="+", help="measurement stems written by 'simulate'")
    r.add_argument("--out", default="recon")
    r.set_defaults(func=cmd_reconstruct)

    b = sub.add_parser("benchmark", help="regenerate the error, timing and sweep tables")
    b.add_argument("--n-seeds", type=int, default=20)
    b.add_argument("--forward-nodes", type=int, default=2000)
    b.add_argument("--out", default="benchmark")
    b.add_argument("--check", action="store_true", help="evaluate acceptance checks; nonzero exit on failure")
    b.set_defaults(func=cmd_benchmark)

    rp = sub.add_parser("report", help="aggregate stored run reports into tables and images")
    rp.add_argument("runs", nargs="+", help="run-report JSON files or directories")
    rp.add_argument("--out", default="report")
    rp.set_defaults(func=cmd_report)

    ru = sub.add_parser("run", help="simulate and reconstruct one configuration over its seeds")
    _add_run_flags(ru)
    ru.add_argument("--out", default="runs")
    ru.set_defaults(func=cmd_run)
    t = sub.add_parser("tune", help="grid-search the C-SALSA constants for one configuration")
    _add_run_flags(t)
    t.add_argument("--c-tau-grid", type=float, nargs="+", default=list(C_TAU_CANDIDATES))
    t.add_argument("--c-eps-grid", type=float, nargs="+")
    t.add_argument("--out", default="tune")
    t.set_defaults(func=cmd_tune)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
