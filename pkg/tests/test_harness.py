import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jsreit.harness import (
    RunConfig, RunReport, SeedResult, field_image, load_config, recoverability_bound, relative_error,
    report, run_scenario, save_config, scenario_from_dict, scenario_to_dict, tune_csalsa,
)
from jsreit.geometry import SCENARIOS

FAST = dict(forward_nodes=600, seeds=[0, 1, 2])


@pytest.fixture(scope="module")
def noisy_a():
    return run_scenario(RunConfig(**FAST))


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("recon, expected", [
    ([1.0, 0.0, 2.0], 0.0),
    ([0.0, 0.0, 0.0], 1.0),
    ([-1.0, 0.0, -2.0], 4.0),
    ([2.0, 0.0, 4.0], 1.0),
])
def test_relative_error_examples(recon, expected):
    assert relative_error([1.0, 0.0, 2.0], recon) == pytest.approx(expected)


def test_relative_error_rejects_zero_truth_and_shape_mismatch():
    with pytest.raises(ValueError):
        relative_error([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        relative_error([1.0], [1.0, 2.0])


@pytest.mark.parametrize("m, bound", [(100, 51), (32, 17), (16, 9)])
def test_recoverability_bound_for_two_currents(m, bound):
    assert recoverability_bound(m, 2) == bound


def test_run_reports_bound_from_trace_rank(noisy_a):
    assert noisy_a.bound == 51


def test_identical_configs_reproduce(noisy_a):
    again = run_scenario(RunConfig(**FAST))
    np.testing.assert_array_equal(again.errors, noisy_a.errors)
    for a, b in zip(again.results, noisy_a.results):
        np.testing.assert_array_equal(a.values, b.values)


def test_mean_and_std_recompute_from_seeds(noisy_a):
    e = np.array([relative_error(noisy_a.grid.contrast, r.values) for r in noisy_a.results])
    assert noisy_a.mean == pytest.approx(e.mean())
    assert noisy_a.std == pytest.approx(e.std())


def test_failed_seeds_are_excluded_from_statistics():
    cfg = RunConfig(**FAST)
    rep = RunReport(cfg, [SeedResult(0, 1.0), SeedResult(1, float("nan"), status="failed"),
                          SeedResult(2, 3.0)], bound=51)
    assert rep.mean == 2.0 and rep.std == 1.0
    assert rep.summary()["failed"] == 1


def test_timings_are_nonnegative_and_sum_to_total(noisy_a):
    for r in noisy_a.results:
        t = r.timings
        assert all(v >= 0 for v in t.values())
        assert t["total"] == pytest.approx(sum(v for k, v in t.items() if k != "total"))
        assert {"assembly", "msbl", "potential", "csalsa"} <= set(t)


def test_oracle_support_beats_noisy_pipeline(noisy_a):
    oracle = run_scenario(RunConfig(**FAST, snr=float("inf"), oracle_support=True))
    assert oracle.mean < noisy_a.mean


def test_report_single_run(noisy_a, tmp_path):
    paths = report([noisy_a], tmp_path)
    err = rows(paths["errors"])
    assert len(err) == 1 and float(err[0]["mean"]) == pytest.approx(noisy_a.mean)
    tim = rows(paths["timings"])
    assert {"assembly", "msbl", "potential", "csalsa", "solver", "total"} <= set(tim[0])
    assert "eps_sweep" not in paths
    assert len(rows(paths["seeds"])) == 3
    img = [p for k, p in paths.items() if k.startswith("image:")][0]
    assert img.read_bytes().startswith(b"P5\n")


def test_report_support_threshold_sweep(noisy_a, tmp_path):
    eps = (1e-3, 1e-2, 1e-1, 0.3)
    reps = [noisy_a.__class__(noisy_a.config.replace(support_eps=e), noisy_a.results, 51, noisy_a.grid)
            for e in eps]
    sweep = rows(report(reps, tmp_path)["eps_sweep"])
    assert [float(r["support_eps"]) for r in sweep] == list(eps)


def test_report_roundtrips_through_json(noisy_a, tmp_path):
    path = noisy_a.to_json(tmp_path / "run.json")
    back = RunReport.from_json(path)
    np.testing.assert_array_equal(back.errors, noisy_a.errors)
    np.testing.assert_array_equal(back.results[0].values, noisy_a.results[0].values)
    assert back.config == noisy_a.config


def test_config_yaml_roundtrip(tmp_path):
    cfg = RunConfig(scenario="kite", method="linearized", geometry="m16p", M=3, snr=30.0,
                    seeds=[4, 5], c_eps=0.3, scenario_overrides={"h": 0.5})
    save_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(method="tv")
    with pytest.raises(ValueError):
        RunConfig(geometry="m7")
    with pytest.raises(ValueError):
        RunConfig(scenario="nope")


def test_table_parameters_with_partial_extended_override():
    assert RunConfig(scenario="kite", geometry="m16p").csalsa_params().c_eps == 0.2
    assert RunConfig(scenario="kite").csalsa_params().c_eps == 0.06
    p = RunConfig(scenario="sparseB", method="linearized").csalsa_params()
    assert (p.c_tau, p.c_eps, p.mu) == (0.125, 0.08, 1.001)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_dict_roundtrip(name):
    sc = SCENARIOS[name]()
    back = scenario_from_dict(scenario_to_dict(sc))
    assert scenario_to_dict(back) == scenario_to_dict(sc)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_field_image_is_scaled_to_byte_range(tmp_path_factory, vals):
    from jsreit.geometry import Grid

    grid = Grid(centers=np.zeros((4, 2)), h=1.0, sigma=np.ones(4),
                index=np.array([[0, 0], [1, 0], [0, 1], [1, 1]]))
    p = field_image(grid, np.array(vals), tmp_path_factory.mktemp("img") / "f.pgm")
    raw = p.read_bytes()
    pix = np.frombuffer(raw[raw.index(b"255\n") + 4:], dtype=np.uint8)
    assert pix.size == 4
    if np.ptp(np.abs(vals)) > 0:
        assert pix.max() == 255 and pix.min() == 0


def test_tuning_picks_the_lowest_mean():
    cfg = RunConfig(**FAST)
    best, means = tune_csalsa(cfg, c_tau=(1.0, 0.25), c_eps=(0.04, 0.08))
    assert len(means) == 4
    assert means[(best.c_tau, best.c_eps)] == min(means.values())
    with pytest.raises(ValueError):
        tune_csalsa(cfg.replace(method="music"))
