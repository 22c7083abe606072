import csv
import json

import pytest

from jsreit.cli import build_parser, main

FAST = ["--forward-nodes", "600", "--seeds", "0", "1"]


def test_simulate_reconstruct_report_roundtrip(tmp_path, capsys):
    data, recon, rep = tmp_path / "data", tmp_path / "recon", tmp_path / "rep"
    assert main(["simulate", "--scenario", "sparseA", *FAST, "--out", str(data)]) == 0
    stems = sorted(str(p.with_suffix("")) for p in data.glob("*.json"))
    assert len(stems) == 2 and (data / "run.yaml").exists()

    assert main(["reconstruct", "--scenario", "sparseA", "--forward-nodes", "600", *stems,
                 "--out", str(recon)]) == 0
    assert len(list(recon.glob("*.pgm"))) == 2
    run_json = next(recon.glob("sparseA_jsr_*.json"))
    assert len(json.loads(run_json.read_text())["results"]) == 2

    assert main(["report", str(recon), "--out", str(rep)]) == 0
    with open(rep / "errors.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert row["method"] == "jsr" and row["seeds"] == "2"


def test_run_subcommand_with_yaml_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: sparseB\nmethod: linearized\nforward_nodes: 600\nseeds: [0]\n")
    assert main(["run", "--config", str(cfg), "--M", "3", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert (summary["scenario"], summary["method"], summary["M"]) == ("sparseB", "linearized", 3)


def test_report_without_runs_fails(tmp_path):
    assert main(["report", str(tmp_path), "--out", str(tmp_path / "o")]) == 2


def test_parser_lists_all_subcommands():
    p = build_parser()
    for cmd in ("simulate", "reconstruct", "benchmark", "report", "run", "tune"):
        assert p.parse_args([cmd, "x"] if cmd in ("reconstruct", "report") else [cmd]).command == cmd
    with pytest.raises(SystemExit):
        p.parse_args(["simulate", "--geometry", "m7"])
