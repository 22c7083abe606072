"""Acceptance gate: every criterion at its stated tolerance, one PASS/FAIL line each.

The table-level criteria share one 20-seed benchmark (about ten minutes). Set
``JSREIT_ACCEPT_SEEDS`` to a smaller number for a quick look; the verdicts are
only meaningful at the default.
"""

import os

import pytest

from jsreit import benchmark as bm

pytestmark = pytest.mark.slow

N_SEEDS = int(os.environ.get("JSREIT_ACCEPT_SEEDS", "20"))


@pytest.fixture(scope="module")
def runs():
    return bm.run_benchmark(seeds=range(N_SEEDS))


def verdict(check, capsys):
    with capsys.disabled():
        print("\n" + check.line())
    assert check.passed, check.detail


def test_01_recoverability_bounds(capsys):
    verdict(bm.check_bounds(), capsys)


def test_02_support_sizes_within_bound(capsys):
    verdict(bm.check_support_sizes(), capsys)


def test_03_error_table(runs, capsys):
    verdict(bm.check_error_table(runs), capsys)


def test_04_proposed_beats_linearized(runs, capsys):
    verdict(bm.check_dominance(runs), capsys)


def test_05_forward_solver_against_concentric_oracle(capsys):
    verdict(bm.check_forward_oracle(), capsys)


def test_06_layer_potentials(capsys):
    verdict(bm.check_layer_potentials(), capsys)


def test_07_msbl_on_synthetic_mmv(capsys):
    verdict(bm.check_mmv(), capsys)


def test_08_csalsa_feasibility_and_prox(runs, capsys):
    verdict(bm.check_csalsa(runs), capsys)


def test_09_support_threshold_sweep(runs, capsys):
    verdict(bm.check_sweep(runs), capsys)


def test_10_music_comparison(runs, capsys):
    verdict(bm.check_music(runs), capsys)


def test_11_conductivity_solve_timing(runs, capsys):
    verdict(bm.check_timing(runs), capsys)
