import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jsreit import layerpot as lp
from jsreit.forward import measure, solve_transmission
from jsreit.geometry import Anomaly, AnomalyShape, Scenario
from jsreit.geometry import build_grid, make_ellipse, measurement_points
from jsreit.music import music_spectrum, noise_projector, signal_dimension, steering_table


@pytest.fixture(scope="module")
def neumann400():
    return lp.NeumannFunction(make_ellipse(10.0, 7.0, 400))


@pytest.fixture(scope="module")
def table_a(grid_a, points_m100, neumann400):
    return steering_table(grid_a, points_m100, neumann400)


def test_projector_annihilates_noiseless_rank_two_data(rng):
    Y = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 4))
    P, s = noise_projector(Y, 2)
    assert s == 2
    assert np.abs(P @ Y).max() < 1e-12 * np.abs(Y).max()
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    np.testing.assert_allclose(P, P.T, atol=1e-14)
    assert np.isclose(np.trace(P), 28)


def test_projector_rejects_bad_dimensions(rng):
    Y = rng.standard_normal((5, 3))
    with pytest.raises(ValueError):
        noise_projector(Y, 0)
    with pytest.raises(ValueError):
        noise_projector(Y, 5)


def test_signal_dimension_picks_largest_gap():
    assert signal_dimension(np.array([10.0, 9.0, 1e-3, 5e-4])) == 2
    assert signal_dimension(np.array([1.0, 1e-20])) == 1
    with pytest.raises(ValueError):
        signal_dimension(np.zeros(3))


def test_identity_projector_gives_flat_spectrum(grid_a, points_m100, table_a):
    sp = music_spectrum(grid_a, points_m100, None, np.eye(len(points_m100.nodes)), table=table_a)
    full = np.setdiff1d(np.arange(grid_a.n), sp.rank_one_cells)
    np.testing.assert_allclose(sp.values[full], 1.0, atol=1e-10)


def test_spectrum_needs_a_kernel(grid_a, points_m100):
    with pytest.raises(ValueError):
        music_spectrum(grid_a, points_m100, None, np.eye(len(points_m100.nodes)))


@settings(max_examples=20, deadline=None)
@given(j=st.integers(0, 10_000), seed=st.integers(0, 2**31 - 1))
def test_synthetic_dipole_peaks_at_source(grid_a, points_m100, table_a, j, seed):
    j = j % grid_a.n
    rng = np.random.default_rng(seed)
    Y = table_a[:, j, :] @ rng.standard_normal((2, 4))
    P, _ = noise_projector(Y, 2)
    v = music_spectrum(grid_a, points_m100, None, P, table=table_a).values
    far = np.linalg.norm(grid_a.centers - grid_a.centers[j], axis=1) > 2 * grid_a.h
    assert v[j] == pytest.approx(1.0)
    assert v[j] > v[far].max()


@settings(max_examples=10, deadline=None)
@given(angle=st.floats(0, 2 * np.pi), seed=st.integers(0, 2**31 - 1))
def test_spectrum_invariant_to_steering_basis(angle, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((20, 2))
    Q = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    P, _ = noise_projector(rng.standard_normal((20, 3)), 3)

    def lam(B):
        U = np.linalg.svd(B, full_matrices=False)[0]
        return np.linalg.eigvalsh(U.T @ P @ U)[0]

    assert lam(A) == pytest.approx(lam(A @ Q), rel=1e-10)


def test_peak_sharpness_decreases_with_noise(neumann400):
    sc = Scenario(anomalies=[Anomaly(AnomalyShape.disk((2.0, 1.0), 0.6), 5.0)], M=4)
    sol = solve_transmission(sc, nodes=600)
    grid = build_grid(sc)
    pts = measurement_points("m100", sol.mesh)
    tab = steering_table(grid, pts, neumann400)
    true = grid.contrast != 0
    sharp = []
    for snr in (np.inf, 40.0, 20.0):
        vals = []
        for seed in range(6):
            P, _ = noise_projector(measure(sol, sc, seed=seed, snr=snr).data, 2)
            v = music_spectrum(grid, pts, None, P, table=tab).values
            vals.append(v[true].mean() / v.mean())
        sharp.append(np.mean(vals))
    assert sharp[0] >= sharp[1] >= sharp[2]
