import numpy as np
import pytest

from jsreit.forward import (
    Excitation, MeasurementSet, add_noise, background_gradient, background_potential, excitations,
    measure, solve_transmission,
)
from jsreit.geometry import Anomaly, AnomalyShape, Scenario, make_ellipse, measurement_points


def concentric_coefficients(R, rho, sigma, n=1):
    """u = A r^n cos(n t) inside, (B r^n + C r^-n) cos(n t) outside, unit flux coefficient of r^n cos(n t)."""
    M = np.array([
        [0.0, n * R ** (n - 1), -n * R ** (-n - 1)],   # d/dr of exterior at R equals that of r^n
        [rho**n, -(rho**n), -(rho ** (-n))],           # continuity at rho
        [sigma * n * rho ** (n - 1), -n * rho ** (n - 1), n * rho ** (-n - 1)],  # flux continuity
    ])
    return np.linalg.solve(M, [n * R ** (n - 1), 0.0, 0.0])


def test_background_examples():
    assert background_potential(1, [3.0, 2.0]) == 3.0
    assert background_potential(3, [2.0, 1.0]) == 3.0
    assert np.allclose(background_gradient(4, [2.0, 1.0]), [1.0, 2.0])
    with pytest.raises(ValueError):
        background_potential(5, [0.0, 0.0])


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_excitation_compatibility(k, ellipse2000):
    g = Excitation(k).current(ellipse2000)
    assert abs(ellipse2000.weights @ g) < 1e-10


def test_no_contrast_gives_background():
    sol = solve_transmission(Scenario(), nodes=400)
    assert np.abs(sol.perturbation).max() < 1e-8
    nearly = Scenario(anomalies=[Anomaly(AnomalyShape.disk((1, 1), 1), 1 + 1e-10)])
    assert np.abs(solve_transmission(nearly, nodes=400).perturbation).max() < 1e-8


@pytest.mark.parametrize("k, n", [(1, 1), (3, 2)])
def test_concentric_disk_oracle(k, n):
    R, rho, sigma = 3.0, 1.2, 5.0
    sc = Scenario(a=R, b=R, anomalies=[Anomaly(AnomalyShape.disk((0, 0), rho), sigma)])
    sol = solve_transmission(sc, ks=[k], nodes=2000)
    A, B, C = concentric_coefficients(R, rho, sigma, n)
    t = np.linspace(0, 2 * np.pi, 61, endpoint=False)
    # H_1 = r cos t, H_3 = r^2 cos 2t
    ref = (B * R**n + C * R**-n - R**n) * np.cos(n * t)
    got = sol.trace(t)[:, 0]
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-6
    # interior field: grad u = n A r^(n-1) (cos, -sin) rotated; check k = 1 only where it is uniform
    if k == 1:
        g = sol.gradient(np.array([[0.2, -0.3], [-0.5, 0.1]]))
        assert np.allclose(g[:, 0, :], [A, 0.0], atol=1e-6)


def test_boundary_mean_zero(solution_a):
    sol = solution_a
    H = np.column_stack([background_potential(k, sol.mesh.nodes) for k in sol.ks])
    full = H + sol.perturbation - (sol.mesh.weights @ H)[None, :] / sol.mesh.perimeter
    assert np.allclose(sol.mesh.weights @ full, 0, atol=1e-8)
    assert np.allclose(sol.mesh.weights @ sol.perturbation, 0, atol=1e-10)


def test_trace_converged_under_refinement(scenario_a, solution_a):
    fine = solve_transmission(scenario_a, nodes=1200)
    t = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    a, b = solution_a.trace(t), fine.trace(t)
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-6


def test_small_contrast_is_linear():
    def norm(eps):
        sc = Scenario(anomalies=[Anomaly(AnomalyShape.disk((1, -1), 1.5), 1 + eps)])
        return np.linalg.norm(solve_transmission(sc, nodes=400).perturbation)

    assert norm(0.025) / norm(0.05) == pytest.approx(0.5, rel=0.05)


def test_measure_noiseless_and_deterministic(solution_a, scenario_a):
    clean = measure(solution_a, scenario_a, seed=3, snr=np.inf)
    assert np.array_equal(clean.data, clean.clean)
    a = measure(solution_a, scenario_a, seed=3)
    b = measure(solution_a, scenario_a, seed=3)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, measure(solution_a, scenario_a, seed=4).data)


def test_realized_snr(solution_a, scenario_a):
    snrs = []
    for seed in range(100):
        ms = measure(solution_a, scenario_a, seed=seed)
        for j in range(ms.data.shape[1]):
            s, e = ms.clean[:, j], ms.data[:, j] - ms.clean[:, j]
            snrs.append(20 * np.log10(np.linalg.norm(s) / np.linalg.norm(e)))
    assert 39 <= np.mean(snrs) <= 41


def test_add_noise_infinite_snr():
    s = np.arange(5.0)
    assert np.array_equal(add_noise(s, np.inf, np.random.default_rng(0)), s)


def test_measurement_files_roundtrip(tmp_path, solution_a, scenario_a):
    ms = measure(solution_a, scenario_a, seed=7, geometry="m32")
    ms.to_files(tmp_path / "run")
    back = MeasurementSet.from_files(tmp_path / "run", make_ellipse(10, 7, 16))
    assert back.geometry == "m32" and back.seed == 7
    assert np.allclose(back.data, ms.data, rtol=1e-15, atol=0)
    assert np.allclose(back.points.nodes, measurement_points("m32", solution_a.mesh).nodes)


def test_excitations_list():
    assert [e.k for e in excitations(4)] == [1, 2, 3, 4]
