import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from jsreit.geometry import (
    Anomaly, AnomalyShape, Scenario, build_grid, kite_curve, label_cells, make_ellipse,
    measurement_points, sparse_target_a, sparse_target_b, winding_number,
)


def ellipse_perimeter(a, b):
    return quad(lambda t: np.hypot(a * np.sin(t), b * np.cos(t)), 0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13)[0]


def test_unit_circle_perimeter():
    assert abs(make_ellipse(1, 1, 2000).perimeter - 2 * np.pi) < 1e-10


def test_ellipse_perimeter_against_adaptive_quadrature(ellipse2000):
    ref = ellipse_perimeter(10, 7)
    assert abs(ellipse2000.perimeter - ref) / ref < 1e-6


def test_circle_normal_at_zero():
    assert np.allclose(make_ellipse(1, 1, 16).normals[0], [1, 0], atol=1e-15)


def test_mesh_invariants(ellipse2000):
    assert np.allclose(np.linalg.norm(ellipse2000.normals, axis=1), 1, atol=1e-12)
    assert ellipse2000.signed_area() > 0
    # curvature of the ellipse at t = 0 is a / b^2
    assert ellipse2000.curvature[0] == pytest.approx(10 / 49, rel=1e-12)


@pytest.mark.parametrize("a, b, L", [(0, 1, 32), (1, -1, 32), (1, 1, 15)])
def test_make_ellipse_rejects(a, b, L):
    with pytest.raises(ValueError):
        make_ellipse(a, b, L)


def test_grid_size_and_margin():
    sc = Scenario()
    g = build_grid(sc)
    assert 800 <= g.n <= 950
    inside = (g.centers[:, 0] / 10) ** 2 + (g.centers[:, 1] / 7) ** 2
    assert np.all(inside < 1)
    assert g.delta == 0.25
    assert np.all(g.sigma == 1)


def test_grid_count_by_brute_force():
    # independent count of lattice points (i + 1/2) h inside the shrunk ellipse
    h, a, b = 0.5, 9.75, 6.75
    xs = np.arange(-30, 30) * h + h / 2
    X, Y = np.meshgrid(xs, xs)
    assert build_grid(Scenario()).n == int(np.sum((X / a) ** 2 + (Y / b) ** 2 < 1))


def test_target_counts():
    assert np.count_nonzero(build_grid(sparse_target_a()).contrast) == 24
    assert abs(2 * np.count_nonzero(build_grid(sparse_target_b()).contrast) - 56) <= 8


def test_grid_rejects_bad_spacing():
    with pytest.raises(ValueError):
        build_grid(Scenario(h=-0.5))


def test_measurement_points(ellipse2000):
    p = measurement_points("m100", ellipse2000)
    assert len(p) == 100
    assert np.allclose((p.nodes[:, 0] / 10) ** 2 + (p.nodes[:, 1] / 7) ** 2, 1, atol=1e-12)
    half = measurement_points("m16p", ellipse2000)
    assert len(half) == 16 and np.all((half.params >= 0) & (half.params <= np.pi + 1e-15))
    circ = measurement_points("m32", make_ellipse(1, 1, 64))
    ang = np.diff(np.unwrap(np.arctan2(circ.nodes[:, 1], circ.nodes[:, 0])))
    assert np.allclose(ang, 2 * np.pi / 32)
    with pytest.raises(ValueError):
        measurement_points("m7", ellipse2000)


def test_scenario_validation():
    disk = AnomalyShape.disk((0, 0), 1)
    with pytest.raises(ValueError):
        Scenario(anomalies=[Anomaly(disk, 1.0)])
    with pytest.raises(ValueError):
        Scenario(anomalies=[Anomaly(disk, -2.0)])
    with pytest.raises(ValueError):
        Scenario(anomalies=[Anomaly(AnomalyShape.disk((9.5, 0), 1), 2.0)])
    with pytest.raises(ValueError):
        Scenario(anomalies=[Anomaly(disk, 2.0), Anomaly(AnomalyShape.disk((1.5, 0), 1), 3.0)])


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.2, 2.0))
def test_disk_membership_is_analytic(cx, cy, r):
    pts = np.random.default_rng(0).uniform(-5, 5, size=(200, 2))
    shape = AnomalyShape.disk((cx, cy), r)
    expect = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2 < r**2
    assert np.array_equal(shape.contains(pts), expect)


def test_kite_membership_matches_winding_number():
    shape = AnomalyShape.kite((0, 0), 1.5)
    poly = kite_curve((0, 0), 1.5).pos(np.linspace(0, 2 * np.pi, 20000, endpoint=False))
    pts = np.random.default_rng(1).uniform(-3, 3, size=(2000, 2))
    # drop points within 1e-3 of the curve, where polygon resolution matters
    d = np.min(np.linalg.norm(pts[:, None, :] - poly[None, ::10, :], axis=-1), axis=1)
    pts = pts[d > 1e-2]
    assert np.array_equal(shape.contains(pts), winding_number(poly, pts) != 0)


@settings(max_examples=20, deadline=None)
@given(st.permutations([0, 1, 2]))
def test_labelling_order_independent_and_idempotent(perm):
    sc = sparse_target_b()
    g = build_grid(sc)
    shuffled = [sc.anomalies[i] for i in perm]
    once = label_cells(g.centers, shuffled)
    assert np.array_equal(once, g.sigma)
    assert np.array_equal(label_cells(g.centers, shuffled), once)


def test_csv_export(tmp_path, ellipse2000, grid_a):
    ellipse2000.to_csv(tmp_path / "mesh.csv")
    grid_a.to_csv(tmp_path / "grid.csv")
    mesh = np.loadtxt(tmp_path / "mesh.csv", delimiter=",", skiprows=1)
    grid = np.loadtxt(tmp_path / "grid.csv", delimiter=",", skiprows=1)
    assert mesh.shape == (2000, 7) and grid.shape == (grid_a.n, 3)
