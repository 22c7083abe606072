"""Anomaly reconstruction in electrical impedance tomography by joint sparse recovery.

The pipeline simulates boundary data with a boundary-integral forward solver,
localizes induced currents with M-SBL, estimates the internal potential, and
recovers the conductivity contrast on the estimated support with C-SALSA.
Linearized EIT and MUSIC are provided as baselines.
"""

from .geometry import (
    Anomaly, AnomalyShape, BoundaryMesh, Grid, Scenario, build_grid, make_ellipse,
    measurement_points, sparse_target_a, sparse_target_b, kite_target,
)
from .forward import MeasurementSet, solve_transmission, measure
from .harness import RunConfig, RunReport, relative_error, recoverability_bound, run_scenario, report

__all__ = [
    "Anomaly", "AnomalyShape", "BoundaryMesh", "Grid", "Scenario", "build_grid", "make_ellipse",
    "measurement_points", "sparse_target_a", "sparse_target_b", "kite_target",
    "MeasurementSet", "solve_transmission", "measure",
    "RunConfig", "RunReport", "relative_error", "recoverability_bound", "run_scenario", "report",
]
__version__ = "0.1.0"
