"""False-alarm-aware sensor placement for Poisson arrivals on a 1-D corridor."""

__version__ = "0.1.0"

from .grid import ScalarField, SpaceTimeGrid, cell_center, make_grid
from .fields import SeparableKernel, SquashParams, kernel_eval, sample_gp, sample_lgcp_intensity, squash, total_mass
from .sensing import AvailabilityParams, DetectionMatrix, Sensor, build_detection_matrix
from .placement import (
    CertificateReport,
    Placement,
    approx_bound,
    brute_force_place,
    certify,
    coverage_bound,
    dominance_threshold,
    expected_undetected,
    greedy_place,
    random_place,
    switching_threshold,
    void_probability_mc,
)
from .scenario import Scenario

__all__ = [
    "AvailabilityParams",
    "CertificateReport",
    "DetectionMatrix",
    "Placement",
    "ScalarField",
    "Scenario",
    "Sensor",
    "SeparableKernel",
    "SpaceTimeGrid",
    "SquashParams",
    "approx_bound",
    "brute_force_place",
    "build_detection_matrix",
    "cell_center",
    "certify",
    "coverage_bound",
    "dominance_threshold",
    "expected_undetected",
    "greedy_place",
    "kernel_eval",
    "make_grid",
    "random_place",
    "sample_gp",
    "sample_lgcp_intensity",
    "squash",
    "switching_threshold",
    "total_mass",
    "void_probability_mc",
]
