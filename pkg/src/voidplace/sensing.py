"""Detection, false-alarm, and availability model.

A sensor at ``a`` with filter setting ``theta`` sees a target at ``(s, t)``
with probability ``exp(-(s - a)^2 / ell)``, ``ell = theta * exp(-omega)``,
where ``omega`` is the environment factor at the target cell. False alarms
``chi = omega * ((theta - 1)^2 + xi)`` drain availability
``alpha = 1 / (1 + beta * chi)``, and the effective detection probability is
``alpha * p``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import ScalarField, SpaceTimeGrid


@dataclass(frozen=True)
class Sensor:
    location: float
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class AvailabilityParams:
    beta: float
    xi: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")


def effective_length(theta, omega):
    return theta * np.exp(-omega)


def detect_prob(s, sensor: Sensor, omega_at_cell):
    d = s - sensor.location
    return np.exp(-(d * d) / effective_length(sensor.theta, omega_at_cell))


def zeta(theta, xi):
    return (theta - 1.0) ** 2 + xi


def false_alarm_rate(omega, theta, xi):
    return omega * zeta(theta, xi)


def availability(chi, beta):
    return 1.0 / (1.0 + beta * chi)


@dataclass(frozen=True)
class DetectionMatrix:
    """Per-sensor, per-cell detection layers, each of shape ``(m, L)``."""

    grid: SpaceTimeGrid
    p: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    p_tilde: np.ndarray = field(repr=False)

    @property
    def n_sensors(self) -> int:
        return self.p_tilde.shape[0]

    @classmethod
    def from_effective(cls, grid: SpaceTimeGrid, p_tilde) -> "DetectionMatrix":
        """Wrap a bare effective-probability matrix (unit availability)."""
        p_tilde = np.atleast_2d(np.asarray(p_tilde, dtype=float))
        if p_tilde.shape[1] != grid.n_cells:
            raise ValueError(f"matrix has {p_tilde.shape[1]} columns, grid has {grid.n_cells} cells")
        if np.any(p_tilde < 0) or np.any(p_tilde > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        return cls(grid, p_tilde, np.ones_like(p_tilde), p_tilde)

    def rows(self, indices: Sequence[int]) -> "DetectionMatrix":
        idx = np.asarray(indices, dtype=int)
        return DetectionMatrix(self.grid, self.p[idx], self.alpha[idx], self.p_tilde[idx])

    def save_csv(self, path) -> None:
        m, n = self.p_tilde.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sensor_index", "cell_index", "p", "alpha", "p_tilde"])
            for i in range(m):
                for g in range(n):
                    writer.writerow(
                        [i, g, repr(float(self.p[i, g])), repr(float(self.alpha[i, g])), repr(float(self.p_tilde[i, g]))]
                    )


def _sensor_arrays(sensors: Sequence[Sensor]) -> tuple[np.ndarray, np.ndarray]:
    loc = np.array([s.location for s in sensors], dtype=float)
    theta = np.array([s.theta for s in sensors], dtype=float)
    return loc, theta


def detection_layers(
    cell_s: np.ndarray,
    omega: np.ndarray,
    locations: np.ndarray,
    thetas: np.ndarray,
    params: AvailabilityParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``p`` and availability ``alpha`` arrays of shape ``(m, L)``."""
    d = cell_s[None, :] - locations[:, None]
    # p = exp(-d^2 e^omega / theta)
    p = np.exp(-(d * d) * np.exp(omega)[None, :] / thetas[:, None])
    chi = omega[None, :] * zeta(thetas, params.xi)[:, None]
    alpha = availability(chi, params.beta)
    return p, alpha


def build_detection_matrix(
    grid: SpaceTimeGrid,
    sensors: Sequence[Sensor],
    omega_field: ScalarField,
    params: AvailabilityParams,
) -> DetectionMatrix:
    if omega_field.grid != grid:
        raise ValueError("omega field lives on a different grid")
    loc, theta = _sensor_arrays(sensors)
    if np.any(loc < grid.s_min) or np.any(loc > grid.s_max):
        raise ValueError("sensor location outside the spatial domain")
    p, alpha = detection_layers(grid.cell_s(), omega_field.values, loc, theta, params)
    return DetectionMatrix(grid, p, alpha, alpha * p)


def candidate_sensors(grid: SpaceTimeGrid, theta: float) -> list[Sensor]:
    """One candidate per spatial cell center, all sharing ``theta``."""
    return [Sensor(float(s), float(theta)) for s in grid.s_centers]
