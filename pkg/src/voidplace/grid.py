"""Discretized space-time domain.

Cells are flattened space-major: ``index = i_s * n_t + i_t``. All integrals
over the domain are midpoint sums over cell centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpaceTimeGrid:
    s_min: float
    s_max: float
    t_min: float
    t_max: float
    n_s: int
    n_t: int

    def __post_init__(self):
        if int(self.n_s) != self.n_s or int(self.n_t) != self.n_t:
            raise ValueError("bin counts must be integers")
        if self.n_s < 1 or self.n_t < 1:
            raise ValueError(f"bin counts must be positive, got n_s={self.n_s}, n_t={self.n_t}")
        if not self.s_max > self.s_min:
            raise ValueError(f"need s_max > s_min, got [{self.s_min}, {self.s_max}]")
        if not self.t_max > self.t_min:
            raise ValueError(f"need t_max > t_min, got [{self.t_min}, {self.t_max}]")

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / self.n_s

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / self.n_t

    @property
    def cell_measure(self) -> float:
        """Area ``|g|`` of every cell (km * h)."""
        return self.ds * self.dt

    @property
    def n_cells(self) -> int:
        return self.n_s * self.n_t

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_s, self.n_t)

    @property
    def s_centers(self) -> np.ndarray:
        return self.s_min + (np.arange(self.n_s) + 0.5) * self.ds

    @property
    def t_centers(self) -> np.ndarray:
        return self.t_min + (np.arange(self.n_t) + 0.5) * self.dt

    def cell_s(self) -> np.ndarray:
        """Spatial center of every cell in flattened order."""
        return np.repeat(self.s_centers, self.n_t)

    def cell_t(self) -> np.ndarray:
        """Temporal center of every cell in flattened order."""
        return np.tile(self.t_centers, self.n_s)

    def flat_index(self, i_s: int, i_t: int) -> int:
        if not (0 <= i_s < self.n_s and 0 <= i_t < self.n_t):
            raise IndexError(f"cell ({i_s}, {i_t}) outside {self.n_s}x{self.n_t} grid")
        return i_s * self.n_t + i_t

    def unflatten(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.n_cells:
            raise IndexError(f"cell index {index} outside [0, {self.n_cells})")
        return divmod(int(index), self.n_t)

    def subgrid(self, s_bins: slice, t_bins: slice) -> "SpaceTimeGrid":
        """Grid covering a contiguous block of this grid's cells."""
        s_idx = range(self.n_s)[s_bins]
        t_idx = range(self.n_t)[t_bins]
        if len(s_idx) == 0 or len(t_idx) == 0 or s_idx.step != 1 or t_idx.step != 1:
            raise ValueError("subgrid needs nonempty contiguous slices")
        return SpaceTimeGrid(
            self.s_min + s_idx.start * self.ds,
            self.s_min + (s_idx.stop) * self.ds,
            self.t_min + t_idx.start * self.dt,
            self.t_min + (t_idx.stop) * self.dt,
            len(s_idx),
            len(t_idx),
        )


def make_grid(s_min, s_max, t_min, t_max, n_s, n_t) -> SpaceTimeGrid:
    return SpaceTimeGrid(float(s_min), float(s_max), float(t_min), float(t_max), int(n_s), int(n_t))


def cell_center(grid: SpaceTimeGrid, index: int) -> tuple[float, float]:
    i_s, i_t = grid.unflatten(index)
    return (
        grid.s_min + (i_s + 0.5) * grid.ds,
        grid.t_min + (i_t + 0.5) * grid.dt,
    )


@dataclass(frozen=True)
class ScalarField:
    """One real value per grid cell, flattened space-major."""

    grid: SpaceTimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.n_cells:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.n_cells} cells")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: SpaceTimeGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.n_cells, float(value)))

    @classmethod
    def from_matrix(cls, grid: SpaceTimeGrid, matrix) -> "ScalarField":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != grid.shape:
            raise ValueError(f"expected shape {grid.shape}, got {matrix.shape}")
        return cls(grid, matrix.reshape(-1))

    def as_matrix(self) -> np.ndarray:
        """View as an ``(n_s, n_t)`` array."""
        return self.values.reshape(self.grid.shape)
