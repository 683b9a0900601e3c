"""Latent Gaussian fields, the bounded environment factor, and LGCP intensities.

Sampling exploits separability of the squared-exponential kernel: the
covariance of the flattened field is ``K_s (x) K_t``, so a draw is
``L_s W L_t^T`` with ``W`` an ``n_s x n_t`` standard normal matrix and
``L_s``, ``L_t`` the Cholesky factors of the two small marginal matrices.
The ``L x L`` covariance is never formed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .grid import ScalarField, SpaceTimeGrid
from .rng import SeedLike, make_rng

JITTER = 1e-9
MAX_JITTER = 1e-3


class FactorizationError(np.linalg.LinAlgError):
    """Covariance could not be factored even with escalated jitter."""


@dataclass(frozen=True)
class SeparableKernel:
    sigma: float
    ell_s: float
    ell_t: float

    def __post_init__(self):
        for name in ("sigma", "ell_s", "ell_t"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class SquashParams:
    beta_omega: float

    def __post_init__(self):
        if not self.beta_omega > 0:
            raise ValueError(f"beta_omega must be positive, got {self.beta_omega}")


def kernel_eval(kernel: SeparableKernel, p, q) -> float:
    """Covariance between space-time points ``p = (s, t)`` and ``q = (s', t')``."""
    ds = p[0] - q[0]
    dt = p[1] - q[1]
    return (
        kernel.sigma**2
        * math.exp(-(ds * ds) / (2.0 * kernel.ell_s**2))
        * math.exp(-(dt * dt) / (2.0 * kernel.ell_t**2))
    )


def se_matrix(x: np.ndarray, ell: float) -> np.ndarray:
    d = x[:, None] - x[None, :]
    return np.exp(-(d * d) / (2.0 * ell * ell))


def jittered_cholesky(cov: np.ndarray, scale: float) -> np.ndarray:
    """Cholesky factor of ``cov + j * scale * I``, escalating ``j`` from 1e-9 on failure."""
    eye = np.eye(cov.shape[0])
    jitter = JITTER
    while jitter <= MAX_JITTER:
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"covariance of size {cov.shape[0]} not positive definite with jitter up to {MAX_JITTER:g}"
    )


@lru_cache(maxsize=32)
def _kron_factors(grid: SpaceTimeGrid, kernel: SeparableKernel) -> tuple[np.ndarray, np.ndarray]:
    var = kernel.sigma**2
    chol_s = jittered_cholesky(var * se_matrix(grid.s_centers, kernel.ell_s), var)
    chol_t = jittered_cholesky(se_matrix(grid.t_centers, kernel.ell_t), 1.0)
    chol_s.setflags(write=False)
    chol_t.setflags(write=False)
    return chol_s, chol_t


def _mean_values(grid: SpaceTimeGrid, mean) -> np.ndarray:
    if isinstance(mean, ScalarField):
        if mean.grid != grid:
            raise ValueError("mean field lives on a different grid")
        return mean.values
    mean = np.asarray(mean, dtype=float)
    if mean.ndim == 0:
        return np.full(grid.n_cells, float(mean))
    return mean.reshape(-1)


def gp_draw(grid: SpaceTimeGrid, kernel: SeparableKernel, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean draw on cell centers, flattened space-major."""
    chol_s, chol_t = _kron_factors(grid, kernel)
    white = rng.standard_normal(grid.shape)
    return (chol_s @ white @ chol_t.T).reshape(-1)


def sample_gp(grid: SpaceTimeGrid, kernel: SeparableKernel, mean=0.0, seed: SeedLike = 0) -> ScalarField:
    return ScalarField(grid, _mean_values(grid, mean) + gp_draw(grid, kernel, make_rng(seed)))


def squash_values(z, beta_omega: float) -> np.ndarray:
    # 1 - exp(-b z) is negative for z < 0; clamp keeps omega in [0, 1]
    return np.clip(-np.expm1(-beta_omega * np.asarray(z, dtype=float)), 0.0, 1.0)


def squash(z_field: ScalarField, params: SquashParams) -> ScalarField:
    return ScalarField(z_field.grid, squash_values(z_field.values, params.beta_omega))


def sample_lgcp_intensity(
    grid: SpaceTimeGrid, kernel: SeparableKernel, log_mean_field=0.0, seed: SeedLike = 0
) -> ScalarField:
    log_lam = sample_gp(grid, kernel, log_mean_field, seed)
    return ScalarField(grid, np.exp(log_lam.values))


def total_mass(lam: ScalarField) -> float:
    """Expected arrival count: midpoint sum of ``lambda * |g|``."""
    return float(np.sum(lam.values) * lam.grid.cell_measure)


def save_field_csv(path, field_: ScalarField, column: str = "lambda") -> None:
    """Write ``s_index,t_index,<column>`` rows in flattened order."""
    grid = field_.grid
    i_s = np.repeat(np.arange(grid.n_s), grid.n_t)
    i_t = np.tile(np.arange(grid.n_t), grid.n_s)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s_index", "t_index", column])
        for a, b, v in zip(i_s, i_t, field_.values):
            writer.writerow([int(a), int(b), repr(float(v))])


def load_field_csv(path, grid: SpaceTimeGrid, column: str = "lambda", nonnegative: bool = True) -> ScalarField:
    """Read a field CSV written by :func:`save_field_csv`; every cell must appear once."""
    values = np.full(grid.n_cells, np.nan)
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"s_index", "t_index", column} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                idx = grid.flat_index(int(row["s_index"]), int(row["t_index"]))
                value = float(row[column])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if not math.isfinite(value) or (nonnegative and value < 0):
                raise ValueError(f"{path}:{lineno}: {column}={value} must be finite and >= 0")
            if not math.isnan(values[idx]):
                raise ValueError(f"{path}:{lineno}: duplicate cell {idx}")
            values[idx] = value
    if np.isnan(values).any():
        raise ValueError(f"{path}: {int(np.isnan(values).sum())} cells missing")
    return ScalarField(grid, values)


def load_intensity_csv(path, grid: SpaceTimeGrid) -> ScalarField:
    return load_field_csv(path, grid, "lambda", nonnegative=True)


def save_intensity_csv(path, lam: ScalarField) -> None:
    if np.any(~np.isfinite(lam.values)) or np.any(lam.values < 0):
        raise ValueError("intensity must be finite and nonnegative")
    save_field_csv(path, lam, "lambda")


def lognormal_perturbation(
    lam: ScalarField, kernel: SeparableKernel, rng: np.random.Generator
) -> ScalarField:
    """``lam * exp(Z - sigma^2 / 2)``: a positive draw whose per-cell mean is ``lam``."""
    z = gp_draw(lam.grid, kernel, rng)
    return ScalarField(lam.grid, lam.values * np.exp(z - 0.5 * kernel.sigma**2))
