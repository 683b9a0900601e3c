"""Shared experiment setup: baseline intensity, environment samplers, planning surrogates.

Seed layout (children of the scenario seed): 0 representative environment
draw, 1 planning environment draws, 2 evaluation realizations, 3 random
placements.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .fields import SeparableKernel, SquashParams, gp_draw, lognormal_perturbation, squash_values
from .grid import ScalarField, SpaceTimeGrid
from .placement import Placement, Realization, cell_weights, draw_realizations, greedy_place
from .rng import SeedLike, child_seed, make_rng
from .sensing import AvailabilityParams, DetectionMatrix, Sensor, candidate_sensors, detection_layers

POLICIES = ("nf", "nfilt", "fa_aware", "random")
PLANNING_OMEGA = ("expected", "mean", "nominal", "zero")

SEED_REPRESENTATIVE = 0
SEED_PLANNING = 1
SEED_EVALUATION = 2
SEED_RANDOM = 3


@dataclass
class Scenario:
    """Everything needed to plan and score placements on one grid.

    ``lam`` is the baseline (posterior-mean) intensity. Evaluation draws
    perturb it with mean-one log-Gaussian noise from ``target_kernel``
    (``None`` keeps it fixed) and draw the environment from ``env_kernel``
    (``None`` pins it to ``fixed_omega`` or zero).
    """

    lam: ScalarField
    env_kernel: SeparableKernel | None
    squash: SquashParams
    availability: AvailabilityParams
    theta: float
    target_kernel: SeparableKernel | None = None
    planning_omega: str = "mean"
    n_planning_draws: int = 64
    seed: SeedLike = 0
    fixed_omega: ScalarField | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.planning_omega not in PLANNING_OMEGA:
            raise ValueError(f"planning_omega must be one of {PLANNING_OMEGA}, got {self.planning_omega!r}")

    @property
    def grid(self) -> SpaceTimeGrid:
        return self.lam.grid

    @cached_property
    def candidates(self) -> list[Sensor]:
        return candidate_sensors(self.grid, self.theta)

    def with_availability(self, params: AvailabilityParams) -> "Scenario":
        out = replace(self, availability=params, _cache={})
        # environment draws do not depend on availability
        out._cache.update({k: v for k, v in self._cache.items() if k[0] in ("omega_mean", "omega_draws", "omega_rep", "reals")})
        return out

    def representative_sensor(self) -> Sensor:
        return self.candidates[self.grid.n_s // 2]

    # -- samplers --------------------------------------------------------

    def lam_sampler(self, rng: np.random.Generator) -> ScalarField:
        if self.target_kernel is None:
            return self.lam
        return lognormal_perturbation(self.lam, self.target_kernel, rng)

    def omega_sampler(self, rng: np.random.Generator) -> ScalarField:
        if self.env_kernel is None:
            return self.fixed_omega if self.fixed_omega is not None else ScalarField.constant(self.grid, 0.0)
        z = gp_draw(self.grid, self.env_kernel, rng)
        return ScalarField(self.grid, squash_values(z, self.squash.beta_omega))

    def representative_omega(self) -> ScalarField:
        key = ("omega_rep",)
        if key not in self._cache:
            self._cache[key] = self.omega_sampler(make_rng(child_seed(self.seed, SEED_REPRESENTATIVE)))
        return self._cache[key]

    def planning_draws(self) -> list[np.ndarray]:
        """Environment draws behind the ``expected`` and ``mean`` planning modes."""
        key = ("omega_draws", self.n_planning_draws)
        if key not in self._cache:
            base = child_seed(self.seed, SEED_PLANNING)
            self._cache[key] = [
                self.omega_sampler(make_rng(child_seed(base, k))).values for k in range(self.n_planning_draws)
            ]
        return self._cache[key]

    def planning_omega_field(self) -> ScalarField:
        if self.planning_omega == "zero":
            return ScalarField.constant(self.grid, 0.0)
        if self.planning_omega == "nominal":
            return self.representative_omega()
        key = ("omega_mean", self.n_planning_draws)
        if key not in self._cache:
            self._cache[key] = ScalarField(self.grid, np.mean(self.planning_draws(), axis=0))
        return self._cache[key]

    def realizations(self, n: int, seed: SeedLike | None = None) -> list[Realization]:
        """Evaluation draws; the default seed is shared by every caller for common random numbers."""
        seed = child_seed(self.seed, SEED_EVALUATION) if seed is None else seed
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
        key = ("reals", n, ss.entropy, ss.spawn_key)
        if key not in self._cache:
            self._cache[key] = draw_realizations(self.lam_sampler, self.omega_sampler, n, ss)
        return self._cache[key]

    # -- planning surrogates ----------------------------------------------

    def policy_matrix(self, policy: str) -> DetectionMatrix:
        """Planning-time detection matrix for a policy at a single environment field.

        ``nf``: raw ``p`` at ``omega = 0`` (ideal range, full uptime).
        ``nfilt``: raw ``p`` with environment-dependent range, no availability.
        ``fa_aware``: ``alpha * p``.

        In ``expected`` mode the single field is the mean of the planning
        draws; :meth:`plan` averages over the draws themselves instead.
        """
        key = ("policy", policy)
        if key in self._cache:
            return self._cache[key]
        sensors = self.candidates
        loc = np.array([s.location for s in sensors])
        theta = np.array([s.theta for s in sensors])
        cell_s = self.grid.cell_s()
        if policy == "nf":
            p, alpha = detection_layers(cell_s, np.zeros(self.grid.n_cells), loc, theta, self.availability)
            dm = DetectionMatrix(self.grid, p, np.ones_like(p), p)
        elif policy in ("nfilt", "fa_aware"):
            p, alpha = detection_layers(cell_s, self.planning_omega_field().values, loc, theta, self.availability)
            if policy == "nfilt":
                dm = DetectionMatrix(self.grid, p, np.ones_like(p), p)
            else:
                dm = DetectionMatrix(self.grid, p, alpha, alpha * p)
        else:
            raise ValueError(f"no planning matrix for policy {policy!r}")
        self._cache[key] = dm
        return dm

    def _sensor_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        sensors = self.candidates
        return np.array([s.location for s in sensors]), np.array([s.theta for s in sensors])

    def _surrogate(self, omega: np.ndarray, use_alpha: bool, rows=None) -> np.ndarray:
        loc, theta = self._sensor_arrays()
        if rows is not None:
            loc, theta = loc[rows], theta[rows]
        p, alpha = detection_layers(self.grid.cell_s(), omega, loc, theta, self.availability)
        return alpha * p if use_alpha else p

    def _greedy_expected(self, use_alpha: bool, K: int) -> Placement:
        """Greedy on misses averaged over the planning environment draws."""
        draws = self.planning_draws()
        w = cell_weights(self.lam) / len(draws)
        residual = np.ones((len(draws), self.grid.n_cells))
        available = np.ones(len(self.candidates), dtype=bool)
        chosen, gains = [], []
        for _ in range(K):
            g = np.zeros(len(self.candidates))
            for r, omega in enumerate(draws):
                g += self._surrogate(omega, use_alpha) @ (w * residual[r])
            g[~available] = -np.inf
            j = int(np.argmax(g))
            chosen.append(j)
            gains.append(float(g[j]))
            available[j] = False
            for r, omega in enumerate(draws):
                residual[r] *= 1.0 - self._surrogate(omega, use_alpha, rows=[j])[0]
        return Placement(tuple(chosen), K, tuple(gains))

    def plan(self, policy: str, K: int) -> Placement:
        """Greedy placement of ``K`` sensors for a model-based policy.

        Greedy picks are prefix-stable, so the longest plan computed so far
        is cached and truncated for smaller budgets.
        """
        if policy not in ("nf", "nfilt", "fa_aware"):
            raise ValueError(f"policy {policy!r} is not planned greedily")
        key = ("plan", policy)
        cached = self._cache.get(key)
        if cached is None or len(cached) < K:
            if policy == "nf" or self.planning_omega != "expected":
                cached = greedy_place(self.lam, self.policy_matrix(policy), None, K)
            else:
                cached = self._greedy_expected(policy == "fa_aware", K)
            self._cache[key] = cached
        return Placement(cached.indices[:K], K, cached.gains[:K])

    def planning_misses(self, policy: str, placement) -> float:
        """The expected misses the planner of ``policy`` assigns to ``placement``."""
        idx = list(placement.indices) if isinstance(placement, Placement) else [int(i) for i in placement]
        w = cell_weights(self.lam)
        if policy == "nf" or self.planning_omega != "expected":
            pt = self.policy_matrix(policy).p_tilde[idx]
            return float(w @ np.prod(1.0 - pt, axis=0))
        use_alpha = policy == "fa_aware"
        draws = self.planning_draws()
        total = sum(w @ np.prod(1.0 - self._surrogate(om, use_alpha, rows=idx), axis=0) for om in draws)
        return float(total / len(draws))
