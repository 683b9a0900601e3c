"""Expected misses, greedy placement, Monte Carlo void probability, and certificates.

Coverage ``C(a) = Lambda - Ubar(a)`` is monotone submodular in the sensor
set, so greedy selection achieves at least ``1 - 1/e`` of the optimal
coverage. The certificate bounds below turn that into lower bounds on the
void probability.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .grid import ScalarField, SpaceTimeGrid
from .rng import SeedLike, child_seed, make_rng
from .sensing import AvailabilityParams, DetectionMatrix, Sensor, detection_layers

E = math.e
GREEDY_RATIO = 1.0 - 1.0 / E
MAX_SUBSETS = 10**6


@dataclass(frozen=True)
class Placement:
    """Selected candidate indices in pick order, with the gain of each pick."""

    indices: tuple[int, ...]
    budget: int
    gains: tuple[float, ...] = ()

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"duplicate sensors in placement {self.indices}")
        if len(self.indices) > self.budget:
            raise ValueError(f"{len(self.indices)} sensors exceed budget {self.budget}")

    def __len__(self) -> int:
        return len(self.indices)

    def save_csv(self, path, sensors: Sequence[Sensor]) -> None:
        gains = self.gains or (float("nan"),) * len(self.indices)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rank", "candidate_index", "location_km", "marginal_gain"])
            for rank, (idx, gain) in enumerate(zip(self.indices, gains)):
                writer.writerow([rank, idx, repr(float(sensors[idx].location)), repr(float(gain))])


def _indices(placement) -> list[int]:
    if isinstance(placement, Placement):
        return list(placement.indices)
    return [int(i) for i in placement]


def cell_weights(lam: ScalarField) -> np.ndarray:
    """``lambda_g * |g|`` per cell."""
    return lam.values * lam.grid.cell_measure


def miss_fraction(p_tilde: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    """Per-cell probability that every selected sensor misses."""
    if len(indices) == 0:
        return np.ones(p_tilde.shape[1])
    return np.prod(1.0 - p_tilde[list(indices)], axis=0)


def expected_undetected(lam: ScalarField, detection: DetectionMatrix, placement) -> float:
    if lam.grid != detection.grid:
        raise ValueError("intensity and detection matrix live on different grids")
    w = cell_weights(lam)
    return float(w @ miss_fraction(detection.p_tilde, _indices(placement)))


def coverage(lam: ScalarField, detection: DetectionMatrix, placement) -> float:
    w = cell_weights(lam)
    return float(w @ (1.0 - miss_fraction(detection.p_tilde, _indices(placement))))


def _candidate_list(detection: DetectionMatrix, candidates) -> list[int]:
    if candidates is None:
        return list(range(detection.n_sensors))
    out = [int(c) for c in candidates]
    if any(c < 0 or c >= detection.n_sensors for c in out):
        raise IndexError("candidate index outside detection matrix")
    if len(set(out)) != len(out):
        raise ValueError("duplicate candidates")
    return out


def greedy_place(lam: ScalarField, detection: DetectionMatrix, candidates=None, K: int = 1) -> Placement:
    """Repeatedly add the candidate with the largest drop in expected misses.

    ``candidates`` indexes rows of ``detection`` (default: all rows). Ties go
    to the lowest candidate index.
    """
    cand = _candidate_list(detection, candidates)
    if K < 0 or K > len(cand):
        raise ValueError(f"budget K={K} must lie in [0, {len(cand)}]")
    order = np.argsort(cand, kind="stable")
    cand_sorted = np.asarray(cand)[order]
    pt = detection.p_tilde[cand_sorted]
    w = cell_weights(lam)
    residual = np.ones(pt.shape[1])
    available = np.ones(len(cand_sorted), dtype=bool)
    chosen, gains = [], []
    for _ in range(K):
        # gain of j = sum_g w_g r_g p_jg
        g = pt @ (w * residual)
        g[~available] = -np.inf
        j = int(np.argmax(g))
        chosen.append(int(cand_sorted[j]))
        gains.append(float(g[j]))
        available[j] = False
        residual = residual * (1.0 - pt[j])
    return Placement(tuple(chosen), K, tuple(gains))


def brute_force_place(lam: ScalarField, detection: DetectionMatrix, candidates=None, K: int = 1) -> Placement:
    """Exact coverage maximizer over all ``K``-subsets; ties go to the lexicographically first."""
    cand = sorted(_candidate_list(detection, candidates))
    if K < 0 or K > len(cand):
        raise ValueError(f"budget K={K} must lie in [0, {len(cand)}]")
    n_subsets = math.comb(len(cand), K)
    if n_subsets > MAX_SUBSETS:
        raise ValueError(f"{n_subsets} subsets exceed the enumeration guard of {MAX_SUBSETS}")
    w = cell_weights(lam)
    miss = 1.0 - detection.p_tilde
    best, best_cov = (), -np.inf
    for subset in itertools.combinations(cand, K):
        cov = float(w @ (1.0 - np.prod(miss[list(subset)], axis=0))) if subset else 0.0
        if cov > best_cov:
            best, best_cov = subset, cov
    return Placement(tuple(best), K)


def random_place(candidates, K: int, seed: SeedLike) -> Placement:
    """Uniform ``K``-subset of the candidates, without replacement."""
    cand = list(range(candidates)) if isinstance(candidates, (int, np.integer)) else [int(c) for c in candidates]
    if K < 0 or K > len(cand):
        raise ValueError(f"budget K={K} must lie in [0, {len(cand)}]")
    picks = make_rng(seed).choice(len(cand), size=K, replace=False)
    return Placement(tuple(cand[int(i)] for i in picks), K)


def coverage_bound(Lambda: float, U_bar_ref: float) -> float:
    return math.exp(-Lambda / E - GREEDY_RATIO * U_bar_ref)


def approx_bound(U_bar_ref: float) -> float:
    return GREEDY_RATIO * math.exp(-U_bar_ref)


def dominance_threshold() -> float:
    """Coverage below which the coverage-based bound beats the approximate one."""
    return -E * math.log(GREEDY_RATIO)


def switching_threshold() -> float:
    """Greedy coverage below which ``nu(greedy) > (1 - 1/e) nu(optimal)`` is certified."""
    return -(E - 1.0) * math.log(GREEDY_RATIO)


def switching_gap(U_greedy: float, coverage_greedy: float) -> float:
    """``exp(-U_g) - (1 - 1/e) exp(-U_opt_min)`` for the smallest optimal misses greedy allows.

    Greedy coverage pins ``C(opt) <= C_g / (1 - 1/e)``, hence
    ``U(opt) >= U_g - C_g / (e - 1)``. The gap is positive exactly when
    ``C_g`` is below :func:`switching_threshold`.
    """
    return math.exp(-U_greedy) - GREEDY_RATIO * math.exp(-U_greedy + coverage_greedy / (E - 1.0))


# -- Monte Carlo ------------------------------------------------------------

Sampler = Callable[[np.random.Generator], ScalarField]


class Realization(NamedTuple):
    lam: ScalarField
    omega: ScalarField


def draw_realizations(lam_sampler: Sampler, omega_sampler: Sampler, n: int, seed: SeedLike) -> list[Realization]:
    """Joint ``(lambda, omega)`` draws; realization ``r`` depends only on ``(seed, r)``.

    Reusing the seed across policies gives common random numbers.
    """
    out = []
    for r in range(n):
        ss = child_seed(seed, r)
        lam = lam_sampler(make_rng(child_seed(ss, 0)))
        omega = omega_sampler(make_rng(child_seed(ss, 1)))
        out.append(Realization(lam, omega))
    return out


def realized_misses(
    realizations: Sequence[Realization],
    sensors: Sequence[Sensor],
    placement,
    params: AvailabilityParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Misses ``U_r`` and total mass ``Lambda_r`` per realization, with false-alarm-aware truth."""
    idx = _indices(placement)
    loc = np.array([sensors[i].location for i in idx], dtype=float)
    theta = np.array([sensors[i].theta for i in idx], dtype=float)
    U = np.empty(len(realizations))
    Lam = np.empty(len(realizations))
    for r, real in enumerate(realizations):
        w = cell_weights(real.lam)
        Lam[r] = w.sum()
        if not idx:
            U[r] = Lam[r]
            continue
        p, alpha = detection_layers(real.lam.grid.cell_s(), real.omega.values, loc, theta, params)
        U[r] = w @ np.prod(1.0 - alpha * p, axis=0)
    return U, Lam


def void_estimate(U: np.ndarray) -> tuple[float, float]:
    """Mean of ``exp(-U_r)`` and its standard error."""
    v = np.exp(-np.asarray(U, dtype=float))
    stderr = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), stderr


def void_probability_mc(
    lam_sampler: Sampler,
    omega_sampler: Sampler,
    sensors: Sequence[Sensor],
    placement,
    n_realizations: int,
    seed: SeedLike,
    params: AvailabilityParams,
) -> tuple[float, float]:
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    reals = draw_realizations(lam_sampler, omega_sampler, n_realizations, seed)
    U, _ = realized_misses(reals, sensors, placement, params)
    return void_estimate(U)


# -- certificates -------------------------------------------------------------


@dataclass
class MonteCarloConfig:
    lam_sampler: Sampler
    omega_sampler: Sampler
    params: AvailabilityParams
    n_realizations: int = 200
    seed: SeedLike = 0
    realizations: list | None = field(default=None, repr=False)

    def draws(self) -> list[Realization]:
        if self.realizations is None:
            self.realizations = draw_realizations(self.lam_sampler, self.omega_sampler, self.n_realizations, self.seed)
        return self.realizations


@dataclass
class CertificateReport:
    K: int
    placement: list[int]
    U_bar: float
    coverage: float
    Lambda: float
    nu_mc: float
    nu_stderr: float
    jensen_bound: float
    coverage_bound: float
    approx_bound: float
    tau: float
    tau_prime: float
    dominance_flag: bool
    switching_flag: bool
    planning_U_bar: float | None
    n_realizations: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def certify(
    lam: ScalarField,
    detection: DetectionMatrix | None,
    candidates: Sequence[Sensor] | None,
    K: int,
    mc: MonteCarloConfig | None = None,
    placement: Placement | None = None,
) -> CertificateReport:
    """Greedy placement on the planning inputs plus every bound evaluated for it.

    With ``mc`` set, ``Ubar`` and ``Lambda`` are Monte Carlo means over the
    same realizations used for the void estimate, so the Jensen relation
    holds exactly on the sample. Without it the planning inputs are treated
    as deterministic truth. A precomputed ``placement`` may replace the
    greedy run, in which case ``detection`` may be ``None``.
    """
    if placement is None:
        if detection is None:
            raise ValueError("need a detection matrix or a placement")
        placement = greedy_place(lam, detection, None, K)
    planning_U = None if detection is None else expected_undetected(lam, detection, placement)
    if mc is None:
        if planning_U is None:
            raise ValueError("deterministic evaluation needs the detection matrix")
        Lam = float(cell_weights(lam).sum())
        U_bar = planning_U
        nu, se, n = math.exp(-U_bar), 0.0, 1
    else:
        if candidates is None:
            raise ValueError("Monte Carlo evaluation needs the candidate sensors")
        U, Lam_r = realized_misses(mc.draws(), candidates, placement, mc.params)
        nu, se = void_estimate(U)
        U_bar, Lam, n = float(U.mean()), float(Lam_r.mean()), U.size
    cov = Lam - U_bar
    tau, tau_p = dominance_threshold(), switching_threshold()
    return CertificateReport(
        K=K,
        placement=list(placement.indices),
        U_bar=U_bar,
        coverage=cov,
        Lambda=Lam,
        nu_mc=nu,
        nu_stderr=se,
        jensen_bound=math.exp(-U_bar),
        coverage_bound=coverage_bound(Lam, U_bar),
        approx_bound=approx_bound(U_bar),
        tau=tau,
        tau_prime=tau_p,
        dominance_flag=bool(cov < tau),
        switching_flag=bool(cov < tau_p),
        planning_U_bar=planning_U,
        n_realizations=n,
    )
