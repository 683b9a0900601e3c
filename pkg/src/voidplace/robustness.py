"""Finite-sample robustness of greedy placement.

When effective detection probabilities are estimated from ``N`` Bernoulli
samples per sensor-cell pair, Hoeffding plus a union bound over ``m * L``
pairs gives a uniform error radius ``eps_N``. The product ``prod(1 - p)`` is
1-Lipschitz in l1, so misses move by at most ``K * Lambda * max_error``, and
the greedy coverage bound survives with an extra ``(2 - 1/e) K Lambda eps_N``
in the exponent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .grid import ScalarField
from .placement import E, GREEDY_RATIO, Placement, cell_weights, expected_undetected, greedy_place
from .rng import SeedLike, child_seed, make_rng
from .sensing import AvailabilityParams, DetectionMatrix, Sensor, build_detection_matrix

STABILITY_FACTOR = 2.0 - 1.0 / E

CSV_COLUMNS = ["N", "eps_N", "max_error", "U_deviation", "C_K_eps", "realized_void", "stability_bound", "trial"]


@dataclass(frozen=True)
class RobustnessConfig:
    N: int
    delta: float = 0.1
    K: int = 3
    trials: int = 200

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be at least 1, got {self.N}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.K < 1 or self.trials < 1:
            raise ValueError("K and trials must be positive")


def estimate_p_hat(detection: DetectionMatrix, N: int, seed: SeedLike) -> DetectionMatrix:
    """Replace each effective probability by the mean of ``N`` Bernoulli draws.

    Row ``i`` draws from child stream ``i`` of ``seed``; a binomial count
    over ``N`` is the sum of the ``N`` Bernoulli outcomes.
    """
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    pt = detection.p_tilde
    est = np.empty_like(pt)
    for i in range(pt.shape[0]):
        est[i] = make_rng(child_seed(seed, i)).binomial(N, pt[i]) / N
    return DetectionMatrix.from_effective(detection.grid, est)


def hoeffding_eps(N: int, m: int, L: int, delta: float) -> float:
    if N < 1 or m < 1 or L < 1:
        raise ValueError("N, m and L must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(math.log(2.0 * m * L / delta) / (2.0 * N))


def max_uniform_error(estimated: DetectionMatrix, truth: DetectionMatrix) -> float:
    return float(np.max(np.abs(estimated.p_tilde - truth.p_tilde)))


@dataclass(frozen=True)
class ConcentrationResult:
    eps_N: float
    max_errors: np.ndarray = field(repr=False)

    @property
    def violation_rate(self) -> float:
        return float(np.mean(self.max_errors > self.eps_N))


def concentration_trial(
    detection: DetectionMatrix, N: int, delta: float, trials: int, seed: SeedLike
) -> ConcentrationResult:
    """Max estimation error over ``trials`` independent re-estimations."""
    if trials < 1:
        raise ValueError("need at least one trial")
    m, L = detection.p_tilde.shape
    eps = hoeffding_eps(N, m, L, delta)
    errs = np.array(
        [max_uniform_error(estimate_p_hat(detection, N, child_seed(seed, k)), detection) for k in range(trials)]
    )
    return ConcentrationResult(eps, errs)


def c_k(lam: ScalarField, K: int) -> float:
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    return K * float(cell_weights(lam).sum())


@dataclass(frozen=True)
class PropagationReport:
    deviation: float
    max_error: float
    C_K: float
    lipschitz_bound: float
    holds: bool

    def against_eps(self, eps_N: float) -> float:
        return self.C_K * eps_N


def propagation_check(
    lam: ScalarField, detection: DetectionMatrix, estimated: DetectionMatrix, placement
) -> PropagationReport:
    """``|U_hat - U_bar|`` for a fixed placement against ``C_K * max_error``."""
    idx = list(placement.indices) if isinstance(placement, Placement) else [int(i) for i in placement]
    dev = abs(expected_undetected(lam, estimated, idx) - expected_undetected(lam, detection, idx))
    err = max_uniform_error(estimated, detection)
    ck = c_k(lam, max(len(idx), 1))
    bound = ck * err
    # round-off allowance on a sum of L terms
    return PropagationReport(dev, err, ck, bound, dev <= bound + 1e-12 * max(1.0, ck))


def stability_bound(Lambda: float, U_star_ref: float, C_K: float, eps_N: float) -> float:
    return math.exp(-Lambda / E - GREEDY_RATIO * U_star_ref - STABILITY_FACTOR * C_K * eps_N)


@dataclass(frozen=True)
class StabilityRow:
    N: int
    eps_N: float
    max_error: float
    U_deviation: float
    C_K_eps: float
    C_K_max_error: float
    realized_void: float
    stability_bound: float
    trial: int
    event: bool
    same_as_oracle: bool


@dataclass(frozen=True)
class RobustnessReport:
    """Trial-averaged robustness summary for one sample size."""

    N: int
    eps_N: float
    max_uniform_error: float
    C_K: float
    C_K_prime: float
    U_deviation: float
    stability_bound: float
    realized_void: float
    event_rate: float


@dataclass
class StabilityTable:
    rows: list[StabilityRow]
    C_K: float
    Lambda: float
    U_star_ref: float
    oracle: Placement

    def by_N(self) -> dict[int, list[StabilityRow]]:
        out: dict[int, list[StabilityRow]] = {}
        for r in self.rows:
            out.setdefault(r.N, []).append(r)
        return out

    def summary(self) -> list[RobustnessReport]:
        out = []
        for N, rows in self.by_N().items():
            out.append(
                RobustnessReport(
                    N=N,
                    eps_N=rows[0].eps_N,
                    max_uniform_error=float(np.mean([r.max_error for r in rows])),
                    C_K=self.C_K,
                    C_K_prime=STABILITY_FACTOR * self.C_K,
                    U_deviation=float(np.mean([r.U_deviation for r in rows])),
                    stability_bound=rows[0].stability_bound,
                    realized_void=float(np.mean([r.realized_void for r in rows])),
                    event_rate=float(np.mean([r.event for r in rows])),
                )
            )
        return out

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                d = asdict(r)
                writer.writerow([d[c] if isinstance(d[c], int) else repr(float(d[c])) for c in CSV_COLUMNS])


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def stability_experiment(
    lam: ScalarField,
    omega: ScalarField,
    candidates: Sequence[Sensor],
    K: int,
    N_list: Sequence[int],
    delta: float,
    trials: int,
    seed: SeedLike,
    params: AvailabilityParams,
) -> StabilityTable:
    """Greedy on estimated probabilities versus its finite-sample guarantee.

    The realized void of a placement is ``exp(-Ubar)`` under the true
    effective probabilities with the intensity held fixed. The bound uses
    ``Ubar`` of greedy on the truth, which upper-bounds the optimum's.
    """
    if not N_list:
        raise ValueError("N_list must be nonempty")
    truth = build_detection_matrix(lam.grid, candidates, omega, params)
    m, L = truth.p_tilde.shape
    oracle = greedy_place(lam, truth, None, K)
    U_star = expected_undetected(lam, truth, oracle)
    Lam = float(cell_weights(lam).sum())
    ck = c_k(lam, K)
    rows = []
    for n_idx, N in enumerate(N_list):
        eps = hoeffding_eps(N, m, L, delta)
        bound = stability_bound(Lam, U_star, ck, eps)
        for trial in range(trials):
            est = estimate_p_hat(truth, N, child_seed(child_seed(seed, n_idx), trial))
            prop = propagation_check(lam, truth, est, oracle)
            a_hat = greedy_place(lam, est, None, K)
            realized = math.exp(-expected_undetected(lam, truth, a_hat))
            rows.append(
                StabilityRow(
                    N=int(N),
                    eps_N=eps,
                    max_error=prop.max_error,
                    U_deviation=prop.deviation,
                    C_K_eps=ck * eps,
                    C_K_max_error=ck * prop.max_error,
                    realized_void=realized,
                    stability_bound=bound,
                    trial=trial,
                    event=prop.max_error <= eps,
                    same_as_oracle=a_hat.indices == oracle.indices,
                )
            )
    return StabilityTable(rows, ck, Lam, U_star, oracle)
