"""When does raising the filter setting help?

Writing ``p_tilde = alpha(chi) * p``, the log-derivative in ``theta`` splits
into a detection gain ``d_theta p / p`` and a false-alarm penalty
``-(alpha'/alpha) d_theta chi``. Filtering helps wherever the margin
``gain - penalty`` is nonnegative. All derivatives are closed forms for the
exponential-range detection model and rational availability.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .grid import ScalarField, SpaceTimeGrid
from .placement import cell_weights, realized_misses, void_estimate
from .sensing import AvailabilityParams, Sensor, availability, false_alarm_rate


def lhs_relative_detection_gain(s, sensor: Sensor, omega, theta=None):
    """``d_theta p / p = (s - a)^2 e^omega / theta^2``."""
    theta = sensor.theta if theta is None else theta
    d = np.asarray(s) - sensor.location
    return d * d * np.exp(omega) / (theta * theta)


def rhs_false_alarm_penalty(theta, omega, params: AvailabilityParams):
    """``-(alpha'/alpha) d_theta chi = beta d_theta chi / (1 + beta chi)``; negative for theta < 1."""
    dchi = 2.0 * omega * (theta - 1.0)
    chi = false_alarm_rate(omega, theta, params.xi)
    return params.beta * dchi / (1.0 + params.beta * chi)


def log_effective_detection(s, sensor: Sensor, omega, params: AvailabilityParams, theta=None):
    """``ln p_tilde``, used as the finite-difference target for the margin."""
    theta = sensor.theta if theta is None else theta
    d = np.asarray(s) - sensor.location
    chi = false_alarm_rate(omega, theta, params.xi)
    return -d * d * np.exp(omega) / theta + np.log(availability(chi, params.beta))


def _p_tilde_curvature(d2, omega, theta, params: AvailabilityParams):
    """Second ``theta``-derivative of ``p_tilde``."""
    beta = params.beta
    e_om = np.exp(omega)
    chi = false_alarm_rate(omega, theta, params.xi)
    dchi = 2.0 * omega * (theta - 1.0)
    ddchi = 2.0 * omega
    denom = 1.0 + beta * chi
    f1 = d2 * e_om / theta**2 - beta * dchi / denom
    f2 = -2.0 * d2 * e_om / theta**3 - beta * (ddchi * denom - beta * dchi * dchi) / denom**2
    p_tilde = np.exp(-d2 * e_om / theta) / denom
    return p_tilde * (f2 + f1 * f1)


@dataclass(frozen=True)
class MarginDiagnostics:
    lhs_field: ScalarField = field(repr=False)
    rhs_field: ScalarField = field(repr=False)
    margin_field: ScalarField = field(repr=False)
    positive_fraction: float

    def save_csv(self, path) -> None:
        grid = self.margin_field.grid
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["s_index", "t_index", "lhs", "rhs", "margin"])
            for g in range(grid.n_cells):
                i_s, i_t = divmod(g, grid.n_t)
                writer.writerow(
                    [
                        i_s,
                        i_t,
                        repr(float(self.lhs_field.values[g])),
                        repr(float(self.rhs_field.values[g])),
                        repr(float(self.margin_field.values[g])),
                    ]
                )


def margin_map(
    grid: SpaceTimeGrid,
    sensor: Sensor,
    omega_field: ScalarField,
    params: AvailabilityParams,
    theta: float | None = None,
) -> MarginDiagnostics:
    theta = sensor.theta if theta is None else theta
    omega = omega_field.values
    lhs = lhs_relative_detection_gain(grid.cell_s(), sensor, omega, theta)
    rhs = rhs_false_alarm_penalty(theta, omega, params)
    m = lhs - rhs
    return MarginDiagnostics(
        ScalarField(grid, lhs),
        ScalarField(grid, rhs),
        ScalarField(grid, m),
        float(np.mean(m > 0)),
    )


@dataclass(frozen=True)
class EffectCheck:
    """Outcome of nudging ``theta`` up by ``dtheta`` for a single sensor.

    Changes are ``value(theta + dtheta) - value(theta)``. ``slack`` is the
    largest per-cell second-order allowance ``dtheta^2 max|p_tilde''| / 2``
    (plus 1e-12) applied before calling a change a decrease.
    """

    premise_holds: bool
    min_margin: float
    worst_p_tilde_change: float
    U_change: float
    void_change: float
    p_tilde_ok: bool
    U_ok: bool
    void_ok: bool
    slack: float

    @property
    def skipped(self) -> bool:
        return not self.premise_holds

    @property
    def passed(self) -> bool:
        return self.premise_holds and self.p_tilde_ok and self.U_ok and self.void_ok


def filter_effect_check(
    lam: ScalarField,
    grid: SpaceTimeGrid,
    sensor: Sensor,
    omega_field: ScalarField,
    params: AvailabilityParams,
    theta: float | None = None,
    dtheta: float = 1e-4,
) -> EffectCheck:
    """Check that a nonnegative margin everywhere makes ``p_tilde``, misses and void move the right way.

    If the premise fails the monotonicity flags are still computed but the
    check counts as skipped.
    """
    if not dtheta > 0:
        raise ValueError("dtheta must be positive")
    theta = sensor.theta if theta is None else theta
    s = grid.cell_s()
    omega = omega_field.values
    d2 = (s - sensor.location) ** 2
    diag = margin_map(grid, sensor, omega_field, params, theta)
    pt0 = np.exp(log_effective_detection(s, sensor, omega, params, theta))
    pt1 = np.exp(log_effective_detection(s, sensor, omega, params, theta + dtheta))
    curv = np.max(
        np.abs([_p_tilde_curvature(d2, omega, th, params) for th in (theta, theta + 0.5 * dtheta, theta + dtheta)]),
        axis=0,
    )
    tol = 1e-12 + 0.5 * dtheta * dtheta * curv
    w = cell_weights(lam)
    U0 = float(w @ (1.0 - pt0))
    U1 = float(w @ (1.0 - pt1))
    U_tol = float(w @ tol) + 1e-12
    dp = pt1 - pt0
    v_change = math.exp(-U1) - math.exp(-U0)
    return EffectCheck(
        premise_holds=bool(np.all(diag.margin_field.values >= 0)),
        min_margin=float(diag.margin_field.values.min()),
        worst_p_tilde_change=float(dp.min()),
        U_change=U1 - U0,
        void_change=v_change,
        p_tilde_ok=bool(np.all(dp >= -tol)),
        U_ok=bool(U1 - U0 <= U_tol),
        void_ok=bool(v_change >= -math.exp(-U0) * U_tol),
        slack=float(tol.max()),
    )


@dataclass(frozen=True)
class SweepRow:
    beta: float
    positive_fraction: float
    gain: float
    stderr: float
    paired_stderr: float
    void_fa_aware: float
    void_raw: float


def benefit_sweep(scenario, K: int, beta_list: Sequence[float], seed, n_realizations: int = 200) -> list[SweepRow]:
    """Void-probability gain of planning on ``alpha * p`` instead of ``p``, per penalty ``beta``.

    Both placements are scored on the same realizations under the
    false-alarm-aware truth. ``stderr`` pools the two standard errors;
    ``paired_stderr`` is that of the per-realization differences.
    """
    if not beta_list:
        raise ValueError("beta_list must be nonempty")
    reals = scenario.realizations(n_realizations, seed)
    rep_omega = scenario.representative_omega()
    rep_sensor = scenario.representative_sensor()
    sensors = scenario.candidates
    rows = []
    for beta in beta_list:
        sc = scenario.with_availability(replace(scenario.availability, beta=float(beta)))
        fa = sc.plan("fa_aware", K)
        raw = sc.plan("nfilt", K)
        U_fa, _ = realized_misses(reals, sensors, fa, sc.availability)
        U_raw, _ = realized_misses(reals, sensors, raw, sc.availability)
        v_fa, se_fa = void_estimate(U_fa)
        v_raw, se_raw = void_estimate(U_raw)
        diff = np.exp(-U_fa) - np.exp(-U_raw)
        paired = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
        frac = margin_map(sc.grid, rep_sensor, rep_omega, sc.availability).positive_fraction
        rows.append(
            SweepRow(float(beta), frac, v_fa - v_raw, math.hypot(se_fa, se_raw), paired, v_fa, v_raw)
        )
    return rows
