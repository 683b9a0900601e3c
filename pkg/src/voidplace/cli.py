"""``voidplace`` command line.

Each subcommand reads a JSON config (see :mod:`voidplace.config`), runs one
experiment, and writes plot-ready CSV/JSON plus ``manifest.json`` into the
output directory. Exit codes: 0 success, 2 config error, 3 data error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import math
import os
import platform
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .fields import (
    SeparableKernel,
    SquashParams,
    sample_gp,
    sample_lgcp_intensity,
    save_field_csv,
    save_intensity_csv,
    load_intensity_csv,
    squash,
    total_mass,
)
from .filtering import benefit_sweep, margin_map
from .grid import ScalarField, SpaceTimeGrid, make_grid
from .ingest import SegmentProjection, parse_ais_csv, perturbation_samples, project_to_segment, smooth_intensity
from .placement import MonteCarloConfig, certify, random_place, realized_misses
from .rng import child_seed, make_rng
from .robustness import loglog_slope, stability_experiment
from .scenario import POLICIES, SEED_RANDOM, Scenario
from .sensing import AvailabilityParams, Sensor

log = logging.getLogger("voidplace")

EXIT_CONFIG = 2
EXIT_DATA = 3

# children of the master seed that are not owned by a Scenario
SEED_ENV = 0
SEED_BASELINE = 10
SEED_SAMPLES = 11
SEED_SCATTER = 12
SEED_SWEEP = 13
SEED_ROBUST = 14


class DataError(RuntimeError):
    pass


# -- output helpers -----------------------------------------------------------


class Output:
    """Writes files atomically into one directory and records them for the manifest."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.warnings: list[str] = []

    @contextlib.contextmanager
    def path(self, name: str):
        target = self.root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        os.close(fd)
        try:
            yield Path(tmp)
            os.replace(tmp, target)
        except BaseException:
            with contextlib.suppress(OSError):
                os.unlink(tmp)
            raise
        self.files.append(name)

    def csv(self, name: str, header, rows) -> None:
        with self.path(name) as tmp, open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])

    def json(self, name: str, obj) -> None:
        with self.path(name) as tmp:
            tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def warn(self, message: str) -> None:
        log.warning(message)
        self.warnings.append(message)

    def manifest(self, command: str, cfg: dict) -> None:
        self.json(
            "manifest.json",
            {
                "command": command,
                "config": cfg,
                "seed": cfg["seed"],
                "files": sorted(self.files),
                "warnings": self.warnings,
                "versions": {
                    "voidplace": __version__,
                    "numpy": np.__version__,
                    "python": platform.python_version(),
                },
            },
        )


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# -- building blocks from config ----------------------------------------------


def _checked(build):
    try:
        return build()
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def build_grid(cfg) -> SpaceTimeGrid:
    g = cfg["grid"]
    return _checked(lambda: make_grid(g["s_min"], g["s_max"], g["t_min"], g["t_max"], g["n_s"], g["n_t"]))


def env_kernel(cfg) -> SeparableKernel:
    e = cfg["environment"]
    return _checked(lambda: SeparableKernel(float(e["sigma"]), float(e["ell_s"]), float(e["ell_t"])))


def target_kernel(cfg) -> SeparableKernel:
    t = cfg["target"]
    return _checked(lambda: SeparableKernel(float(t["sigma"]), float(t["ell_s"]), float(t["ell_t"])))


def availability_params(cfg) -> AvailabilityParams:
    s = cfg["sensing"]
    return _checked(lambda: AvailabilityParams(float(s["beta"]), float(s["xi"])))


def squash_params(cfg) -> SquashParams:
    return _checked(lambda: SquashParams(float(cfg["environment"]["beta_omega"])))


def _ais_intensity(cfg, grid: SpaceTimeGrid, out: Output | None) -> ScalarField:
    a = cfg["ais"]
    if not a["path"]:
        raise ConfigError("target.source is 'ais' but ais.path is not set")
    projection = _checked(
        lambda: SegmentProjection(tuple(a["start"]), tuple(a["end"]), float(a["corridor_km"]), float(a["length_km"]))
    )
    window = None
    if a["window"] is not None:
        window = _checked(
            lambda: tuple(datetime.fromisoformat(w).replace(tzinfo=timezone.utc) for w in a["window"])
        )
    try:
        records, skipped = parse_ais_csv(a["path"])
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read AIS file: {exc}") from exc
    if skipped and out is not None:
        out.warn(f"skipped {skipped} malformed AIS rows")
    points = project_to_segment(records, projection, window, bool(a["fold_daily"]), a["event_bin_hours"])
    if not points and out is not None:
        out.warn("no AIS points fell inside the corridor; intensity is identically zero")
    return _checked(lambda: smooth_intensity(points, grid, float(a["bandwidth_s"]), float(a["bandwidth_t"])))


def baseline_intensity(cfg, grid: SpaceTimeGrid, out: Output | None = None) -> ScalarField:
    t = cfg["target"]
    source = t["source"]
    if source == "synthetic":
        return sample_lgcp_intensity(grid, target_kernel(cfg), float(t["log_mean"]), child_seed(cfg["seed"], SEED_BASELINE))
    if source == "csv":
        if not t["intensity_csv"]:
            raise ConfigError("target.source is 'csv' but target.intensity_csv is not set")
        try:
            return load_intensity_csv(t["intensity_csv"], grid)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load intensity: {exc}") from exc
    if source == "ais":
        return _ais_intensity(cfg, grid, out)
    raise ConfigError(f"target.source must be synthetic, csv or ais, got {source!r}")


def build_scenario(cfg, out: Output | None = None) -> Scenario:
    grid = build_grid(cfg)
    lam = baseline_intensity(cfg, grid, out)
    p = cfg["placement"]
    return _checked(
        lambda: Scenario(
            lam=lam,
            env_kernel=env_kernel(cfg),
            squash=squash_params(cfg),
            availability=availability_params(cfg),
            theta=float(cfg["sensing"]["theta"]),
            target_kernel=target_kernel(cfg) if cfg["target"]["perturb"] else None,
            planning_omega=p["planning_omega"],
            n_planning_draws=int(p["n_planning_draws"]),
            seed=int(cfg["seed"]),
        )
    )


def _k_values(values, n_candidates: int) -> list[int]:
    ks = [int(k) for k in values]
    if any(k < 0 or k > n_candidates for k in ks):
        raise ConfigError(f"K values must lie in [0, {n_candidates}]")
    return ks


# -- commands -------------------------------------------------------------------


def cmd_simulate_env(cfg, out: Output) -> None:
    grid = build_grid(cfg)
    kernel = env_kernel(cfg)
    z = sample_gp(grid, kernel, float(cfg["environment"]["mean"]), child_seed(cfg["seed"], SEED_ENV))
    omega = squash(z, squash_params(cfg))
    for name, field_, col in (("Z.csv", z, "z"), ("omega.csv", omega, "omega")):
        with out.path(name) as tmp:
            save_field_csv(tmp, field_, col)
    out.json(
        "summary.json",
        {"n_cells": grid.n_cells, "omega_min": float(omega.values.min()), "omega_max": float(omega.values.max()),
         "omega_mean": float(omega.values.mean())},
    )


def cmd_fit_intensity(cfg, out: Output) -> None:
    grid = build_grid(cfg)
    lam = baseline_intensity(cfg, grid, out)
    with out.path("lambda.csv") as tmp:
        save_intensity_csv(tmp, lam)
    M = int(cfg["target"]["M"])
    samples = _checked(lambda: perturbation_samples(lam, target_kernel(cfg), M, child_seed(cfg["seed"], SEED_SAMPLES)))
    for k, sample in enumerate(samples):
        with out.path(f"samples/lambda_sample_{k:02d}.csv") as tmp:
            save_intensity_csv(tmp, sample)
    out.json("summary.json", {"Lambda": total_mass(lam), "M": M, "source": cfg["target"]["source"]})


def cmd_place(cfg, out: Output) -> None:
    sc = build_scenario(cfg, out)
    p = cfg["placement"]
    sensors = sc.candidates
    ks = _k_values(p["K_values"], len(sensors))
    policies = list(p["policies"])
    unknown = set(policies) - set(POLICIES)
    if unknown:
        raise ConfigError(f"unknown policies {sorted(unknown)}")
    n = int(p["n_realizations"])
    if n < 1:
        raise ConfigError("placement.n_realizations must be positive")
    reals = sc.realizations(n)
    rows = []
    for policy in policies:
        if policy != "random" and ks:
            sc.plan(policy, max(ks))
        for K in ks:
            if policy == "random":
                pl = random_place(len(sensors), K, child_seed(child_seed(sc.seed, SEED_RANDOM), K))
            else:
                pl = sc.plan(policy, K)
            with out.path(f"placements/{policy}_K{K}.csv") as tmp:
                pl.save_csv(tmp, sensors)
            U, _ = realized_misses(reals, sensors, pl, sc.availability)
            v = np.exp(-U)
            rows.append((policy, K, float(v.mean()), float(v.std(ddof=1)) if n > 1 else 0.0))
    out.csv("void_by_K.csv", ["policy", "K", "void_mean", "void_std"], rows)


def cmd_bounds(cfg, out: Output) -> None:
    sc = build_scenario(cfg, out)
    b = cfg["bounds"]
    sensors = sc.candidates
    ks = _k_values(b["K_values"], len(sensors))
    n = int(b["n_realizations"])
    if n < 1:
        raise ConfigError("bounds.n_realizations must be positive")
    mc = MonteCarloConfig(sc.lam_sampler, sc.omega_sampler, sc.availability, n, realizations=sc.realizations(n))
    if ks:
        sc.plan("fa_aware", max(ks))
    rows = []
    for K in ks:
        pl = sc.plan("fa_aware", K)
        rep = certify(sc.lam, None, sensors, K, mc, placement=pl)
        rep.planning_U_bar = sc.planning_misses("fa_aware", pl)
        out.json(f"certificates/K{K}.json", rep.to_dict())
        rows.append(
            (K, rep.nu_mc, rep.jensen_bound, rep.coverage_bound, rep.approx_bound, rep.coverage, rep.tau,
             rep.tau_prime, rep.switching_flag)
        )
    out.csv(
        "bounds.csv",
        ["K", "void_mc", "jensen", "coverage_bound", "approx_bound", "coverage", "tau", "tau_prime", "switch_flag"],
        rows,
    )


def cmd_margin(cfg, out: Output) -> None:
    sc = build_scenario(cfg, out)
    m = cfg["margin"]
    theta = float(m["theta"])
    grid = sc.grid
    sensor = Sensor(sc.representative_sensor().location, theta)
    omega = sc.representative_omega()
    diag = _checked(lambda: margin_map(grid, sensor, omega, sc.availability, theta))
    with out.path("margin_map.csv") as tmp:
        diag.save_csv(tmp)

    n_scatter = min(int(m["scatter_cells"]), grid.n_cells)
    cells = np.sort(make_rng(child_seed(cfg["seed"], SEED_SCATTER)).choice(grid.n_cells, n_scatter, replace=False))
    out.csv(
        "margin_scatter.csv",
        ["s_index", "t_index", "lhs", "rhs", "margin"],
        (
            (*divmod(int(g), grid.n_t), diag.lhs_field.values[g], diag.rhs_field.values[g], diag.margin_field.values[g])
            for g in cells
        ),
    )
    counts, edges = np.histogram(diag.margin_field.values, bins=int(m["histogram_bins"]))
    out.csv("margin_histogram.csv", ["bin_left", "bin_right", "count"], zip(edges[:-1], edges[1:], counts))

    sweep_sc = dataclasses.replace(sc, theta=theta, _cache={})
    rows = benefit_sweep(
        sweep_sc,
        int(m["sweep_K"]),
        [float(b) for b in m["beta_list"]],
        child_seed(cfg["seed"], SEED_SWEEP),
        int(m["sweep_realizations"]),
    )
    out.csv("benefit_sweep.csv", ["beta", "positive_fraction", "gain", "stderr"],
            ((r.beta, r.positive_fraction, r.gain, r.stderr) for r in rows))
    out.json(
        "margin_summary.json",
        {
            "theta": theta,
            "sensor_location_km": sensor.location,
            "positive_fraction": diag.positive_fraction,
            "margin_min": float(diag.margin_field.values.min()),
            "margin_max": float(diag.margin_field.values.max()),
        },
    )


def robustness_setup(cfg):
    """Sub-grid, intensity, environment and candidates of the short-window study."""
    r = cfg["robustness"]
    grid = _checked(lambda: make_grid(r["s_min"], r["s_max"], r["t_min"], r["t_max"], r["n_s"], r["n_t"]))
    base = child_seed(cfg["seed"], SEED_ROBUST)
    lam = sample_lgcp_intensity(grid, target_kernel(cfg), 0.0, child_seed(base, 0))
    target = float(r["target_mass"])
    if not target > 0:
        raise ConfigError("robustness.target_mass must be positive")
    lam = ScalarField(grid, lam.values * target / total_mass(lam))
    z = sample_gp(grid, env_kernel(cfg), float(cfg["environment"]["mean"]), child_seed(base, 1))
    omega = squash(z, squash_params(cfg))
    m = int(r["m"])
    if m < 1:
        raise ConfigError("robustness.m must be positive")
    width = (grid.s_max - grid.s_min) / m
    theta = float(cfg["sensing"]["theta"])
    sensors = _checked(lambda: [Sensor(grid.s_min + (j + 0.5) * width, theta) for j in range(m)])
    return grid, lam, omega, sensors, child_seed(base, 2)


def cmd_robustness(cfg, out: Output) -> None:
    r = cfg["robustness"]
    grid, lam, omega, sensors, seed = robustness_setup(cfg)
    K = int(r["K"])
    if not 1 <= K <= len(sensors):
        raise ConfigError(f"robustness.K must lie in [1, {len(sensors)}]")
    table = _checked(
        lambda: stability_experiment(
            lam, omega, sensors, K, [int(n) for n in r["N_list"]], float(r["delta"]), int(r["trials"]), seed,
            availability_params(cfg),
        )
    )
    with out.path("robustness.csv") as tmp:
        table.save_csv(tmp)
    out.csv("concentration.csv", ["N", "trial", "eps_N", "max_error", "event"],
            ((x.N, x.trial, x.eps_N, x.max_error, x.event) for x in table.rows))
    out.csv("propagation.csv", ["N", "trial", "U_deviation", "C_K_eps", "C_K_max_error"],
            ((x.N, x.trial, x.U_deviation, x.C_K_eps, x.C_K_max_error) for x in table.rows))
    out.csv("stability.csv", ["N", "trial", "realized_void", "stability_bound", "event"],
            ((x.N, x.trial, x.realized_void, x.stability_bound, x.event) for x in table.rows))
    summary = table.summary()
    Ns = [s.N for s in summary]
    out.json(
        "robustness_summary.json",
        {
            "m": len(sensors),
            "L": grid.n_cells,
            "K": K,
            "Lambda": table.Lambda,
            "C_K": table.C_K,
            "U_star_ref": table.U_star_ref,
            "oracle_placement": list(table.oracle.indices),
            "per_N": [s.__dict__ for s in summary],
            "max_error_slope": loglog_slope(Ns, [s.max_uniform_error for s in summary]) if len(Ns) > 1 else None,
            "U_deviation_slope": loglog_slope(Ns, [s.U_deviation for s in summary]) if len(Ns) > 1 else None,
        },
    )


COMMANDS = {
    "simulate-env": cmd_simulate_env,
    "fit-intensity": cmd_fit_intensity,
    "place": cmd_place,
    "bounds": cmd_bounds,
    "margin": cmd_margin,
    "robustness": cmd_robustness,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voidplace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file (defaults apply to unset keys)")
        p.add_argument("--seed", type=int, help="master seed, overrides config 'seed'")
        p.add_argument("--out", type=Path, help="output directory, overrides config 'out'")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key, e.g. placement.n_realizations=50")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        if args.out is not None:
            cfg["out"] = str(args.out)
        if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        out = Output(Path(cfg["out"]))
        COMMANDS[args.command](cfg, out)
        out.manifest(args.command, cfg)
    except ConfigError as exc:
        print(f"voidplace: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"voidplace: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
