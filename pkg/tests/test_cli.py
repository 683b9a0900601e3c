import csv
import json
import math

import numpy as np
import pytest

from voidplace.cli import build_scenario, run
from voidplace.config import ConfigError, load_config, parse_override

SMALL = [
    "grid.n_s=40",
    "grid.n_t=8",
    "target.log_mean=-2.5",
    "target.M=3",
    "placement.K_values=[0,1,2,3]",
    "placement.n_realizations=12",
    "placement.n_planning_draws=8",
    "bounds.K_values=[1,2,3]",
    "bounds.n_realizations=20",
    "margin.scatter_cells=50",
    "margin.beta_list=[1e-9,5.0]",
    "margin.sweep_K=2",
    "margin.sweep_realizations=10",
    "robustness.n_s=24",
    "robustness.m=4",
    "robustness.K=2",
    "robustness.N_list=[50,200]",
    "robustness.trials=5",
]


def invoke(command, out, *extra, small=True):
    args = [command, "--out", str(out)]
    for s in (SMALL if small else []) + list(extra):
        args += ["--set", s]
    return run(args)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg["environment"] == {"sigma": 0.8, "ell_s": 0.5, "ell_t": 1.0, "beta_omega": 1.5, "mean": 0.0}
        assert cfg["sensing"] == {"theta": 1.2, "beta": 5.0, "xi": 0.2}
        assert cfg["grid"]["n_s"] * cfg["grid"]["n_t"] == 9600

    def test_file_and_override(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"seed": 4, "sensing": {"beta": 2.0}}))
        cfg = load_config(p, ["sensing.theta=1.5", "placement.policies=[\"nf\"]"])
        assert cfg["seed"] == 4 and cfg["sensing"] == {"theta": 1.5, "beta": 2.0, "xi": 0.2}
        assert cfg["placement"]["policies"] == ["nf"]

    def test_override_parsing(self):
        assert parse_override("a.b=3") == (["a", "b"], 3)
        assert parse_override("a=text") == (["a"], "text")
        with pytest.raises(ConfigError):
            parse_override("novalue")

    @pytest.mark.parametrize("bad", [{"nope": 1}, {"grid": {"n_q": 2}}, {"grid": 3}])
    def test_unknown_keys(self, tmp_path, bad):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_config(p)


class TestExitCodes:
    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        assert run(["simulate-env", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_invalid_value(self, tmp_path):
        assert invoke("simulate-env", tmp_path / "o", "environment.sigma=-1") == 2
        assert invoke("place", tmp_path / "o", "placement.policies=[\"greedy\"]") == 2
        assert invoke("place", tmp_path / "o", "placement.K_values=[500]") == 2

    def test_negative_seed(self, tmp_path):
        assert run(["simulate-env", "--seed", "-1", "--out", str(tmp_path)]) == 2

    def test_unreadable_intensity(self, tmp_path):
        assert invoke("fit-intensity", tmp_path / "o", "target.source=\"csv\"", f"target.intensity_csv=\"{tmp_path}/none.csv\"") == 3

    def test_unreadable_ais(self, tmp_path):
        assert invoke("fit-intensity", tmp_path / "o", "target.source=\"ais\"", f"ais.path=\"{tmp_path}/none.csv\"") == 3

    def test_missing_ais_path(self, tmp_path):
        assert invoke("fit-intensity", tmp_path / "o", "target.source=\"ais\"") == 2


class TestSimulateEnv:
    def test_default_config(self, tmp_path):
        assert invoke("simulate-env", tmp_path, small=False) == 0
        rows = read_csv(tmp_path / "omega.csv")
        assert len(rows) == 9600
        w = np.array([float(r["omega"]) for r in rows])
        assert np.all((w >= 0) & (w <= 1)) and w.max() > 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "simulate-env"
        assert sorted(manifest["files"]) == ["Z.csv", "omega.csv", "summary.json"]
        assert {"numpy", "python", "voidplace"} <= set(manifest["versions"])

    def test_degenerate_variance(self, tmp_path):
        assert invoke("simulate-env", tmp_path, "environment.sigma=1e-8") == 0
        w = np.array([float(r["omega"]) for r in read_csv(tmp_path / "omega.csv")])
        assert np.all(w < 1e-6)

    def test_matches_scenario_representative(self, tmp_path):
        assert invoke("simulate-env", tmp_path) == 0
        w = np.array([float(r["omega"]) for r in read_csv(tmp_path / "omega.csv")])
        sc = build_scenario(load_config(overrides=SMALL))
        assert np.array_equal(w, sc.representative_omega().values)


class TestFitIntensity:
    def test_synthetic(self, tmp_path):
        assert invoke("fit-intensity", tmp_path, "target.log_mean=0", "target.M=30") == 0
        assert len(read_csv(tmp_path / "lambda.csv")) == 320
        assert len(list((tmp_path / "samples").glob("lambda_sample_*.csv"))) == 30

    def test_csv_round_trip(self, tmp_path):
        assert invoke("fit-intensity", tmp_path / "a") == 0
        src = tmp_path / "a" / "lambda.csv"
        assert invoke("fit-intensity", tmp_path / "b", "target.source=\"csv\"", f"target.intensity_csv=\"{src}\"") == 0
        assert (tmp_path / "b" / "lambda.csv").read_bytes() == src.read_bytes()

    def test_ais_without_corridor_points(self, tmp_path):
        ais = tmp_path / "ais.csv"
        ais.write_text("MMSI,BaseDateTime,LAT,LON\n1,2023-01-01T00:00:00,40.0,-70.0\n2,2023-01-01T00:00:00,oops,-70.0\n")
        assert invoke("fit-intensity", tmp_path / "o", "target.source=\"ais\"", f"ais.path=\"{ais}\"") == 0
        lam = np.array([float(r["lambda"]) for r in read_csv(tmp_path / "o" / "lambda.csv")])
        assert np.all(lam == 0)
        warnings = json.loads((tmp_path / "o" / "manifest.json").read_text())["warnings"]
        assert any("corridor" in w for w in warnings)
        assert any("malformed" in w for w in warnings)

    def test_ais_points(self, tmp_path):
        ais = tmp_path / "ais.csv"
        lines = ["MMSI,BaseDateTime,LAT,LON"]
        for k in range(20):
            lines.append(f"{k},2023-01-01T{k % 24:02d}:10:00,32.1465,{-80.835 + 0.024 * k / 20:.5f}")
        ais.write_text("\n".join(lines) + "\n")
        assert invoke("fit-intensity", tmp_path / "o", "target.source=\"ais\"", f"ais.path=\"{ais}\"") == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["Lambda"] == pytest.approx(20, rel=1e-6)


class TestPlace:
    def test_outputs(self, tmp_path):
        assert invoke("place", tmp_path) == 0
        rows = read_csv(tmp_path / "void_by_K.csv")
        assert list(rows[0]) == ["policy", "K", "void_mean", "void_std"]
        assert {r["policy"] for r in rows} == {"nf", "nfilt", "fa_aware", "random"}
        k0 = {float(r["void_mean"]) for r in rows if r["K"] == "0"}
        assert len(k0) == 1
        pl = read_csv(tmp_path / "placements" / "fa_aware_K3.csv")
        assert [r["rank"] for r in pl] == ["0", "1", "2"]

    def test_random_reproducible(self, tmp_path):
        invoke("place", tmp_path / "a", "placement.policies=[\"random\"]")
        invoke("place", tmp_path / "b", "placement.policies=[\"random\"]")
        assert (tmp_path / "a" / "void_by_K.csv").read_bytes() == (tmp_path / "b" / "void_by_K.csv").read_bytes()


class TestBounds:
    def test_rows_valid(self, tmp_path):
        assert invoke("bounds", tmp_path) == 0
        for r in read_csv(tmp_path / "bounds.csv"):
            cert = json.loads((tmp_path / "certificates" / f"K{r['K']}.json").read_text())
            nu, se = cert["nu_mc"], cert["nu_stderr"]
            assert nu + 3 * se >= max(cert["coverage_bound"], cert["approx_bound"])
            assert nu >= cert["jensen_bound"] - 3 * se
            cov = float(r["coverage"])
            if cov < cert["tau_prime"]:
                assert cert["coverage_bound"] > (1 - 1 / math.e) * cert["jensen_bound"]
            if cov > cert["tau"]:
                assert cert["approx_bound"] >= cert["coverage_bound"]
            assert r["switch_flag"] == str(int(cov < cert["tau_prime"]))


class TestMargin:
    def test_outputs(self, tmp_path):
        assert invoke("margin", tmp_path) == 0
        assert len(read_csv(tmp_path / "margin_map.csv")) == 320
        assert len(read_csv(tmp_path / "margin_scatter.csv")) == 50
        hist = read_csv(tmp_path / "margin_histogram.csv")
        assert sum(int(h["count"]) for h in hist) == 320
        sweep = read_csv(tmp_path / "benefit_sweep.csv")
        assert [float(r["beta"]) for r in sweep] == [1e-9, 5.0]
        m = np.array([float(r["margin"]) for r in read_csv(tmp_path / "margin_map.csv")])
        assert m.min() < 0 < m.max()

    def test_theta_one(self, tmp_path):
        assert invoke("margin", tmp_path, "margin.theta=1.0") == 0
        summary = json.loads((tmp_path / "margin_summary.json").read_text())
        # only the time column through the sensor has zero margin
        assert summary["positive_fraction"] == pytest.approx(1 - 1 / 40)
        assert summary["margin_min"] == 0.0


class TestRobustness:
    def test_outputs(self, tmp_path):
        assert invoke("robustness", tmp_path) == 0
        rows = read_csv(tmp_path / "robustness.csv")
        assert list(rows[0]) == ["N", "eps_N", "max_error", "U_deviation", "C_K_eps", "realized_void", "stability_bound", "trial"]
        assert len(rows) == 10
        for r in read_csv(tmp_path / "stability.csv"):
            if r["event"] == "1":
                assert float(r["realized_void"]) >= float(r["stability_bound"])
        summary = json.loads((tmp_path / "robustness_summary.json").read_text())
        assert summary["m"] == 4 and summary["L"] == 48


COMMANDS = ["simulate-env", "fit-intensity", "place", "bounds", "margin", "robustness"]


@pytest.mark.parametrize("command", COMMANDS)
def test_byte_identical_reruns(tmp_path, command):
    out = tmp_path / "o"
    assert invoke(command, out) == 0
    first = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    for p in out.rglob("*"):
        if p.is_file():
            p.unlink()
    assert invoke(command, out) == 0
    second = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    assert first == second
