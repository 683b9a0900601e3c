import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from voidplace.grid import ScalarField, make_grid
from voidplace.placement import Placement, coverage_bound, expected_undetected, greedy_place
from voidplace.robustness import (
    CSV_COLUMNS,
    RobustnessConfig,
    c_k,
    concentration_trial,
    estimate_p_hat,
    hoeffding_eps,
    loglog_slope,
    propagation_check,
    stability_bound,
    stability_experiment,
)
from voidplace.sensing import DetectionMatrix, Sensor

from conftest import DEFAULT_AVAIL, random_instance

unit_grid = make_grid(0, 1, 0, 1, 1, 1)


class TestEstimate:
    grid = make_grid(0, 1, 0, 1, 4, 2)

    def test_degenerate(self):
        pt = np.vstack([np.zeros(8), np.ones(8)])
        est = estimate_p_hat(DetectionMatrix.from_effective(self.grid, pt), 17, seed=0)
        assert np.array_equal(est.p_tilde, pt)

    def test_half_large_n(self):
        det = DetectionMatrix.from_effective(self.grid, np.full((3, 8), 0.5))
        est = estimate_p_hat(det, 10000, seed=1)
        assert np.all(np.abs(est.p_tilde - 0.5) < 5 * 0.005)

    def test_lattice_values_and_determinism(self):
        det = DetectionMatrix.from_effective(self.grid, np.random.default_rng(0).random((3, 8)))
        a = estimate_p_hat(det, 7, seed=4)
        assert np.allclose(a.p_tilde * 7, np.round(a.p_tilde * 7))
        assert np.array_equal(a.p_tilde, estimate_p_hat(det, 7, seed=4).p_tilde)
        assert not np.array_equal(a.p_tilde, estimate_p_hat(det, 7, seed=5).p_tilde)

    def test_unbiased(self):
        det = DetectionMatrix.from_effective(self.grid, np.full((1, 8), 0.3))
        means = np.mean([estimate_p_hat(det, 20, seed=k).p_tilde for k in range(2000)], axis=0)
        # std of the mean: sqrt(0.21 / 20 / 2000)
        assert np.all(np.abs(means - 0.3) < 5 * math.sqrt(0.21 / 40000))

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            estimate_p_hat(DetectionMatrix.from_effective(self.grid, np.zeros((1, 8))), 0, 0)


class TestHoeffding:
    def test_hand_value(self):
        expected = math.sqrt(math.log(960000) / 4000)
        assert hoeffding_eps(2000, 5, 9600, 0.1) == pytest.approx(expected, abs=1e-12)
        # the rounded 0.05865 quoted for this case is off in the fifth digit
        assert expected == pytest.approx(0.058683, abs=5e-7)

    @given(st.integers(1, 10**6), st.integers(1, 50), st.integers(1, 10**4), st.floats(0.001, 0.99))
    def test_scaling(self, N, m, L, delta):
        eps = hoeffding_eps(N, m, L, delta)
        assert eps > 0
        assert hoeffding_eps(4 * N, m, L, delta) == pytest.approx(eps / 2, rel=1e-12)
        assert hoeffding_eps(N, m, L, min(0.999, delta * 1.01)) < eps

    @pytest.mark.parametrize("delta", [0, 1, 1.5])
    def test_rejects_delta(self, delta):
        with pytest.raises(ValueError):
            hoeffding_eps(10, 1, 1, delta)


class TestConcentration:
    grid = make_grid(0, 1, 0, 1, 8, 2)

    def test_violation_rate(self):
        det = DetectionMatrix.from_effective(self.grid, np.random.default_rng(2).random((4, 16)))
        res = concentration_trial(det, 200, 0.1, 200, seed=3)
        assert res.violation_rate <= 0.1
        assert len(res.max_errors) == 200

    def test_huge_n(self):
        det = DetectionMatrix.from_effective(self.grid, np.random.default_rng(3).random((2, 16)))
        res = concentration_trial(det, 10**6, 0.1, 20, seed=4)
        assert np.all(res.max_errors < 0.005)

    def test_deterministic_matrix(self):
        pt = (np.random.default_rng(5).random((3, 16)) > 0.5).astype(float)
        res = concentration_trial(DetectionMatrix.from_effective(self.grid, pt), 50, 0.1, 10, seed=0)
        assert np.all(res.max_errors == 0)

    def test_config_validation(self):
        RobustnessConfig(N=10)
        with pytest.raises(ValueError):
            RobustnessConfig(N=0)
        with pytest.raises(ValueError):
            RobustnessConfig(N=10, delta=1.0)


class TestCK:
    def test_examples(self, full_grid):
        lam = ScalarField.constant(full_grid, 1.0)
        assert c_k(lam, 1) == pytest.approx(240.0)
        assert c_k(lam, 5) == pytest.approx(1200.0)
        assert c_k(ScalarField.constant(full_grid, 0.0), 3) == 0.0


class TestPropagation:
    def test_identical(self):
        lam, det = random_instance(np.random.default_rng(0))
        rep = propagation_check(lam, det, det, [0, 1, 2])
        assert rep.deviation == 0.0 and rep.holds

    def test_hand_case(self):
        lam = ScalarField.constant(unit_grid, 1.0)
        rep = propagation_check(
            lam, DetectionMatrix.from_effective(unit_grid, [[0.5]]), DetectionMatrix.from_effective(unit_grid, [[0.6]]), [0]
        )
        assert rep.deviation == pytest.approx(0.1)
        assert rep.C_K == 1.0
        assert rep.lipschitz_bound == pytest.approx(0.1)
        assert rep.holds
        assert rep.against_eps(0.1) == pytest.approx(0.1)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        lam, det = random_instance(rng)
        est = estimate_p_hat(det, int(rng.integers(5, 500)), seed)
        pl = Placement(tuple(int(i) for i in rng.choice(det.n_sensors, 4, replace=False)), 4)
        rep = propagation_check(lam, det, est, pl)
        assert rep.holds
        assert rep.deviation <= c_k(lam, 4) * rep.max_error + 1e-9


class TestStabilityBound:
    def test_reduces_to_coverage_bound(self):
        for Lam, U in ((0.0, 0.0), (1.0, 0.3), (12.0, 5.0)):
            assert abs(stability_bound(Lam, U, 7.0, 0.0) - coverage_bound(Lam, U)) <= 1e-15

    def test_hand_value(self):
        # C'_K eps = (2 - 1/e) * 0.1
        expected = math.exp(-1 / math.e - (2 - 1 / math.e) * 0.1)
        assert stability_bound(1.0, 0.0, 1.0, 0.1) == pytest.approx(expected, rel=1e-14)
        assert (2 - 1 / math.e) * 0.1 == pytest.approx(0.16321, abs=5e-6)

    def test_nonincreasing_in_eps(self):
        vals = [stability_bound(2.0, 1.0, 3.0, e) for e in np.linspace(0, 1, 50)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


class TestStabilityExperiment:
    grid = make_grid(0, 10, 0, 0.25, 48, 2)

    def _inputs(self, seed=0):
        rng = np.random.default_rng(seed)
        lam = ScalarField(self.grid, rng.gamma(2, 1, self.grid.n_cells))
        lam = ScalarField(self.grid, lam.values / (lam.values.sum() * self.grid.cell_measure))
        omega = ScalarField(self.grid, rng.random(self.grid.n_cells))
        sensors = [Sensor(0.5 + j, 1.2) for j in range(10)]
        return lam, omega, sensors

    def test_large_n_limit(self):
        lam, omega, sensors = self._inputs()
        table = stability_experiment(lam, omega, sensors, 3, [10**4, 10**6], 0.1, 5, 0, DEFAULT_AVAIL)
        limit = coverage_bound(table.Lambda, table.U_star_ref)
        big = [r for r in table.rows if r.N == 10**6]
        assert all(r.same_as_oracle for r in big)
        for r in table.rows:
            assert r.stability_bound == pytest.approx(limit * math.exp(-(2 - 1 / math.e) * r.C_K_eps), rel=1e-12)
        rel_gap = [1 - s.stability_bound / limit for s in table.summary()]
        assert rel_gap[1] < rel_gap[0] / 5 and rel_gap[1] < 0.02

    def test_bound_and_rows(self, tmp_path):
        lam, omega, sensors = self._inputs(1)
        table = stability_experiment(lam, omega, sensors, 3, [100, 400, 1600], 0.1, 20, 5, DEFAULT_AVAIL)
        assert len(table.rows) == 60
        for r in table.rows:
            if r.event:
                assert r.realized_void >= r.stability_bound
            assert r.U_deviation <= r.C_K_max_error + 1e-12
        gaps = [s.realized_void - s.stability_bound for s in table.summary()]
        assert gaps[0] > gaps[1] > gaps[2] > 0
        path = tmp_path / "r.csv"
        table.save_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 61

    def test_rejects_empty(self):
        lam, omega, sensors = self._inputs()
        with pytest.raises(ValueError):
            stability_experiment(lam, omega, sensors, 2, [], 0.1, 1, 0, DEFAULT_AVAIL)


def test_loglog_slope():
    x = np.array([1.0, 10.0, 100.0])
    assert loglog_slope(x, 3 * x**-0.5) == pytest.approx(-0.5)
