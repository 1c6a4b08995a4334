"""Schedules, rate fits, convergence studies and the Cauchy diagnostic."""

import csv
import json
import pathlib

import numpy as np
import pytest

from therminf.annealing import (
    ConvergenceReport,
    Schedule,
    cauchy_diagnostic,
    convergence_study,
    default_c,
    make_schedule,
    rate_fit,
)
from therminf.errors import ScheduleError, TherminfError
from therminf.measures import SlidingGaussianDensity, discretize
from therminf.network import constraint_subspace, load_network
from therminf.thermalize import discrete_thermal_mass

NETWORKS = pathlib.Path(__file__).resolve().parents[1] / "networks"


class TestSchedule:
    def test_optimal_rule_frozen_example(self):
        s = make_schedule([1.0, 0.5, 0.25], 4.0)
        assert s.beta_list == (4.0, 8.0, 16.0)
        assert s.rule == "optimal"
        assert len(s) == 3

    def test_constant_beta_eps_sq_is_allowed(self):
        eps = (0.4, 0.2, 0.1)
        s = Schedule(eps, tuple(3.0 / e**2 for e in eps))
        assert s.rule == "custom"

    def test_growing_beta_eps_sq_is_refused(self):
        eps = (0.4, 0.2, 0.1)
        with pytest.raises(ScheduleError, match="bounded"):
            Schedule(eps, tuple(e**-3.0 for e in eps))

    def test_eps_must_strictly_decrease(self):
        with pytest.raises(ScheduleError, match="decreasing"):
            Schedule((0.2, 0.2), (1.0, 1.0))
        with pytest.raises(ScheduleError, match="decreasing"):
            Schedule((0.1, 0.2), (1.0, 1.0))

    def test_positivity_and_shape_checks(self):
        with pytest.raises(ScheduleError, match="positive"):
            Schedule((0.2, -0.1), (1.0, 1.0))
        with pytest.raises(ScheduleError, match="positive"):
            Schedule((0.2, 0.1), (1.0, -1.0))
        with pytest.raises(ScheduleError, match="nonempty"):
            Schedule((), ())
        with pytest.raises(ScheduleError, match="matching"):
            Schedule((0.2, 0.1), (1.0,))
        with pytest.raises(ScheduleError, match="positive"):
            make_schedule([0.4, 0.2], 0.0)

    def test_default_c_keeps_certificate_margin(self):
        c = default_c([0.4, 0.2, 0.1], beta0=2.5)
        assert c == 2.0
        s = make_schedule([0.4, 0.2, 0.1], c)
        assert min(s.beta_list) >= 2 * 2.5 * min(s.eps_list) / min(s.eps_list)
        with pytest.raises(ScheduleError):
            default_c([0.4], 0.0)


class TestRateFit:
    def test_exact_power_law(self):
        xs = np.array([1.0, 0.5, 0.25, 0.125])
        out = rate_fit(xs, 3.0 * xs**0.5)
        assert abs(out["slope"] - 0.5) < 1e-12
        assert abs(out["intercept"] - np.log(3.0)) < 1e-12
        assert abs(out["r_squared"] - 1.0) < 1e-12

    def test_exact_negative_exponent(self):
        xs = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
        out = rate_fit(xs, 7.0 * xs**-2.0)
        assert abs(out["slope"] + 2.0) < 1e-12
        assert abs(out["r_squared"] - 1.0) < 1e-12

    def test_noisy_power_law_recovers_slope(self):
        rng = np.random.default_rng(0)
        xs = np.geomspace(1.0, 64.0, 8)
        ys = xs**-0.5 * (1.0 + 0.05 * rng.standard_normal(8))
        out = rate_fit(xs, ys)
        assert -0.6 <= out["slope"] <= -0.4
        assert out["r_squared"] > 0.9

    def test_input_validation(self):
        with pytest.raises(ValueError, match="3"):
            rate_fit([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError, match="positive"):
            rate_fit([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])
        with pytest.raises(ValueError, match="positive"):
            rate_fit([1.0, 2.0, 0.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="identical"):
            rate_fit([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


@pytest.fixture(scope="module")
def single_edge_net():
    return load_network(NETWORKS / "single_edge.json")


@pytest.fixture(scope="module")
def single_edge_study(single_edge_net):
    sched = make_schedule([0.4, 0.2, 0.1], 2.0)
    return convergence_study(
        single_edge_net, sched, mc={"k": 400, "seeds": (0, 1, 2)}, radius=6.0
    )


class TestConvergenceStudy:
    def test_rows_follow_schedule(self, single_edge_study):
        rep = single_edge_study
        assert [r["eps_h"] for r in rep.rows] == [0.4, 0.2, 0.1]
        assert [r["beta_h"] for r in rep.rows] == [5.0, 10.0, 20.0]
        for row in rep.rows:
            assert row["fn_therm"] > 0 and row["fn_approx"] > 0 and row["fn_total"] > 0
            assert set(row["tv_masses"]) == {"grid", "thermal", "limit"}
            assert set(row["mc_errors"]) == {"therm", "approx", "total"}

    def test_total_error_rate_near_half(self, single_edge_study):
        fit = single_edge_study.fits["fn_total_vs_eps"]
        assert 0.35 <= fit["slope"] <= 0.65
        assert fit["slope_ci"][0] <= fit["slope"] <= fit["slope_ci"][1]

    def test_thermalization_rate_bound(self, single_edge_study):
        # Decay in beta at least as fast as the 1/2-rate guarantee.
        assert single_edge_study.fits["fn_therm_vs_beta"]["slope"] <= -0.4

    def test_triangle_budget_every_row(self, single_edge_study):
        for row in single_edge_study.rows:
            budget = 3.0 * sum(row["mc_errors"].values())
            assert row["fn_total"] <= row["fn_therm"] + row["fn_approx"] + budget

    def test_certificate_margin_reported(self, single_edge_study):
        meta = single_edge_study.meta
        assert meta["beta0"] == pytest.approx(2.5)
        assert meta["beta0_at_most_half_min_beta"]
        assert meta["certificate"]["c"] > 0

    def test_tv_masses_consistent(self, single_edge_study):
        # Grid and oracle thermal masses agree well below the coarsest eps.
        for row in single_edge_study.rows:
            tv = row["tv_masses"]
            assert tv["grid"] == pytest.approx(tv["thermal"], rel=0.05)
            assert tv["limit"] == pytest.approx(np.sqrt(2.0 * np.pi), rel=1e-8)

    def test_csv_roundtrip(self, single_edge_study, tmp_path):
        path = tmp_path / "report.csv"
        single_edge_study.to_csv(path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        for got, row in zip(rows, single_edge_study.rows):
            assert float(got["eps_h"]) == row["eps_h"]
            assert float(got["fn_total"]) == row["fn_total"]
            assert float(got["tv_thermal"]) == row["tv_masses"]["thermal"]

    def test_json_roundtrip(self, single_edge_study, tmp_path):
        path = tmp_path / "report.json"
        single_edge_study.to_json(path)
        with open(path) as fh:
            blob = json.load(fh)
        assert blob["rows"] == single_edge_study.rows
        assert blob["fits"]["fn_total_vs_eps"]["slope"] == (
            single_edge_study.fits["fn_total_vs_eps"]["slope"]
        )
        assert blob["meta"]["seeds"] == [0, 1, 2]

    def test_mc_validation(self, single_edge):
        sched = make_schedule([0.4, 0.2], 2.0)
        with pytest.raises(ValueError, match="k"):
            convergence_study(single_edge, sched, mc={"k": 5, "seeds": (0, 1, 2)})
        with pytest.raises(ValueError, match="seed"):
            convergence_study(single_edge, sched, mc={"k": 100, "seeds": (0,)})

    def test_constant_beta_schedule_skips_degenerate_fit(self, single_edge_net):
        # A constant-beta schedule leaves no slope in beta to fit; the
        # eps fits must still be produced.
        sched = Schedule([0.4, 0.2, 0.1], [8.0, 8.0, 8.0])
        rep = convergence_study(
            single_edge_net, sched, mc={"k": 120, "seeds": (0, 1, 2)}, radius=4.0
        )
        assert "fn_therm_vs_beta" not in rep.fits
        assert "fn_total_vs_eps" in rep.fits and "fn_approx_vs_eps" in rep.fits

    def test_triangle_invariant_guard(self):
        row = {
            "eps_h": 0.1,
            "beta_h": 20.0,
            "fn_therm": 0.1,
            "fn_approx": 0.1,
            "fn_total": 5.0,
            "tv_masses": {"grid": 1.0, "thermal": 1.0, "limit": 1.0},
            "mc_errors": {"therm": 0.0, "approx": 0.0, "total": 0.0},
        }
        with pytest.raises(TherminfError, match="triangle"):
            ConvergenceReport(rows=[row], fits={}, meta={})


@pytest.fixture(scope="module")
def edge_density(single_edge_net):
    dens = SlidingGaussianDensity.from_network(single_edge_net)
    E = constraint_subspace(single_edge_net)
    return dens, E, dens.minimizer_on(E)


def _thermal_sequence(edge_density, eps_list, beta_of_eps):
    dens, E, center = edge_density
    out = []
    for eps in eps_list:
        m = discretize(dens, eps, radius=6.0, center=center)
        out.append(discrete_thermal_mass(m, E, beta_of_eps(eps)))
    return out


class TestCauchyDiagnostic:
    def test_identical_measures_give_zero_matrix(self, edge_density):
        t = _thermal_sequence(edge_density, [0.4], lambda e: 5.0)[0]
        out = cauchy_diagnostic([t, t, t], mc={"k": 300, "seeds": (0, 1, 2)})
        assert np.all(out["matrix"] == 0.0)
        assert out["verdict"] == "Cauchy-consistent"

    def test_matched_schedule_is_consistent(self, edge_density):
        ms = _thermal_sequence(edge_density, [0.4, 0.2, 0.1], lambda e: 2.0 / e)
        out = cauchy_diagnostic(ms, mc={"k": 500, "seeds": (0, 1, 2)}, threshold=0.6)
        succ = out["successive"]
        assert all(a >= b for a, b in zip(succ, succ[1:]))
        assert out["verdict"] == "Cauchy-consistent"
        assert out["tv_bounded"]
        assert max(out["tail_fractions"]) < 0.05
        assert np.allclose(out["matrix"], out["matrix"].T)

    def test_runaway_beta_is_flagged(self, edge_density):
        # beta = eps^-3 inflates the lattice thermal mass, so successive
        # distances eventually grow instead of contracting.
        ms = _thermal_sequence(edge_density, [0.4, 0.2, 0.1, 0.05], lambda e: e**-3.0)
        out = cauchy_diagnostic(ms, mc={"k": 500, "seeds": (0, 1, 2)}, threshold=0.05)
        succ = out["successive"]
        assert succ[-1] > succ[-2]
        assert out["verdict"] == "not Cauchy-consistent"

    def test_input_validation(self, edge_density):
        t = _thermal_sequence(edge_density, [0.4], lambda e: 5.0)[0]
        with pytest.raises(ValueError, match="two"):
            cauchy_diagnostic([t], mc={"k": 300, "seeds": (0, 1, 2)})
        with pytest.raises(TypeError, match="ThermalizedDiscrete"):
            cauchy_diagnostic([t, object()], mc={"k": 300, "seeds": (0, 1, 2)})
