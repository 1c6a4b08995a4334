"""Thermal masses and expectations: frozen values, invariants, oracle checks."""

import math

import numpy as np
import pytest

from therminf import EnergyMetric, constraint_subspace
from therminf.errors import ZeroMassError
from therminf.measures import EmpiricalMeasure, SlidingGaussianDensity, discretize
from therminf.oracle import thermalized_moments
from therminf.qoi import QuantityOfInterest, parse_qoi
from therminf.thermalize import (
    discrete_thermal_mass,
    expectation_h,
    thermal_weight,
    to_signed_cloud,
)
from therminf.flatnorm import fn_distance


@pytest.fixture
def line_space(single_edge):
    # E = {sigma = 1} with unit coefficient: the admissible set of one
    # grounded edge with a unit source.
    return constraint_subspace(single_edge, ell=1.0)


class TestThermalWeight:
    def test_diagonal_unit_beta(self):
        met = EnergyMetric(np.array([1.0]), ell=1.0)
        y = np.array([0.4, -1.2])
        assert thermal_weight(y, y, 1.0, met) == pytest.approx(1.0 / math.pi, rel=1e-14)

    def test_unit_gap_beta_four(self):
        met = EnergyMetric(np.array([1.0]), ell=1.0)
        y = np.array([0.0, 0.0])
        z = np.array([1.0, 0.0])
        want = (4.0 / math.pi) * math.exp(-4.0)
        assert thermal_weight(y, z, 4.0, met) == pytest.approx(want, rel=1e-14)

    def test_weight_ratio_identity(self):
        rng = np.random.default_rng(2)
        met = EnergyMetric(rng.uniform(0.5, 2.0, size=3), ell=1.0)
        y = rng.normal(size=6)
        z1 = rng.normal(size=6)
        z2 = rng.normal(size=6)
        beta = 1.7
        g1 = met.norm_flat(y - z1)
        g2 = met.norm_flat(y - z2)
        lhs = thermal_weight(y, z1, beta, met) / thermal_weight(y, z2, beta, met)
        assert lhs == pytest.approx(math.exp(-beta * (g1**2 - g2**2)), rel=1e-12)

    def test_batched_rows(self):
        met = EnergyMetric(np.array([1.0]), ell=1.0)
        y = np.zeros((5, 2))
        z = np.zeros((5, 2))
        out = thermal_weight(y, z, 2.0, met)
        assert out.shape == (5,)
        assert np.allclose(out, 2.0 / math.pi)

    def test_requires_positive_beta(self):
        met = EnergyMetric(np.array([1.0]), ell=1.0)
        with pytest.raises(ValueError, match="beta"):
            thermal_weight(np.zeros(2), np.zeros(2), 0.0, met)


class TestDiscreteThermalMass:
    def test_on_subspace_frozen_value(self, line_space):
        m = EmpiricalMeasure(np.array([[0.3, 1.0]]), np.array([1.0]))
        t = discrete_thermal_mass(m, line_space, beta=4.0)
        assert t.total_mass == pytest.approx(2.0 / math.sqrt(math.pi), rel=1e-13)

    def test_unit_distance_frozen_value(self, line_space):
        m = EmpiricalMeasure(np.array([[0.0, 0.0]]), np.array([1.0]))
        t = discrete_thermal_mass(m, line_space, beta=4.0)
        want = (2.0 / math.sqrt(math.pi)) * math.exp(-4.0)
        assert t.total_mass == pytest.approx(want, rel=1e-13)

    def test_monotone_suppression_off_subspace(self, line_space):
        m = EmpiricalMeasure(np.array([[0.0, 0.3]]), np.array([1.0]))
        betas = np.linspace(0.5, 20.0, 15)
        masses = [discrete_thermal_mass(m, line_space, b).total_mass for b in betas]
        assert all(a > b for a, b in zip(masses, masses[1:]))

    def test_monotone_growth_on_subspace(self, line_space):
        m = EmpiricalMeasure(np.array([[-0.7, 1.0]]), np.array([2.0]))
        betas = np.linspace(0.5, 20.0, 15)
        masses = [discrete_thermal_mass(m, line_space, b).total_mass for b in betas]
        assert all(a < b for a, b in zip(masses, masses[1:]))
        for b, got in zip(betas, masses):
            assert got == pytest.approx(2.0 * (b / math.pi) ** 0.5, rel=1e-12)

    def test_mass_formula_random_points(self, line_space):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(20, 2))
        w = rng.uniform(0.1, 2.0, size=20)
        beta = 3.0
        t = discrete_thermal_mass(EmpiricalMeasure(pts, w), line_space, beta)
        d = line_space.dist_flat(pts)
        want = w * (beta / math.pi) ** 0.5 * np.exp(-beta * d**2)
        assert np.allclose(np.sort(t.masses), np.sort(want), rtol=1e-12)

    def test_grid_total_mass_matches_oracle_linearly_in_eps(self, single_edge):
        dens = SlidingGaussianDensity.from_network(single_edge)
        E = constraint_subspace(single_edge)
        beta = 16.0
        tv = thermalized_moments(dens, E, beta).tv_mass
        errs = []
        eps_list = [0.3, 0.15, 0.075]
        for eps in eps_list:
            m = discretize(dens, eps, radius=8.0, center=dens.minimizer_on(E))
            t = discrete_thermal_mass(m, E, beta)
            errs.append(abs(t.total_mass - tv))
        assert errs[0] > errs[1] > errs[2]
        c_fit = errs[0] / (math.sqrt(beta) * eps_list[0])
        for err, eps in zip(errs[1:], eps_list[1:]):
            assert err <= 1.5 * c_fit * math.sqrt(beta) * eps

    def test_drop_accounting(self, line_space):
        pts = np.array([[0.0, 1.0], [0.0, 60.0]])
        m = EmpiricalMeasure(pts, np.array([1.0, 1.0]))
        t = discrete_thermal_mass(m, line_space, beta=1.0)
        assert t.n_points == 1
        assert t.n_source_points == 2
        assert 0.0 <= t.dropped_mass_bound <= 1e-290


class TestExpectation:
    def test_constant_qoi_is_exactly_one(self, single_edge, line_space):
        f = parse_qoi("one", 1)
        m = EmpiricalMeasure(np.array([[0.2, 0.9], [1.1, 1.0]]), np.array([1.0, 2.0]))
        out = expectation_h(f, m, line_space, beta=2.0)
        assert out.value == 1.0
        assert out.stderr == 0.0

    def test_single_atom_sigma_closed_form(self, line_space):
        f = parse_qoi("sigma[1]", 1)
        for beta in (0.5, 4.0, 64.0):
            m = EmpiricalMeasure(np.array([[0.4, 1.0]]), np.array([1.0]))
            out = expectation_h(f, m, line_space, beta=beta)
            assert out.value == pytest.approx(1.0, abs=1e-12)
            assert out.stderr == 0.0

    def test_quadratic_closed_form(self, line_space):
        # Single atom p = (a, 1) on E: z = (a + u / sqrt(2 beta), 1), so
        # E[eps^2 + sigma^2] = a^2 + 1 / (2 beta) + 1.
        a, beta = 0.8, 3.0
        Q = np.eye(2)
        f = QuantityOfInterest(
            name="z_sq", kind="quadratic", bounded=False,
            quad=(Q, np.zeros(2), 0.0),
        )
        m = EmpiricalMeasure(np.array([[a, 1.0]]), np.array([1.0]))
        out = expectation_h(f, m, line_space, beta=beta)
        assert out.value == pytest.approx(a**2 + 1.0 / (2 * beta) + 1.0, rel=1e-12)

    def test_monte_carlo_agrees_with_closed_form(self, line_space):
        # The same affine functional routed through the generic sampler.
        closed = parse_qoi("eps[1]", 1)
        sampled = QuantityOfInterest(
            name="eps_mc", kind="callable", bounded=False,
            func=lambda y, z: z[:, 0],
        )
        pts = np.array([[0.1, 0.8], [0.9, 1.1], [1.5, 1.0]])
        m = EmpiricalMeasure(pts, np.array([1.0, 2.0, 0.5]))
        ref = expectation_h(closed, m, line_space, beta=5.0)
        mc = expectation_h(sampled, m, line_space, beta=5.0, n_samples=40_000, seed=3)
        assert mc.stderr > 0.0
        assert mc.value == pytest.approx(ref.value, abs=4 * mc.stderr + 1e-4)

    def test_normalization_invariance(self, line_space):
        f = parse_qoi("eps[1]", 1)
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(15, 2))
        w = rng.uniform(0.2, 1.5, size=15)
        m1 = EmpiricalMeasure(pts, w)
        m2 = EmpiricalMeasure(pts, 7.3 * w)
        a = expectation_h(f, m1, line_space, beta=2.5)
        b = expectation_h(f, m2, line_space, beta=2.5)
        assert a.value == pytest.approx(b.value, rel=1e-13)

    def test_translation_equivariance(self, single_edge):
        from therminf.affine import AffineSubspace

        E = constraint_subspace(single_edge)
        f = parse_qoi("sigma[1]", 1)
        rng = np.random.default_rng(13)
        pts = rng.normal(size=(10, 2)) + np.array([1.0, 1.0])
        w = rng.uniform(0.5, 2.0, size=10)
        shift = np.array([0.35, -0.6])
        E2 = AffineSubspace.from_spanning(
            E.basis, __import__("therminf").PhaseVector.from_flat(E.offset_flat + shift), E.metric
        )
        a = expectation_h(f, EmpiricalMeasure(pts, w), E, beta=3.0)
        b = expectation_h(f, EmpiricalMeasure(pts + shift, w), E2, beta=3.0)
        assert b.value == pytest.approx(a.value + shift[1], abs=1e-10)

    def test_zero_denominator_names_distance(self, line_space):
        m = EmpiricalMeasure(np.array([[0.0, 31.0]]), np.array([1.0]))
        with pytest.raises(ZeroMassError, match="max point-to-E distance is 30"):
            expectation_h(parse_qoi("one", 1), m, line_space, beta=2.0)

    def test_stderr_is_calibrated(self, line_space):
        f = parse_qoi("gap", 1)
        pts = np.array([[0.2, 0.7], [1.0, 1.2]])
        m = EmpiricalMeasure(pts, np.array([1.0, 1.0]))
        vals, errs = [], []
        for seed in range(20):
            out = expectation_h(f, m, line_space, beta=2.0, n_samples=400, seed=seed)
            vals.append(out.value)
            errs.append(out.stderr)
        observed = np.std(vals, ddof=1)
        mean_err = np.mean(errs)
        assert mean_err / 3 < observed < 3 * mean_err

    def test_bootstrap_stderr_available(self, line_space):
        f = parse_qoi("gap", 1)
        m = EmpiricalMeasure(np.array([[0.2, 0.7]]), np.array([1.0]))
        d = expectation_h(f, m, line_space, beta=2.0, n_samples=500, seed=1)
        b = expectation_h(
            f, m, line_space, beta=2.0, n_samples=500, seed=1, stderr_method="bootstrap"
        )
        assert b.value == d.value
        assert b.stderr > 0.0
        assert b.stderr == pytest.approx(d.stderr, rel=1.0)
        with pytest.raises(ValueError, match="stderr_method"):
            expectation_h(f, m, line_space, beta=2.0, stderr_method="jackknife")

    def test_grid_expectation_converges_with_schedule(self, single_edge):
        # eps_h -> 0 with beta_h = 1/eps_h: E_h[eps_1] approaches the
        # classical value 1 within the sqrt(eps) envelope (for this Gaussian
        # integrand the lattice sum is in fact exact to roundoff, since
        # Poisson summation puts the quadrature error at exp(-2 pi^2 / eps)),
        # and sigma_1 is exactly 1 on E at every level.
        from therminf import PhaseVector

        dens = SlidingGaussianDensity.from_network(single_edge)
        E = constraint_subspace(single_edge)
        f_eps = parse_qoi("eps[1]", 1)
        f_sig = parse_qoi("sigma[1]", 1)
        center = PhaseVector.from_flat(np.array([1.31, 0.83]))
        for eps in (0.4, 0.2, 0.1):
            m = discretize(dens, eps, radius=8.0, center=center)
            beta = 1.0 / eps
            out = expectation_h(f_eps, m, E, beta=beta)
            assert abs(out.value - 1.0) <= 0.1 * math.sqrt(eps)
            sig = expectation_h(f_sig, m, E, beta=beta)
            assert sig.value == pytest.approx(1.0, abs=1e-12)


class TestSignedCloud:
    def test_single_atom_single_draw(self, line_space):
        m = EmpiricalMeasure(np.array([[0.5, 1.0]]), np.array([1.0]))
        t = discrete_thermal_mass(m, line_space, beta=4.0)
        cloud = to_signed_cloud(t, per_point_z_samples=1, seed=0)
        assert cloud.n_points == 1
        assert cloud.points.shape == (1, 4)
        assert np.array_equal(cloud.points[0, :2], [0.5, 1.0])
        assert cloud.weights[0] == pytest.approx(t.total_mass, rel=1e-14)
        # z lands on E near the projection of p
        assert cloud.points[0, 3] == pytest.approx(1.0, abs=1e-10)

    def test_total_weight_is_thermal_tv(self, single_edge):
        dens = SlidingGaussianDensity.from_network(single_edge)
        E = constraint_subspace(single_edge)
        m = discretize(dens, 0.3, radius=6.0, center=dens.minimizer_on(E))
        t = discrete_thermal_mass(m, E, beta=4.0)
        cloud = to_signed_cloud(t, per_point_z_samples=3, seed=7)
        assert cloud.tv_norm == pytest.approx(t.total_mass, rel=1e-12)
        assert cloud.n_points == 3 * t.n_points

    def test_deterministic_per_seed(self, line_space):
        m = EmpiricalMeasure(np.array([[0.2, 0.9], [1.0, 1.3]]), np.array([1.0, 0.5]))
        t = discrete_thermal_mass(m, line_space, beta=2.0)
        c1 = to_signed_cloud(t, 5, seed=11)
        c2 = to_signed_cloud(t, 5, seed=11)
        c3 = to_signed_cloud(t, 5, seed=12)
        assert np.array_equal(c1.points, c2.points)
        assert not np.array_equal(c1.points, c3.points)

    def test_self_distance_shrinks_with_samples(self, line_space):
        m = EmpiricalMeasure(np.array([[0.3, 1.0]]), np.array([1.0]))
        t = discrete_thermal_mass(m, line_space, beta=4.0)
        fns = []
        for k in (50, 200, 800):
            c1 = to_signed_cloud(t, k, seed=1)
            c2 = to_signed_cloud(t, k, seed=2)
            fns.append(fn_distance(c1, c2))
        assert fns[0] > fns[1] > fns[2]

    def test_cloud_mean_matches_expectation(self, single_edge):
        dens = SlidingGaussianDensity.from_network(single_edge)
        E = constraint_subspace(single_edge)
        m = discretize(dens, 0.3, radius=6.0, center=dens.minimizer_on(E))
        beta = 4.0
        t = discrete_thermal_mass(m, E, beta)
        cloud = to_signed_cloud(t, per_point_z_samples=200, seed=5)
        z_eps = cloud.points[:, 2]
        mc_mean = float(cloud.weights @ z_eps / cloud.tv_norm)
        ref = expectation_h(parse_qoi("eps[1]", 1), m, E, beta=beta)
        sigma_cond = 1.0 / math.sqrt(2 * beta)
        tol = 4 * sigma_cond / math.sqrt(cloud.n_points)
        assert mc_mean == pytest.approx(ref.value, abs=tol)

    def test_requires_positive_samples(self, line_space):
        m = EmpiricalMeasure(np.array([[0.0, 1.0]]), np.array([1.0]))
        t = discrete_thermal_mass(m, line_space, beta=1.0)
        with pytest.raises(ValueError, match="sample"):
            to_signed_cloud(t, 0, seed=0)
