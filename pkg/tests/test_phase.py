"""Energy norm and T-transform unit and property tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from therminf import EnergyMetric, PhaseVector, energy_inner, energy_norm, t_inverse, t_transform
from therminf.errors import DimensionMismatchError

from conftest import random_metric


def test_energy_norm_zero_vector():
    m = EnergyMetric([1.0])
    assert energy_norm(PhaseVector([0.0], [0.0]), m) == 0.0


def test_energy_norm_unit_entries():
    m = EnergyMetric([1.0])
    assert_allclose(energy_norm(PhaseVector([1.0], [1.0]), m), np.sqrt(2.0), rtol=1e-15)


def test_energy_norm_weighted():
    m = EnergyMetric([4.0])
    assert_allclose(energy_norm(PhaseVector([1.0], [0.0]), m), 2.0, rtol=1e-15)


def test_energy_norm_dimension_mismatch():
    m = EnergyMetric([1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        energy_norm(PhaseVector([1.0], [1.0]), m)


def test_t_transform_zero():
    assert t_transform(0.0, 0.0, 1.0) == (0.0, 0.0)


def test_t_transform_material_line():
    # t2 vanishes exactly when sigma = c * eps.
    t1, t2 = t_transform(1.0, 1.0, 1.0)
    assert_allclose(t1, np.sqrt(2.0), rtol=1e-15)
    assert_allclose(t2, 0.0, atol=1e-15)


def test_t_transform_antidiagonal():
    t1, t2 = t_transform(1.0, -1.0, 1.0)
    assert_allclose(t1, 0.0, atol=1e-15)
    assert_allclose(t2, np.sqrt(2.0), rtol=1e-15)


def test_t_inverse_basic():
    eps, sigma = t_inverse(np.sqrt(2.0), 0.0, 1.0)
    assert_allclose([eps, sigma], [1.0, 1.0], rtol=1e-14)


@pytest.mark.parametrize("c", [0.5, 1.0, 4.0])
def test_t_roundtrip_random(c):
    rng = np.random.default_rng(101)
    eps = rng.normal(scale=3.0, size=1000)
    sigma = rng.normal(scale=3.0, size=1000)
    t1, t2 = t_transform(eps, sigma, c)
    eps2, sigma2 = t_inverse(t1, t2, c)
    scale = np.maximum(1.0, np.abs(eps) + np.abs(sigma))
    assert np.max(np.abs(eps2 - eps) / scale) < 1e-12
    assert np.max(np.abs(sigma2 - sigma) / scale) < 1e-12


def test_t_norm_preservation():
    rng = np.random.default_rng(7)
    for _ in range(200):
        c = rng.uniform(0.2, 5.0)
        eps, sigma = rng.normal(scale=2.0, size=2)
        t1, t2 = t_transform(eps, sigma, c)
        edge_norm = np.sqrt(c * eps**2 + sigma**2 / c)
        assert_allclose(np.hypot(t1, t2), edge_norm, rtol=1e-12)


def test_t_transform_linearity():
    rng = np.random.default_rng(8)
    c = 2.5
    y = rng.normal(size=2)
    w = rng.normal(size=2)
    a, b = 1.75, -0.5
    lhs = t_transform(a * y[0] + b * w[0], a * y[1] + b * w[1], c)
    ty = t_transform(y[0], y[1], c)
    tw = t_transform(w[0], w[1], c)
    assert_allclose(lhs, (a * ty[0] + b * tw[0], a * ty[1] + b * tw[1]), rtol=1e-13)


def test_t_transform_unit_jacobian():
    for c in (0.3, 1.0, 7.0):
        J = np.array([
            t_transform(1.0, 0.0, c),
            t_transform(0.0, 1.0, c),
        ]).T
        assert_allclose(abs(np.linalg.det(J)), 1.0, rtol=1e-13)


def test_parallelogram_law():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = rng.integers(1, 5)
        m = random_metric(rng, n)
        a = PhaseVector(rng.normal(size=n), rng.normal(size=n))
        b = PhaseVector(rng.normal(size=n), rng.normal(size=n))
        lhs = energy_norm(a + b, m) ** 2 + energy_norm(a - b, m) ** 2
        rhs = 2 * energy_norm(a, m) ** 2 + 2 * energy_norm(b, m) ** 2
        assert_allclose(lhs, rhs, rtol=1e-10)


def test_inner_product_matches_norm():
    rng = np.random.default_rng(13)
    m = random_metric(rng, 3)
    z = PhaseVector(rng.normal(size=3), rng.normal(size=3))
    assert_allclose(energy_inner(z, z, m), energy_norm(z, m) ** 2, rtol=1e-13)


def test_metric_to_t_matches_edgewise_map():
    rng = np.random.default_rng(14)
    m = random_metric(rng, 4)
    z = rng.normal(size=8)
    t = m.to_t(z)
    t1, t2 = t_transform(z[:4], z[4:], m.coeffs)
    assert_allclose(t, np.concatenate([t1, t2]), rtol=1e-14)
    # Isometry: Euclidean norm in T equals the energy norm.
    assert_allclose(np.linalg.norm(t), m.norm_flat(z), rtol=1e-12)
    assert_allclose(m.from_t(t), z, rtol=1e-12, atol=1e-14)


def test_invalid_metric_rejected():
    with pytest.raises(ValueError):
        EnergyMetric([1.0, -1.0])
    with pytest.raises(ValueError):
        EnergyMetric([1.0], ell=0.0)


def test_phase_vector_finite_required():
    with pytest.raises(ValueError):
        PhaseVector([np.inf], [0.0])
