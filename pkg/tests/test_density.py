import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from drcatt.density import (DENSITY_FLOOR, DensityFit, kde, kde_deriv,
                            silverman_bandwidth)


def test_silverman_formula():
    rng = np.random.default_rng(0)
    zs = rng.normal(size=400)
    sd = zs.std(ddof=1)
    assert silverman_bandwidth(zs) == pytest.approx(1.06 * sd * 400 ** -0.2)


def test_silverman_degenerate_sample():
    assert silverman_bandwidth(np.zeros(100)) == pytest.approx(1.06 * 100 ** -0.2)
    assert silverman_bandwidth(np.array([1.0])) == pytest.approx(1.06)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(1)
    zs = rng.normal(size=500)
    h = silverman_bandwidth(zs)
    total, _ = quad(lambda z: kde(zs, z, h), -8, 8, limit=200)
    assert abs(total - 1.0) < 1e-3


def test_kde_close_to_normal_density():
    rng = np.random.default_rng(2)
    zs = rng.normal(size=20000)
    h = silverman_bandwidth(zs)
    for z0 in (-1.0, 0.0, 0.5):
        assert kde(zs, z0, h) == pytest.approx(norm.pdf(z0), rel=0.05)


def test_kde_floor():
    zs = np.zeros(10)
    assert kde(zs, 1e6, 0.1) == DENSITY_FLOOR


def test_kde_deriv_matches_numeric_gradient():
    rng = np.random.default_rng(3)
    zs = rng.normal(size=300)
    h = 0.4
    eps = 1e-6
    for z0 in (-0.7, 0.0, 1.2):
        num = (kde(zs, z0 + eps, h) - kde(zs, z0 - eps, h)) / (2 * eps)
        assert kde_deriv(zs, z0, h) == pytest.approx(num, abs=1e-5)


def test_kde_deriv_sign_for_normal_sample():
    rng = np.random.default_rng(4)
    zs = rng.normal(size=5000)
    h = silverman_bandwidth(zs)
    assert kde_deriv(zs, -1.0, h) > 0
    assert kde_deriv(zs, 1.0, h) < 0


def test_density_fit_counts_floors():
    fit = DensityFit.from_sample(np.zeros(10) + 0.5, h_d=0.1)
    assert fit.pdf(0.5) > DENSITY_FLOOR
    assert fit.floors_hit == 0
    assert fit.pdf(50.0) == DENSITY_FLOOR
    assert fit.floors_hit == 1
    assert fit.pdf_deriv(0.5) == pytest.approx(0.0, abs=1e-12)


def test_density_fit_default_bandwidth():
    rng = np.random.default_rng(5)
    zs = rng.normal(size=200)
    fit = DensityFit.from_sample(zs)
    assert fit.h_d == pytest.approx(silverman_bandwidth(zs))
