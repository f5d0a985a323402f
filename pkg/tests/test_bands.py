import math

import numpy as np
import pytest

from drcatt.bands import (MAMMEN, MAMMEN_HIGH, MAMMEN_LOW, MAMMEN_P_LOW,
                          NORMAL, analytic_critical_value, assemble_band,
                          bootstrap_critical_value, draw_weights,
                          empirical_quantile, gumbel_critical_value,
                          weight_rng)
from drcatt.errors import BandwidthTooLargeError
from drcatt.estimator import dr_curve
from drcatt.first_stage import fit_cell
from drcatt.kernels import kernel_moments
from drcatt.lpr import LprSpec
from drcatt.panel import GroupTimeCell
from drcatt.simulate import SimConfig, rep_rng, simulate_panel

LAM = kernel_moments("gaussian").lam


@pytest.fixture(scope="module")
def curve():
    panel = simulate_panel(SimConfig(n=1200, T=4), rep_rng(7, 0))
    fs = fit_cell(panel, GroupTimeCell(g=2, t=2))
    return dr_curve(fs, np.linspace(-0.8, 0.8, 9), LprSpec(p=2, h=0.25))


def test_analytic_values_pinned():
    cv = analytic_critical_value(0.05, -1.0, 1.0, 0.01, LAM)
    assert cv.a_n == pytest.approx(2.4956, abs=1e-3)
    assert cv.value == pytest.approx(3.6817, abs=1e-3)
    assert cv.method == "analytic" and cv.alpha == 0.05


def test_analytic_infeasible_bandwidth():
    # (b - a) / h must exceed 2 pi / sqrt(lambda) ~ 8.886
    with pytest.raises(BandwidthTooLargeError):
        analytic_critical_value(0.05, -1.0, 1.0, 0.5, LAM)
    # just feasible side
    cv = analytic_critical_value(0.05, -1.0, 1.0, 0.22, LAM)
    assert cv.value > 0


def test_analytic_argument_validation():
    with pytest.raises(ValueError):
        analytic_critical_value(1.5, -1, 1, 0.1, LAM)
    with pytest.raises(ValueError):
        analytic_critical_value(0.05, 1, -1, 0.1, LAM)
    with pytest.raises(ValueError):
        analytic_critical_value(0.05, -1, 1, 0.1, -0.5)


def test_gumbel_value_pinned():
    cv = gumbel_critical_value(0.05, 2.4956)
    assert cv.value == pytest.approx(3.9635, abs=1e-3)
    assert cv.method == "gumbel"


def test_gumbel_monotonicities():
    # decreasing in alpha, and c(a_n) - a_n -> 0 as a_n grows
    v1 = gumbel_critical_value(0.01, 3.0).value
    v2 = gumbel_critical_value(0.10, 3.0).value
    assert v1 > v2
    assert gumbel_critical_value(0.05, 50.0).value - 50.0 < 0.08


def test_gumbel_dominates_analytic():
    """c_gumbel >= c_analytic for any feasible (a, b, h)."""
    for h in (0.05, 0.1, 0.15, 0.2):
        ca = analytic_critical_value(0.05, -1.0, 1.0, h, LAM)
        cg = gumbel_critical_value(0.05, ca.a_n)
        assert cg.value >= ca.value


def test_mammen_weights_exact_support_and_moments():
    rng = weight_rng(0, 0)
    w = draw_weights(MAMMEN, 200000, rng)
    assert set(np.unique(np.round(w, 12))) == {
        round(MAMMEN_LOW, 12), round(MAMMEN_HIGH, 12)}
    # exact mean/variance of the two-point law
    mean = MAMMEN_P_LOW * MAMMEN_LOW + (1 - MAMMEN_P_LOW) * MAMMEN_HIGH
    var = MAMMEN_P_LOW * (MAMMEN_LOW - 1) ** 2 \
        + (1 - MAMMEN_P_LOW) * (MAMMEN_HIGH - 1) ** 2
    assert mean == pytest.approx(1.0, abs=1e-14)
    assert var == pytest.approx(1.0, abs=1e-14)
    # law of large numbers on the draw itself
    assert w.mean() == pytest.approx(1.0, abs=0.005)
    assert w.var() == pytest.approx(1.0, abs=0.01)


def test_normal_weights_moments():
    w = draw_weights(NORMAL, 200000, weight_rng(1, 0))
    assert w.mean() == pytest.approx(1.0, abs=0.01)
    assert w.std() == pytest.approx(1.0, abs=0.01)
    with pytest.raises(ValueError):
        draw_weights("rademacher", 10, weight_rng(0, 0))


def test_empirical_quantile_ceiling_rule():
    s = np.arange(1.0, 11.0)  # 1..10
    assert empirical_quantile(s, 0.95) == 10.0  # ceil(9.5) = 10
    assert empirical_quantile(s, 0.90) == 9.0
    assert empirical_quantile(s, 0.05) == 1.0
    assert empirical_quantile(np.array([3.0]), 0.95) == 3.0


def test_bootstrap_deterministic_and_positive(curve):
    cv1 = bootstrap_critical_value(curve, 0.05, reps=50, seed=11)
    cv2 = bootstrap_critical_value(curve, 0.05, reps=50, seed=11)
    assert cv1.value == cv2.value
    assert cv1.value > 0
    assert cv1.method == "bootstrap" and cv1.reps == 50
    cv3 = bootstrap_critical_value(curve, 0.05, reps=50, seed=12)
    assert cv3.value != cv1.value


def test_bootstrap_single_rep(curve):
    cv = bootstrap_critical_value(curve, 0.05, reps=1, seed=3)
    assert np.isfinite(cv.value) and cv.value >= 0


def test_bootstrap_unit_weights_give_zero(curve, monkeypatch):
    import drcatt.bands as bands
    monkeypatch.setattr(bands, "draw_weights",
                        lambda kind, n, rng: np.ones(n))
    cv = bootstrap_critical_value(curve, 0.05, reps=5, seed=0)
    assert cv.value == pytest.approx(0.0, abs=1e-8)


def test_bootstrap_fixed_components(curve):
    """The sup statistic reuses the stored per-point components: rebuilding
    the curve from the same first stage reproduces the critical value."""
    panel = simulate_panel(SimConfig(n=1200, T=4), rep_rng(7, 0))
    fs = fit_cell(panel, GroupTimeCell(g=2, t=2))
    curve2 = dr_curve(fs, np.linspace(-0.8, 0.8, 9), LprSpec(p=2, h=0.25))
    cv1 = bootstrap_critical_value(curve, 0.05, reps=40, seed=5)
    cv2 = bootstrap_critical_value(curve2, 0.05, reps=40, seed=5)
    assert cv1.value == cv2.value


def test_bootstrap_joint_scope_common_bandwidth():
    panel = simulate_panel(SimConfig(n=1500, T=4), rep_rng(19, 0))
    grid = np.linspace(-0.5, 0.5, 5)
    spec = LprSpec(p=2, h=0.25)
    c1 = dr_curve(fit_cell(panel, GroupTimeCell(g=2, t=2)), grid, spec)
    c2 = dr_curve(fit_cell(panel, GroupTimeCell(g=2, t=3)), grid, spec)
    joint = bootstrap_critical_value([c1, c2], 0.05, reps=60, seed=2,
                                     scope="gtz", panel_n=panel.n_units)
    single = bootstrap_critical_value(c1, 0.05, reps=60, seed=2,
                                      panel_n=panel.n_units)
    # the joint sup dominates any single-cell sup at the same weights
    assert joint.value >= single.value
    assert joint.scope == "gtz"
    bad = dr_curve(fit_cell(panel, GroupTimeCell(g=2, t=3)), grid,
                   LprSpec(p=2, h=0.3))
    with pytest.raises(ValueError):
        bootstrap_critical_value([c1, bad], 0.05, reps=10, scope="gtz")


def test_assemble_band_geometry(curve):
    cv = gumbel_critical_value(0.05, 2.5)
    band = assemble_band(curve, cv)
    assert np.allclose(band.upper - curve.estimate, cv.value * curve.se)
    assert np.allclose(curve.estimate - band.lower, cv.value * curve.se)
    assert np.all(band.upper >= band.lower)
    from drcatt.bands import CriticalValue
    with pytest.raises(ValueError):
        assemble_band(curve, CriticalValue(value=math.inf, method="x",
                                           alpha=0.05))


def test_weight_rng_streams_independent():
    a = weight_rng(0, 0).random(5)
    b = weight_rng(0, 1).random(5)
    c = weight_rng(0, 0).random(5)
    assert np.array_equal(a, c)
    assert not np.array_equal(a, b)
