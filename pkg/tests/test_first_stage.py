import numpy as np
import pytest
from scipy.optimize import minimize

from drcatt.errors import (NoControlUnitsError, OverlapViolationError,
                           PerfectSeparationError, RankDeficientError)
from drcatt.first_stage import (DEFAULT_TRIM, LOGIT_MAX_ITER, LOGIT_TOL,
                                compute_R, compute_m, delta_outcome, fit_cell,
                                fit_gps, fit_logit, fit_or, gps_probabilities,
                                subsample_masks)
from drcatt.panel import NEVER_TREATED, NOT_YET_TREATED, GroupTimeCell
from drcatt.simulate import SimConfig, rep_rng, simulate_panel


@pytest.fixture(scope="module")
def panel():
    return simulate_panel(SimConfig(n=800, T=4), rep_rng(101, 0))


CELL = GroupTimeCell(g=2, t=2)


def test_logit_matches_generic_optimizer():
    rng = np.random.default_rng(4)
    n = 500
    x = np.column_stack([np.ones(n), rng.normal(size=n)])
    beta_true = np.array([-0.3, 0.8])
    y = (rng.random(n) < 1 / (1 + np.exp(-x @ beta_true))).astype(float)

    fit = fit_logit(x, y)
    assert fit.converged

    def nll(b):
        eta = x @ b
        return -(y @ eta - np.logaddexp(0.0, eta).sum())

    res = minimize(nll, np.zeros(2), method="BFGS", tol=1e-12)
    assert np.allclose(fit.coef, res.x, atol=1e-6)
    assert fit.n_treated == int(y.sum())
    assert fit.n_control == n - int(y.sum())


def test_logit_rank_deficient_design():
    from drcatt.errors import SingularDesignError
    x = np.column_stack([np.ones(100), np.zeros(100)])
    y = np.r_[np.ones(50), np.zeros(50)]
    with pytest.raises(SingularDesignError):
        fit_logit(x, y)


def test_logit_perfect_separation():
    z = np.linspace(-2, 2, 100)
    x = np.column_stack([np.ones(100), z])
    y = (z > 0).astype(float)
    with pytest.raises(PerfectSeparationError):
        fit_logit(x, y)


def test_logit_tolerances_pinned():
    assert LOGIT_TOL == 1e-10
    assert LOGIT_MAX_ITER == 100
    assert DEFAULT_TRIM == 0.005


def test_subsample_masks_modes(panel):
    treated, control = subsample_masks(panel, CELL)
    assert np.array_equal(treated, panel.group == 2)
    assert np.array_equal(control, np.isinf(panel.group))
    cell_ny = GroupTimeCell(g=2, t=2, control_mode=NOT_YET_TREATED)
    _, control_ny = subsample_masks(panel, cell_ny)
    # not-yet at period t+delta=2 includes groups 3, 4, and never
    assert control_ny.sum() > control.sum()
    assert not (control_ny & treated).any()


def test_delta_outcome(panel):
    dy = delta_outcome(panel, CELL)
    it, ib = panel.period_index(2), panel.period_index(1)
    assert np.allclose(dy, panel.outcome[:, it] - panel.outcome[:, ib])


def test_gps_recovers_two_class_logit_slope():
    # two-class conditional of the softmax design is logistic in Z with
    # slope gamma_g - gamma_0 = 0.25 for g=2, T=4
    panel = simulate_panel(SimConfig(n=60000, T=4), rep_rng(77, 0))
    gps = fit_gps(panel, CELL)
    assert abs(gps.coef[1] - 0.25) < 0.04
    p = gps_probabilities(panel, gps)
    assert np.all((p > 0) & (p < 1))


def test_or_fit_matches_lstsq_oracle(panel):
    orf = fit_or(panel, CELL)
    _, control = subsample_masks(panel, CELL)
    x = np.column_stack([np.ones(control.sum()), panel.z[control]])
    dy = delta_outcome(panel, CELL)[control]
    expect, *_ = np.linalg.lstsq(x, dy, rcond=None)
    assert np.allclose(orf.coef, expect, atol=1e-10)
    # slope of E[dY | Z, control] = 1 + z is 1
    assert abs(orf.coef[1] - 1.0) < 0.25


def test_or_rank_deficient():
    from dataclasses import replace
    p = simulate_panel(SimConfig(n=200, T=4), rep_rng(5, 0))
    p_const = replace(p, z=np.zeros(p.n_units) + 0.0)
    with pytest.raises(RankDeficientError):
        fit_or(p_const, CELL)


def test_compute_R_zero_off_controls(panel):
    gps = fit_gps(panel, CELL)
    r, kept = compute_R(panel, CELL, gps)
    _, control = subsample_masks(panel, CELL)
    assert np.all(r[~control] == 0)
    assert np.all(r[control & kept] > 0)
    # R = p / (1 - p) on kept controls
    p = gps_probabilities(panel, gps)
    i = np.flatnonzero(control & kept)[0]
    assert r[i] == pytest.approx(p[i] / (1 - p[i]))


def test_compute_R_trimming_modes(panel):
    gps = fit_gps(panel, CELL)
    # force a violation by shrinking the trim threshold to everything
    r, kept = compute_R(panel, CELL, gps, trim=0.999, on_violation="trim")
    _, control = subsample_masks(panel, CELL)
    assert kept.sum() < panel.n_units
    assert np.all(r[control & ~kept] == 0)
    with pytest.raises(OverlapViolationError):
        compute_R(panel, CELL, gps, trim=0.999, on_violation="error")


def test_compute_m_is_linear_prediction(panel):
    orf = fit_or(panel, CELL)
    m = compute_m(panel, orf)
    assert np.allclose(m, orf.coef[0] + orf.coef[1] * panel.z)


def test_fit_cell_assembles_sorted_subsample(panel):
    fs = fit_cell(panel, CELL)
    treated, control = subsample_masks(panel, CELL)
    assert fs.n <= (treated | control).sum()
    assert np.all(np.diff(fs.z) >= 0)
    # ties in z broken by original index: sub_idx strictly increasing there
    assert fs.g_ind.sum() == treated[fs.sub_idx].sum()
    assert np.allclose(fs.resid, fs.delta_y - fs.m_hat)


def test_fit_cell_overrides(panel):
    from drcatt.first_stage import OrFit
    zero_or = OrFit(coef=np.zeros(2))
    fs = fit_cell(panel, CELL, or_fit=zero_or)
    assert np.all(fs.m_hat == 0)
    assert np.allclose(fs.resid, fs.delta_y)


def test_fit_gps_requires_both_classes():
    p = simulate_panel(SimConfig(n=300, T=4), rep_rng(8, 0))
    with pytest.raises(NoControlUnitsError):
        fit_gps(p, GroupTimeCell(g=7, t=2))


def test_not_yet_variant_r_factor():
    """Not-yet-treated controls exclude group g and currently treated units."""
    panel = simulate_panel(SimConfig(n=2000, T=4), rep_rng(9, 0))
    cell = GroupTimeCell(g=2, t=2, control_mode=NOT_YET_TREATED)
    fs = fit_cell(panel, cell)
    groups = panel.group[fs.sub_idx]
    d_at_t = panel.treatment[:, panel.period_index(2)][fs.sub_idx]
    ctrl = fs.g_ind == 0
    assert np.all(d_at_t[ctrl] == 0)
    assert np.all(groups[ctrl] != 2)
