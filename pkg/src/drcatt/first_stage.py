"""Parametric first stage: logit GPS and least-squares outcome regression.

For a cell (g, t, delta) the estimation subsample consists of group-g units
plus the control pool (never-treated units, or units untreated as of
t + delta).  The GPS is a binary logit of group membership on (1, Z, X_sub)
within that subsample; the OR function is OLS of
Delta Y = Y_t - Y_{g - delta - 1} on (1, Z, X_sub) over the controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyControlSampleError,
    NoControlUnitsError,
    NoConvergenceError,
    OverlapViolationError,
    PerfectSeparationError,
    RankDeficientError,
    SingularDesignError,
)
from .panel import NEVER_TREATED, NOT_YET_TREATED, GroupTimeCell, PanelData

LOGIT_TOL = 1e-10
LOGIT_MAX_ITER = 100
DEFAULT_TRIM = 0.005


@dataclass(frozen=True)
class GpsFit:
    coef: np.ndarray
    n_treated: int
    n_control: int
    converged: bool
    iterations: int


@dataclass(frozen=True)
class OrFit:
    coef: np.ndarray


def fit_logit(design: np.ndarray, y: np.ndarray,
              tol: float = LOGIT_TOL, max_iter: int = LOGIT_MAX_ITER) -> GpsFit:
    """Newton-Raphson logit MLE with step-halving.

    Convergence is declared on the max-norm of the score scaled by n.
    """
    n, k = design.shape
    if np.linalg.matrix_rank(design) < k:
        raise SingularDesignError("logit design matrix is rank deficient")
    beta = np.zeros(k)

    def loglik(b):
        eta = design @ b
        # log(1 + e^eta) computed stably
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    ll = loglik(beta)
    for it in range(1, max_iter + 1):
        eta = design @ beta
        with np.errstate(over="ignore"):
            p = 1.0 / (1.0 + np.exp(-eta))
        grad = design.T @ (y - p)
        if np.max(np.abs(grad)) / n < tol:
            if ll > -1e-6 * n:
                # a zero-deviance optimum is only reachable with separable
                # classes, where the true MLE diverges
                raise PerfectSeparationError(
                    "perfectly separated classes (zero deviance)")
            return GpsFit(coef=beta, n_treated=int(y.sum()),
                          n_control=int(n - y.sum()), converged=True, iterations=it - 1)
        wdiag = p * (1.0 - p)
        hess = design.T @ (design * wdiag[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise PerfectSeparationError(
                "singular logit Hessian; likelihood may be unbounded") from None
        # step-halving line search on the log-likelihood
        scale = 1.0
        for _ in range(50):
            cand = beta + scale * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        ll = max(ll, ll_new)
        if np.linalg.norm(beta) > 1e4:
            raise PerfectSeparationError(
                "diverging logit coefficients; classes may be separable")
    raise NoConvergenceError(f"logit did not converge in {max_iter} iterations")


def subsample_masks(panel: PanelData, cell: GroupTimeCell):
    """(treated, control) indicator arrays over the full panel."""
    treated = panel.group == cell.g
    if cell.control_mode == NEVER_TREATED:
        control = panel.never_mask
    elif cell.control_mode == NOT_YET_TREATED:
        s = cell.t + cell.delta
        idx = panel.period_index(s)
        control = (panel.treatment[:, idx] == 0) & ~treated
    else:
        raise ValueError(f"unknown control mode: {cell.control_mode!r}")
    return treated, control


def delta_outcome(panel: PanelData, cell: GroupTimeCell) -> np.ndarray:
    """Y_t - Y_{g - delta - 1} for every unit."""
    it = panel.period_index(cell.t)
    ib = panel.period_index(cell.base_period)
    return panel.outcome[:, it] - panel.outcome[:, ib]


def fit_gps(panel: PanelData, cell: GroupTimeCell) -> GpsFit:
    treated, control = subsample_masks(panel, cell)
    sub = treated | control
    if not treated.any() or not control.any():
        raise NoControlUnitsError(
            f"cell (g={cell.g}, t={cell.t}): both classes required in the "
            f"GPS subsample (treated={int(treated.sum())}, "
            f"controls={int(control.sum())})")
    x = panel.covariates()[sub]
    design = np.column_stack([np.ones(x.shape[0]), x])
    return fit_logit(design, treated[sub].astype(float))


def fit_or(panel: PanelData, cell: GroupTimeCell) -> OrFit:
    _, control = subsample_masks(panel, cell)
    if not control.any():
        raise EmptyControlSampleError(f"cell (g={cell.g}, t={cell.t}): no controls")
    x = panel.covariates()[control]
    design = np.column_stack([np.ones(x.shape[0]), x])
    dy = delta_outcome(panel, cell)[control]
    coef, _, rank, _ = np.linalg.lstsq(design, dy, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficientError("outcome regression design is rank deficient")
    return OrFit(coef=coef)


def gps_probabilities(panel: PanelData, gps: GpsFit) -> np.ndarray:
    design = np.column_stack([np.ones(panel.n_units), panel.covariates()])
    return 1.0 / (1.0 + np.exp(-(design @ gps.coef)))


def compute_R(panel: PanelData, cell: GroupTimeCell, gps: GpsFit,
              trim: float = DEFAULT_TRIM, on_violation: str = "trim"):
    """Per-unit R_hat and the kept-mask after overlap trimming.

    R_hat_i = p_hat(X_i) * ctrl_i / (1 - p_hat(X_i)), identically zero off
    the control pool.  Control units with p_hat >= 1 - trim violate overlap
    and are either dropped for this cell (``trim``) or fatal (``error``).
    """
    _, control = subsample_masks(panel, cell)
    p = gps_probabilities(panel, gps)
    violated = control & (p >= 1.0 - trim)
    if violated.any():
        if on_violation == "error":
            raise OverlapViolationError(
                f"{int(violated.sum())} control units with p_hat >= {1 - trim}")
        control = control & ~violated
    r = np.zeros(panel.n_units)
    r[control] = p[control] / (1.0 - p[control])
    kept = ~violated
    return r, kept


def compute_m(panel: PanelData, or_fit: OrFit) -> np.ndarray:
    """Fitted OR values (1, X_i)' beta_hat for every unit."""
    design = np.column_stack([np.ones(panel.n_units), panel.covariates()])
    return design @ or_fit.coef


@dataclass(frozen=True)
class CellFirstStage:
    """All per-unit first-stage ingredients for one cell.

    Arrays are indexed over the cell's estimation subsample, sorted by
    (Z, original index) so downstream summations are order-reproducible.
    ``sub_idx`` maps back into the full panel.
    """

    cell: GroupTimeCell
    gps: GpsFit
    or_fit: OrFit
    sub_idx: np.ndarray       # indices into the panel, sorted by (Z, index)
    z: np.ndarray             # covariate on the subsample
    g_ind: np.ndarray         # 1{G_i = g}
    r_hat: np.ndarray
    m_hat: np.ndarray
    delta_y: np.ndarray

    @property
    def n(self) -> int:
        return self.sub_idx.size

    @property
    def resid(self) -> np.ndarray:
        return self.delta_y - self.m_hat


def fit_cell(panel: PanelData, cell: GroupTimeCell,
             trim: float = DEFAULT_TRIM, on_violation: str = "trim",
             or_fit: OrFit | None = None,
             gps: GpsFit | None = None) -> CellFirstStage:
    """Run the full first stage for a cell.

    ``or_fit`` / ``gps`` overrides support misspecification experiments
    (e.g. a zero OR fit) without re-fitting.
    """
    if gps is None:
        gps = fit_gps(panel, cell)
    if or_fit is None:
        or_fit = fit_or(panel, cell)
    treated, _ = subsample_masks(panel, cell)
    r_full, kept = compute_R(panel, cell, gps, trim=trim, on_violation=on_violation)
    m_full = compute_m(panel, or_fit)
    dy_full = delta_outcome(panel, cell)

    _, control = subsample_masks(panel, cell)
    sub = (treated | control) & kept
    idx = np.flatnonzero(sub)
    order = np.lexsort((idx, panel.z[idx]))
    idx = idx[order]
    return CellFirstStage(cell=cell, gps=gps, or_fit=or_fit, sub_idx=idx,
                          z=panel.z[idx], g_ind=treated[idx].astype(float),
                          r_hat=r_full[idx], m_hat=m_full[idx],
                          delta_y=dy_full[idx])
