"""Three-step doubly robust CATT estimator and its standard errors.

Per evaluation point z the second stage fits the ratio denominators
mu_G(z) and mu_R(z) by p-th order LPR, builds the per-unit variable

    A_i(z) = (G_i / mu_G(z) - R_i / mu_R(z)) * (DeltaY_i - m_i),

and the third stage fits a p-th order LPR of {A_i(z)} at z.  The influence
variables E, F, B feed the residual-variance fit behind the standard error.
All regressions run over the cell's estimation subsample with a common
(p, h, kernel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .density import DensityFit
from .errors import CurveFailedError, DegenerateRatioError, DrcattError
from .first_stage import CellFirstStage
from .kernels import GAUSSIAN_WINDOW, KernelMoments, kernel_moments, kernel_weights
from .lpr import LprSpec, llr_smooth, lpr_fit
from .panel import GroupTimeCell

RATIO_FLOOR = 1e-6
SMOOTHER_MATRIX_LIMIT = 6000


@dataclass(frozen=True)
class ComponentVariables:
    """Per-unit intermediate variables at one evaluation point."""

    a_hat: np.ndarray
    e_hat: np.ndarray
    f_hat: np.ndarray
    b_hat: np.ndarray
    mu_g: float
    mu_r: float
    mu_e: float
    mu_f: float


def second_stage_ratios(fs: CellFirstStage, z: float, spec: LprSpec):
    """(mu_G, mu_R, mu_E, mu_F) at z.

    mu_G and mu_R use the same order p and bandwidth as the third stage;
    mu_E and mu_F are local linear fits at the same bandwidth.
    """
    mu_g = float(lpr_fit(fs.z, fs.g_ind, z, spec)[0])
    mu_r = float(lpr_fit(fs.z, fs.r_hat, z, spec)[0])
    if abs(mu_g) < RATIO_FLOOR or abs(mu_r) < RATIO_FLOOR:
        raise DegenerateRatioError(
            f"ratio denominator below {RATIO_FLOOR} at z={z} "
            f"(mu_G={mu_g:.3g}, mu_R={mu_r:.3g})")
    llr = LprSpec(p=1, h=spec.h, kernel=spec.kernel)
    e_hat = fs.r_hat * fs.resid
    f_hat = fs.g_ind * fs.resid
    mu_e = float(lpr_fit(fs.z, e_hat, z, llr)[0])
    mu_f = float(lpr_fit(fs.z, f_hat, z, llr)[0])
    return mu_g, mu_r, mu_e, mu_f


def component_variables(fs: CellFirstStage, z: float, spec: LprSpec) -> ComponentVariables:
    mu_g, mu_r, mu_e, mu_f = second_stage_ratios(fs, z, spec)
    a_hat = (fs.g_ind / mu_g - fs.r_hat / mu_r) * fs.resid
    e_hat = fs.r_hat * fs.resid
    f_hat = fs.g_ind * fs.resid
    b_hat = a_hat + (mu_e / mu_r ** 2) * fs.r_hat - (mu_f / mu_g ** 2) * fs.g_ind
    return ComponentVariables(a_hat=a_hat, e_hat=e_hat, f_hat=f_hat, b_hat=b_hat,
                              mu_g=mu_g, mu_r=mu_r, mu_e=mu_e, mu_f=mu_f)


def dr_at(fs: CellFirstStage, z: float, spec: LprSpec):
    """Point estimate and retained component variables at z."""
    cv = component_variables(fs, z, spec)
    est = float(lpr_fit(fs.z, cv.a_hat, z, spec)[0])
    return est, cv


def _kernel_window(kernel: str) -> float:
    return GAUSSIAN_WINDOW if kernel == "gaussian" else 1.0


def residual_variance(b_hat, zs, z, spec_v: LprSpec, mu_b_at_data=None) -> float:
    """sigma^2_B(z): local linear fit of squared residuals U^2 at z.

    U_i = B_i - mu_B(Z_i) with mu_B a local linear fit of B; only points
    inside the kernel window around z receive positive weight in the outer
    fit, so mu_B is evaluated there only.
    """
    zs = np.asarray(zs, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    win = _kernel_window(spec_v.kernel) * spec_v.h
    mask = np.abs(zs - z) <= win
    if mu_b_at_data is None:
        mu_b = llr_smooth(zs, b_hat, zs[mask], spec_v.h, spec_v.kernel)
    else:
        mu_b = np.asarray(mu_b_at_data, dtype=float)[mask]
    u2 = (b_hat[mask] - mu_b) ** 2
    val = float(lpr_fit(zs[mask], u2, z, spec_v)[0])
    return max(val, 0.0)


def variance_constant(p: int, sigma2: float, f_hat: float,
                      moments: KernelMoments) -> float:
    if p == 1:
        return sigma2 / f_hat * moments.i0k2
    if p == 2:
        num = (moments.i4k ** 2 * moments.i0k2
               - 2.0 * moments.i2k * moments.i4k * moments.i2k2
               + moments.i2k ** 2 * moments.i4k2)
        return sigma2 / f_hat * num / (moments.i4k - moments.i2k ** 2) ** 2
    raise ValueError(f"variance constant defined for p in {{1, 2}}, got {p}")


def standard_error(v_hat: float, n: int, h: float) -> float:
    if v_hat < 0:
        raise ValueError("variance constant must be nonnegative")
    return float(np.sqrt(v_hat / (n * h)))


def llr_weight_matrix(zs, h, kernel) -> np.ndarray:
    """Linear smoother matrix of the local linear fit evaluated at the data.

    Row i gives weights l_ij with mu_hat(Z_i) = sum_j l_ij Q_j.
    """
    zs = np.asarray(zs, dtype=float)
    d = zs[None, :] - zs[:, None]
    w = kernel_weights(d / h, kernel)
    wd = w * d
    s0 = w.sum(axis=1)
    s1 = wd.sum(axis=1)
    s2 = (wd * d).sum(axis=1)
    det = s0 * s2 - s1 * s1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (w * s2[:, None] - wd * s1[:, None]) / det[:, None]
        # isolated points have a singular local-linear fit; fall back to the
        # local mean there (such rows lie outside every evaluation window)
        bad = ~np.isfinite(det) | (det <= 0) | ~np.isfinite(out).all(axis=1)
        if bad.any():
            s0_safe = np.where(s0[bad] > 0, s0[bad], 1.0)
            out[bad] = w[bad] / s0_safe[:, None]
    return out


@dataclass
class DrCurve:
    """Point estimates and standard errors for one cell over a grid."""

    cell: GroupTimeCell
    spec: LprSpec
    grid: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    sigma2_b: np.ndarray
    f_hat: np.ndarray
    v_hat: np.ndarray
    n_eff: np.ndarray
    n_sub: int
    z_sub: np.ndarray = None
    sub_idx: np.ndarray = None
    a_hat_matrix: np.ndarray = None   # (n_sub, grid) for the bootstrap
    diagnostics: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "g": self.cell.g, "t": self.cell.t, "z": self.grid,
            "estimate": self.estimate, "se": self.se, "n_eff": self.n_eff,
        })

    def sidecar(self) -> dict:
        return {
            "g": self.cell.g, "t": self.cell.t, "delta": self.cell.delta,
            "control_mode": self.cell.control_mode,
            "p": self.spec.p, "h": self.spec.h, "kernel": self.spec.kernel,
            "n_sub": self.n_sub,
            "diagnostics": {k: v for k, v in self.diagnostics.items()},
        }


def default_grid(zs, n_points: int = 41) -> np.ndarray:
    """Equispaced grid over the interquartile range of Z."""
    q1, q3 = np.quantile(np.asarray(zs, dtype=float), [0.25, 0.75])
    return np.linspace(q1, q3, n_points)


def dr_curve(fs: CellFirstStage, grid, spec: LprSpec,
             spec_v: LprSpec | None = None,
             density: DensityFit | None = None,
             compute_se: bool = True,
             max_fail_frac: float = 0.2) -> DrCurve:
    """Assemble estimates and standard errors over a grid.

    The curve fails only if more than ``max_fail_frac`` of grid points fail;
    failed points carry NaN and their errors are listed in diagnostics.
    """
    grid = np.asarray(grid, dtype=float)
    m = grid.size
    if spec_v is None:
        spec_v = LprSpec(p=1, h=spec.h, kernel=spec.kernel)
    if density is None and compute_se:
        density = DensityFit.from_sample(fs.z, kernel=spec.kernel)

    est = np.full(m, np.nan)
    se = np.full(m, np.nan)
    sigma2 = np.full(m, np.nan)
    fvals = np.full(m, np.nan)
    vvals = np.full(m, np.nan)
    n_eff = np.zeros(m, dtype=int)
    a_mat = np.full((fs.n, m), np.nan) if compute_se else None
    point_errors = []
    moments = kernel_moments(spec.kernel)

    mu_b_smoother = None
    if compute_se and fs.n <= SMOOTHER_MATRIX_LIMIT:
        mu_b_smoother = llr_weight_matrix(fs.z, spec_v.h, spec_v.kernel)

    win = _kernel_window(spec.kernel) * spec.h
    for j, z in enumerate(grid):
        try:
            e, cv = dr_at(fs, z, spec)
            est[j] = e
            n_eff[j] = int(np.count_nonzero(np.abs(fs.z - z) <= win))
            if compute_se:
                a_mat[:, j] = cv.a_hat
                mu_b_at = mu_b_smoother @ cv.b_hat if mu_b_smoother is not None else None
                sigma2[j] = residual_variance(cv.b_hat, fs.z, z, spec_v,
                                              mu_b_at_data=mu_b_at)
                fvals[j] = density.pdf(z)
                vvals[j] = variance_constant(spec.p, sigma2[j], fvals[j], moments)
                se[j] = standard_error(vvals[j], fs.n, spec.h)
        except DrcattError as exc:
            point_errors.append((float(z), repr(exc)))

    if len(point_errors) > max_fail_frac * m:
        raise CurveFailedError(
            f"{len(point_errors)}/{m} grid points failed", point_errors)

    diagnostics = {"point_errors": point_errors,
                   "density_floors_hit": density.floors_hit if density else 0}
    return DrCurve(cell=fs.cell, spec=spec, grid=grid, estimate=est, se=se,
                   sigma2_b=sigma2, f_hat=fvals, v_hat=vvals, n_eff=n_eff,
                   n_sub=fs.n, z_sub=fs.z, sub_idx=fs.sub_idx,
                   a_hat_matrix=a_mat, diagnostics=diagnostics)


def ipw_or_curves(fs: CellFirstStage, grid, spec: LprSpec):
    """Conditional IPW and OR analogue curves, for cross-validation.

    IPW drops the OR fit (m = 0); OR drops the reweighting bracket's R term.
    """
    grid = np.asarray(grid, dtype=float)
    ipw = np.full(grid.size, np.nan)
    orc = np.full(grid.size, np.nan)
    for j, z in enumerate(grid):
        mu_g, mu_r, _, _ = second_stage_ratios(fs, z, spec)
        bracket = fs.g_ind / mu_g - fs.r_hat / mu_r
        ipw[j] = float(lpr_fit(fs.z, bracket * fs.delta_y, z, spec)[0])
        orc[j] = float(lpr_fit(fs.z, (fs.g_ind / mu_g) * fs.resid, z, spec)[0])
    return ipw, orc
