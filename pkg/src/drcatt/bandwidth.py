"""Plug-in bias constants, IMSE-optimal bandwidth, and the operational rules.

The feasible bandwidths are

    h1(g, t) = h_imse(1, g, t) * n^{1/5} * n^{-2/7}   (local linear)
    h2(g, t) = h_imse(1, g, t)                        (local quadratic)

where h_imse uses plug-in estimates of the integrated variance and squared
bias constants over the evaluation grid.  Derivative pilots fit order
nu + 1 polynomials at a rule-of-thumb bandwidth sd(Z) * n^{-1/7}; the
variance pilot pass runs the full component pipeline at sd(Z) * n^{-1/5}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import DensityFit
from .errors import DrcattError, ZeroBiasError
from .estimator import component_variables, residual_variance, variance_constant
from .first_stage import CellFirstStage
from .kernels import KernelMoments, kernel_moments
from .lpr import LprSpec, lpr_mu
from .panel import GroupTimeCell

ZERO_BIAS_TOL = 1e-12


@dataclass(frozen=True)
class BandwidthReport:
    cell: GroupTimeCell
    h_imse_p1: float
    h1: float
    h2: float
    pilot_h: float
    int_v: float
    int_b2: float
    fallback: bool = False

    def as_dict(self) -> dict:
        return {"g": self.cell.g, "t": self.cell.t,
                "h_imse_p1": self.h_imse_p1, "h1": self.h1, "h2": self.h2,
                "pilot_h": self.pilot_h, "int_v": self.int_v,
                "int_b2": self.int_b2, "fallback": self.fallback}


def zeta(p: int) -> int:
    if p == 1:
        return 2
    if p == 2:
        return 4
    raise ValueError(f"zeta defined for p in {{1, 2}}, got {p}")


def derivative_pilot_bandwidth(zs) -> float:
    zs = np.asarray(zs, dtype=float)
    sd = float(zs.std(ddof=1)) if zs.size > 1 else 1.0
    return sd * zs.size ** (-1.0 / 7.0)


def rule_of_thumb_bandwidth(zs) -> float:
    zs = np.asarray(zs, dtype=float)
    sd = float(zs.std(ddof=1)) if zs.size > 1 else 1.0
    return sd * zs.size ** (-1.0 / 5.0)


def bias_constant(p: int, z: float, b_hat, zs, density: DensityFit,
                  moments: KernelMoments, pilot_h: float,
                  kernel: str = "gaussian") -> float:
    """Plug-in bias constant B_p(z) from derivative pilots of mu_B."""
    def deriv(nu):
        spec = LprSpec(p=nu + 1, h=pilot_h, kernel=kernel)
        return lpr_mu(zs, b_hat, z, spec, nu=nu)

    if p == 1:
        return 0.5 * deriv(2) * moments.i2k
    if p == 2:
        f = density.pdf(z)
        f1 = density.pdf_deriv(z)
        factor = (moments.i4k ** 2 - moments.i2k * moments.i6k) \
            / (moments.i4k - moments.i2k ** 2)
        return (2.0 * deriv(3) * f1 + deriv(4) * f) * factor / (24.0 * f)
    raise ValueError(f"bias constant defined for p in {{1, 2}}, got {p}")


def imse_bandwidth(p: int, v_grid, b_grid, grid, n: int,
                   zs=None, fallback: str = "rule-of-thumb"):
    """((int V) / (2 zeta(p) int B^2))^{1/(2 zeta + 1)} n^{-1/(2 zeta + 1)}.

    Returns (h, used_fallback).  A vanishing integrated squared bias makes
    the argmin unbounded; the rule-of-thumb bandwidth is substituted then.
    """
    grid = np.asarray(grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    b_grid = np.asarray(b_grid, dtype=float)
    order = np.argsort(grid, kind="stable")
    grid, v_grid, b_grid = grid[order], v_grid[order], b_grid[order]
    int_v = float(np.trapezoid(v_grid, grid))
    int_b2 = float(np.trapezoid(b_grid ** 2, grid))
    zp = zeta(p)
    if int_b2 < ZERO_BIAS_TOL:
        if fallback == "error" or zs is None:
            raise ZeroBiasError("integrated squared bias is numerically zero")
        return rule_of_thumb_bandwidth(zs), True, int_v, int_b2
    h = (int_v / (2.0 * zp * int_b2)) ** (1.0 / (2 * zp + 1)) \
        * n ** (-1.0 / (2 * zp + 1))
    return h, False, int_v, int_b2


def undersmoothed_bandwidths(h_imse_p1: float, n: int) -> tuple[float, float]:
    h1 = h_imse_p1 * n ** (1.0 / 5.0) * n ** (-2.0 / 7.0)
    h2 = h_imse_p1
    return h1, h2


def global_bandwidth(reports: list[BandwidthReport], p: int) -> float:
    if not reports:
        raise ValueError("at least one bandwidth report required")
    if p == 1:
        return min(r.h1 for r in reports)
    if p == 2:
        return min(r.h2 for r in reports)
    raise ValueError(f"p must be 1 or 2, got {p}")


def select_bandwidths(fs: CellFirstStage, grid, kernel: str = "gaussian",
                      n: int = None) -> BandwidthReport:
    """Plug-in pass producing h1 and h2 for one cell.

    Runs the component pipeline at the rule-of-thumb pilot bandwidth to get
    sigma^2_B and B_hat on the grid, then assembles the p = 1 IMSE bandwidth.
    ``n`` is the sample size entering the n^{-1/(2 zeta + 1)} rate (the panel
    size when known); pilot bandwidths always use the estimation subsample.
    """
    grid = np.asarray(grid, dtype=float)
    if n is None:
        n = fs.n
    pilot_h = rule_of_thumb_bandwidth(fs.z)
    pilot = LprSpec(p=1, h=pilot_h, kernel=kernel)
    deriv_h = derivative_pilot_bandwidth(fs.z)
    density = DensityFit.from_sample(fs.z, kernel=kernel)
    moments = kernel_moments(kernel)

    v_grid = np.full(grid.size, np.nan)
    b_grid = np.full(grid.size, np.nan)
    for j, z in enumerate(grid):
        try:
            cv = component_variables(fs, z, pilot)
            s2 = residual_variance(cv.b_hat, fs.z, z, pilot)
            v_grid[j] = variance_constant(1, s2, density.pdf(z), moments)
            b_grid[j] = bias_constant(1, z, cv.b_hat, fs.z, density, moments,
                                      deriv_h, kernel=kernel)
        except DrcattError:
            continue
    ok = np.isfinite(v_grid) & np.isfinite(b_grid)
    if ok.sum() < max(2, grid.size // 2):
        raise ZeroBiasError("too few grid points usable for bandwidth selection")
    h_imse, fb, int_v, int_b2 = imse_bandwidth(
        1, v_grid[ok], b_grid[ok], grid[ok], n, zs=fs.z)
    h1, h2 = undersmoothed_bandwidths(h_imse, n)
    return BandwidthReport(cell=fs.cell, h_imse_p1=h_imse, h1=h1, h2=h2,
                           pilot_h=pilot_h, int_v=int_v, int_b2=int_b2,
                           fallback=fb)
