"""Doubly robust conditional ATT curves for staggered adoption panels.

Point estimation by a three-step local polynomial pipeline, uniform
confidence bands (analytic, Gumbel, multiplier bootstrap), plug-in
bandwidth selection, a finite-support covariate variant, and a Monte
Carlo harness.
"""

from .bands import (CriticalValue, UniformBand, analytic_critical_value,
                    assemble_band, bootstrap_critical_value,
                    gumbel_critical_value)
from .bandwidth import (BandwidthReport, global_bandwidth, imse_bandwidth,
                        select_bandwidths, undersmoothed_bandwidths)
from .density import DensityFit, kde, silverman_bandwidth
from .discrete import DiscreteCurve, discrete_bootstrap_band, discrete_dr
from .errors import DrcattError
from .estimator import (DrCurve, default_grid, dr_at, dr_curve,
                        ipw_or_curves)
from .first_stage import CellFirstStage, fit_cell, fit_gps, fit_or
from .kernels import KernelMoments, kernel_moments
from .lpr import LprSpec, llr_smooth, lpr_curve, lpr_fit, lpr_mu
from .panel import (GroupTimeCell, PanelData, enumerate_cells, load_panel,
                    validate_staggered)
from .simulate import (EstimatorArm, McReport, SimConfig, rep_rng,
                       run_monte_carlo, simulate_panel, true_catt)

__version__ = "0.1.0"

__all__ = [
    "BandwidthReport", "CellFirstStage", "CriticalValue", "DensityFit",
    "DiscreteCurve", "DrCurve", "DrcattError", "EstimatorArm",
    "GroupTimeCell", "KernelMoments", "LprSpec", "McReport", "PanelData",
    "SimConfig", "UniformBand", "analytic_critical_value", "assemble_band",
    "bootstrap_critical_value", "default_grid", "discrete_bootstrap_band",
    "discrete_dr", "dr_at", "dr_curve", "enumerate_cells", "fit_cell",
    "fit_gps", "fit_or", "global_bandwidth", "gumbel_critical_value",
    "imse_bandwidth", "ipw_or_curves", "kde", "kernel_moments", "llr_smooth",
    "load_panel", "lpr_curve", "lpr_fit", "lpr_mu", "rep_rng",
    "run_monte_carlo",
    "select_bandwidths", "silverman_bandwidth", "simulate_panel", "true_catt",
    "undersmoothed_bandwidths", "validate_staggered",
]
