"""Cell-mean DR estimator for a finite-support covariate.

With a discrete Z the second and third stages collapse to within-cell
means:

    DR(z) = E_n[(G / E_n[G|z] - R / E_n[R|z]) * (DeltaY - m) | Z = z].

Inference is by multiplier bootstrap only: bootstrap residuals
R*(z) = DR*(z) - DR(z) yield an IQR-based standard error and a max-t
statistic whose empirical quantile calibrates the band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .bands import CriticalValue, draw_weights, empirical_quantile, weight_rng
from .errors import DegenerateCellRatioError, EmptyCellError, ZeroIQRError
from .first_stage import CellFirstStage
from .panel import GroupTimeCell

# interquartile width of the standard normal
NORMAL_IQR = float(ndtri(0.75) - ndtri(0.25))


@dataclass
class DiscreteCurve:
    cell: GroupTimeCell
    support: np.ndarray
    estimate: np.ndarray
    counts: np.ndarray
    se_tilde: np.ndarray = None
    critical: CriticalValue = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        data = {"g": self.cell.g, "t": self.cell.t, "z": self.support,
                "estimate": self.estimate, "n_z": self.counts}
        if self.se_tilde is not None:
            data.update(se=self.se_tilde, lower=self.lower, upper=self.upper,
                        critical=self.critical.value, method="discrete-boot")
        return pd.DataFrame(data)


def _cell_summand(fs: CellFirstStage, support, counts):
    """Per-unit summand of DR(z) for each support value, as an (J, n) array."""
    psi = fs.resid
    rows = []
    for z, nz in zip(support, counts):
        mask = fs.z == z
        eg = fs.g_ind[mask].sum() / nz
        er = fs.r_hat[mask].sum() / nz
        if eg == 0.0 or er == 0.0:
            raise DegenerateCellRatioError(
                f"cell mean of G or R vanishes at z={z}")
        rows.append(np.where(mask, (fs.g_ind / eg - fs.r_hat / er) * psi, 0.0))
    return np.asarray(rows)


def discrete_dr(fs: CellFirstStage) -> DiscreteCurve:
    support, counts = np.unique(fs.z, return_counts=True)
    if np.any(counts < 2):
        raise EmptyCellError(
            f"support points with fewer than 2 observations: "
            f"{support[counts < 2].tolist()}")
    summand = _cell_summand(fs, support, counts)
    est = summand.sum(axis=1) / counts
    return DiscreteCurve(cell=fs.cell, support=support, estimate=est,
                         counts=counts)


def discrete_bootstrap_band(fs, alpha: float, reps: int,
                            kind: str = "mammen", seed: int = 0,
                            scope: str = "z", panel_n: int = None):
    """Band via weighted cell means; see module docstring.

    Bootstrap weights enter both the numerator and the cell count
    n*(z) = sum_i V_i 1{Z_i = z}.  Repetitions where any in-scope cell has
    n*(z) <= 0 (possible only with unbounded weight kinds) are dropped from
    the quantile, with a count reported.

    ``fs`` is a single CellFirstStage or, for the joint (g, t, z) scope, a
    list of them sharing one panel; the max-t statistic then runs over all
    cells and the shared critical value is applied to each band.  Returns a
    DiscreteCurve, or a list of them when a list was passed.
    """
    if reps < 50:
        raise ValueError("the IQR-based SE needs at least 50 repetitions")
    single = isinstance(fs, CellFirstStage)
    fs_list = [fs] if single else list(fs)

    if panel_n is None:
        panel_n = max(int(f.sub_idx.max()) + 1 for f in fs_list)
    v_panel = np.empty((reps, panel_n))
    for b in range(reps):
        v_panel[b] = draw_weights(kind, panel_n, weight_rng(seed, b))

    bases, resids, ses, valid = [], [], [], np.ones(reps, dtype=bool)
    for f in fs_list:
        base = discrete_dr(f)
        summand = _cell_summand(f, base.support, base.counts)   # (J, n)
        indicator = (base.support[:, None] == f.z[None, :]).astype(float)
        v = v_panel[:, f.sub_idx]                               # (B, n)
        n_star = v @ indicator.T                                # (B, J)
        num = v @ summand.T
        valid &= (n_star > 0).all(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            resid = num / n_star - base.estimate[None, :]
        bases.append(base)
        resids.append(resid)

    n_dropped = int((~valid).sum())
    if not valid.any():
        raise ZeroIQRError("all bootstrap repetitions degenerate")

    max_t = np.zeros(int(valid.sum()))
    for base, resid in zip(bases, resids):
        r = resid[valid]
        q25, q75 = np.quantile(r, [0.25, 0.75], axis=0)
        se_tilde = (q75 - q25) / NORMAL_IQR
        if np.any(se_tilde <= 0):
            raise ZeroIQRError(
                f"zero bootstrap IQR at z={base.support[se_tilde <= 0].tolist()}")
        ses.append(se_tilde)
        np.maximum(max_t, np.abs(r / se_tilde[None, :]).max(axis=1), out=max_t)

    c_tilde = empirical_quantile(max_t, 1.0 - alpha)
    critical = CriticalValue(value=c_tilde, method="bootstrap", alpha=alpha,
                             reps=int(valid.sum()), scope=scope)
    out = []
    for base, se_tilde in zip(bases, ses):
        half = c_tilde * se_tilde
        out.append(DiscreteCurve(
            cell=base.cell, support=base.support, estimate=base.estimate,
            counts=base.counts, se_tilde=se_tilde, critical=critical,
            lower=base.estimate - half, upper=base.estimate + half,
            diagnostics={"dropped_reps": n_dropped}))
    return out[0] if single else out
