"""Synthetic staggered-adoption panels and the Monte Carlo harness.

The continuous design draws Z ~ N(0, 1), assigns groups by a multinomial
logit over {never, 2, ..., T} with index Z * 0.5 g / T, and builds outcomes

    Y_t(0) = delta_t + eta + Z * beta_t(0) + u_t,   delta_t = beta_t(0) = t,
    Y_t(g) = Y_t(0) + Z * (g / T) + (t - g + 1) + (v_t - u_t),

with eta | G ~ N(G, 1) (0 for never) and u, v iid N(0, 1).  Treated
potential outcomes apply from t >= g.  The true conditional effect is

    catt(g, t, z) = z * g / T + (t - g + 1).

The discrete design replaces Z by a uniform draw on {-1, 0, 1}.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from .bands import (analytic_critical_value, bootstrap_critical_value,
                    gumbel_critical_value)
from .bandwidth import select_bandwidths
from .discrete import discrete_bootstrap_band
from .errors import BandwidthTooLargeError, DrcattError
from .estimator import dr_curve
from .first_stage import OrFit, fit_cell, fit_gps
from .kernels import kernel_moments
from .lpr import LprSpec
from .panel import NEVER, NEVER_TREATED, GroupTimeCell, PanelData

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True)
class SimConfig:
    """Design parameters of the synthetic panel.

    ``confounding`` adds a second covariate X2 ~ N(0, 1) that enters both
    the group-choice index (as Z + confounding * X2) and the outcome trend
    (as confounding * X2 * t).  With it on, parallel trends holds given
    (Z, X2) but not given Z alone, so the first-stage models genuinely
    matter; the treatment effect itself does not involve X2 and true_catt
    is unchanged.  Zero recovers the baseline design.
    """

    n: int
    T: int = 4
    covariate_kind: str = CONTINUOUS
    gamma_scale: float = 0.5
    confounding: float = 0.0

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.n < 50:
            raise ValueError("n must be >= 50")


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(rep,)))


def rep_subseed(seed: int, rep: int, tag: int) -> int:
    """Derived integer seed for a nested randomization (e.g. the bootstrap)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep, tag))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def true_catt(cfg: SimConfig, g: int, t: int, z) -> np.ndarray:
    return np.asarray(z, dtype=float) * g / cfg.T + (t - g + 1)


def simulate_panel(cfg: SimConfig, rng: np.random.Generator) -> PanelData:
    n, T = cfg.n, cfg.T
    if cfg.covariate_kind == CONTINUOUS:
        z = rng.standard_normal(n)
    elif cfg.covariate_kind == DISCRETE:
        z = np.array([-1.0, 0.0, 1.0])[rng.integers(0, 3, size=n)]
    else:
        raise ValueError(f"unknown covariate kind: {cfg.covariate_kind!r}")

    if cfg.confounding != 0.0:
        x2 = rng.standard_normal(n)
        index = z + cfg.confounding * x2
        x_sub = x2[:, None]
    else:
        index = z
        x_sub = np.empty((n, 0))

    cand = np.array([0] + list(range(2, T + 1)))      # 0 = never treated
    gamma = cfg.gamma_scale * cand / T
    logits = index[:, None] * gamma[None, :]
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    u_draw = rng.random(n)
    g_num = cand[(probs.cumsum(axis=1) > u_draw[:, None]).argmax(axis=1)]

    eta = g_num + rng.standard_normal(n)
    u_mat = rng.standard_normal((n, T))
    v_mat = rng.standard_normal((n, T))
    t_arr = np.arange(1, T + 1)

    y0 = t_arr[None, :] + eta[:, None] + z[:, None] * t_arr[None, :] + u_mat
    if cfg.confounding != 0.0:
        y0 = y0 + cfg.confounding * x2[:, None] * t_arr[None, :]
    treated_now = (g_num[:, None] > 0) & (t_arr[None, :] >= g_num[:, None])
    effect = (z[:, None] * (g_num[:, None] / T)
              + (t_arr[None, :] - g_num[:, None] + 1)
              + (v_mat - u_mat))
    y = np.where(treated_now, y0 + effect, y0)
    d = treated_now.astype(np.int8)
    group = np.where(g_num == 0, NEVER, g_num).astype(float)

    return PanelData(unit_ids=np.arange(n), periods=t_arr.copy(), outcome=y,
                     treatment=d, group=group, z=z, x_sub=x_sub)


@dataclass(frozen=True)
class EstimatorArm:
    """One estimator/band configuration evaluated per replication."""

    name: str
    p: int = 2
    band: str = "bootstrap"       # bootstrap | analytic | gumbel |
                                  # discrete-boot | degenerate (self-test)
    bandwidth: str | float = "h2"  # h1 | h2 | rot | explicit value
    boot_reps: int = 500
    weights: str = "mammen"
    alpha: float = 0.05
    critical_scale: float = 1.0
    or_misspec: bool = False
    gps_misspec: bool = False


@dataclass
class McReport:
    arm: str
    cell: GroupTimeCell
    grid: np.ndarray
    bias: np.ndarray
    rmse: np.ndarray
    pwcp: np.ndarray
    ucp: float
    length: np.ndarray
    reps: int
    failed: int
    runtime: float
    undefined_bands: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "g": self.cell.g, "t": self.cell.t, "z": self.grid,
            "bias": self.bias, "rmse": self.rmse, "pwcp": self.pwcp,
            "ucp": self.ucp, "length": self.length,
        })

    def summary(self) -> dict:
        return {"arm": self.arm, "g": self.cell.g, "t": self.cell.t,
                "ucp": self.ucp, "max_abs_bias": float(np.max(np.abs(self.bias))),
                "reps": self.reps, "failed": self.failed,
                "runtime_sec": self.runtime}


def _garbled_gps(panel: PanelData, cell: GroupTimeCell,
                 rng: np.random.Generator):
    """GPS fit on shuffled covariates: wrong model, valid probabilities."""
    perm = rng.permutation(panel.n_units)
    garbled = replace(panel, z=panel.z[perm], x_sub=panel.x_sub[perm])
    return fit_gps(garbled, cell)


def _one_rep(cfg: SimConfig, arms, cell: GroupTimeCell, grid,
             seed: int, rep: int):
    """Returns {arm name: (err, cover, length) or exception repr}."""
    rng = rep_rng(seed, rep)
    panel = simulate_panel(cfg, rng)
    truth = true_catt(cfg, cell.g, cell.t, grid)
    out = {}

    needs_clean = any(not (a.or_misspec or a.gps_misspec) for a in arms)
    fs_clean = None
    bw_report = None
    if needs_clean and cfg.covariate_kind == CONTINUOUS:
        try:
            fs_clean = fit_cell(panel, cell)
            if any(a.bandwidth in ("h1", "h2") for a in arms):
                bw_report = select_bandwidths(fs_clean, grid, n=panel.n_units)
        except DrcattError as exc:
            for a in arms:
                out[a.name] = repr(exc)
            return out
    elif needs_clean:
        try:
            fs_clean = fit_cell(panel, cell)
        except DrcattError as exc:
            for a in arms:
                out[a.name] = repr(exc)
            return out

    for arm in arms:
        try:
            out[arm.name] = _run_arm(cfg, arm, panel, cell, grid, truth,
                                     fs_clean, bw_report, seed, rep, rng)
        except DrcattError as exc:
            out[arm.name] = repr(exc)
    return out


def _resolve_fs(arm, panel, cell, fs_clean, rng):
    if not (arm.or_misspec or arm.gps_misspec):
        return fs_clean
    or_fit = None
    gps = None
    if arm.or_misspec:
        k = panel.covariates().shape[1] + 1
        or_fit = OrFit(coef=np.zeros(k))
    if arm.gps_misspec:
        gps = _garbled_gps(panel, cell, rng)
    return fit_cell(panel, cell, or_fit=or_fit, gps=gps)


def _run_arm(cfg, arm, panel, cell, grid, truth, fs_clean, bw_report,
             seed, rep, rng):
    if arm.band == "degenerate":
        # harness self-test: estimate = truth, se = 1, critical = 2
        err = np.zeros_like(truth)
        cover = np.ones_like(truth, dtype=bool)
        return err, cover, np.full_like(truth, 4.0)

    fs = _resolve_fs(arm, panel, cell, fs_clean, rng)

    if cfg.covariate_kind == DISCRETE or arm.band == "discrete-boot":
        dc = discrete_bootstrap_band(
            fs, alpha=arm.alpha, reps=arm.boot_reps, kind=arm.weights,
            seed=rep_subseed(seed, rep, 1), panel_n=panel.n_units)
        if not np.array_equal(dc.support, np.asarray(grid, dtype=float)):
            raise DrcattError(
                f"observed support {dc.support} differs from grid")
        err = dc.estimate - truth
        half = arm.critical_scale * (dc.upper - dc.lower) / 2.0
        cover = np.abs(err) <= half
        return err, cover, 2.0 * half

    if arm.bandwidth == "h1":
        h = bw_report.h1
    elif arm.bandwidth == "h2":
        h = bw_report.h2
    elif arm.bandwidth == "rot":
        from .bandwidth import rule_of_thumb_bandwidth
        h = rule_of_thumb_bandwidth(fs.z)
    else:
        h = float(arm.bandwidth)
    spec = LprSpec(p=arm.p, h=h)
    compute_se = arm.band != "none"
    curve = dr_curve(fs, grid, spec, compute_se=compute_se)
    err = curve.estimate - truth
    if arm.band == "none":
        return err, np.zeros_like(err, dtype=bool), np.zeros_like(err)

    if arm.band == "bootstrap":
        crit = bootstrap_critical_value(
            curve, alpha=arm.alpha, reps=arm.boot_reps, kind=arm.weights,
            seed=rep_subseed(seed, rep, 1), panel_n=panel.n_units)
    else:
        moments = kernel_moments(spec.kernel)
        a, b = float(grid[0]), float(grid[-1])
        try:
            crit = analytic_critical_value(arm.alpha, a, b, h, moments.lam)
        except BandwidthTooLargeError:
            # the band does not exist at this (b - a)/h: score it as a
            # non-covering replication rather than a failed one
            return (err, np.zeros_like(err, dtype=bool),
                    np.full_like(err, np.nan))
        if arm.band == "gumbel":
            crit = gumbel_critical_value(arm.alpha, crit.a_n)
    half = arm.critical_scale * crit.value * curve.se
    cover = np.abs(err) <= half
    return err, cover, 2.0 * half


def run_monte_carlo(cfg: SimConfig, arms, reps: int, seed: int = 0,
                    cell: GroupTimeCell = None, grid=None, threads: int = 1,
                    max_fail_frac: float = 0.02) -> dict:
    """Monte Carlo loop; returns {arm name: McReport}.

    Replications are independent with per-rep RNG streams derived from
    (seed, rep), so results are identical at any worker count.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if cell is None:
        cell = GroupTimeCell(g=2, t=2, delta=0, control_mode=NEVER_TREATED)
    if grid is None:
        if cfg.covariate_kind == DISCRETE:
            grid = np.array([-1.0, 0.0, 1.0])
        else:
            grid = np.round(np.arange(-1.0, 1.0001, 0.1), 10)
    grid = np.asarray(grid, dtype=float)
    arms = list(arms)

    start = time.perf_counter()
    results = [None] * reps
    if threads <= 1:
        for r in range(reps):
            results[r] = _one_rep(cfg, arms, cell, grid, seed, r)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_one_rep, cfg, arms, cell, grid, seed, r): r
                       for r in range(reps)}
            for fut, r in futures.items():
                results[r] = fut.result()
    runtime = time.perf_counter() - start

    reports = {}
    for arm in arms:
        errs, covers, lengths, failures = [], [], [], []
        for r in range(reps):
            res = results[r][arm.name]
            if isinstance(res, str):
                failures.append((r, res))
                continue
            err, cover, length = res
            errs.append(err)
            covers.append(cover)
            lengths.append(length)
        if len(failures) > max_fail_frac * reps:
            raise DrcattError(
                f"arm {arm.name!r}: {len(failures)}/{reps} replications "
                f"failed; first: {failures[0]}")
        err = np.asarray(errs)
        cover = np.asarray(covers)
        length = np.asarray(lengths)
        undefined = int(np.isnan(length).any(axis=1).sum())
        with np.errstate(invalid="ignore"):
            mean_len = np.nanmean(length, axis=0) if undefined < len(errs) \
                else np.full(grid.size, np.nan)
        reports[arm.name] = McReport(
            arm=arm.name, cell=cell, grid=grid,
            bias=err.mean(axis=0),
            rmse=np.sqrt((err ** 2).mean(axis=0)),
            pwcp=cover.mean(axis=0),
            ucp=float(cover.all(axis=1).mean()),
            length=mean_len,
            reps=len(errs), failed=len(failures), runtime=runtime,
            undefined_bands=undefined)
    return reports
