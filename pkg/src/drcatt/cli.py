"""Command-line entry points: estimate, simulate, bandwidth.

Configuration may come from a flat JSON file (--config); explicit flags
override file values, which override built-in defaults.  All randomness
flows from --seed and outputs are identical at any --threads setting.

Exit codes: 0 success, 1 fatal, 2 partial (some cells failed but at least
80% succeeded).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .bands import (SCOPE_GTZ, SCOPE_Z, analytic_critical_value,
                    assemble_band, bootstrap_critical_value,
                    gumbel_critical_value)
from .bandwidth import global_bandwidth, select_bandwidths
from .discrete import discrete_bootstrap_band
from .errors import DrcattError
from .estimator import default_grid, dr_curve
from .first_stage import DEFAULT_TRIM, fit_cell
from .kernels import kernel_moments
from .lpr import LprSpec
from .panel import (NEVER_TREATED, NOT_YET_TREATED, GroupTimeCell,
                    enumerate_cells, load_panel, validate_staggered)
from .simulate import (CONTINUOUS, DISCRETE, EstimatorArm, SimConfig,
                       run_monte_carlo)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

PRESETS = ("appendix-d",)

_DEFAULTS = {
    "path": None, "output_dir": None,
    "id_col": "id", "time_col": "time", "y_col": "y", "d_col": None,
    "g_col": None, "z_col": "z", "x_cols": None,
    "delta": 0, "control_mode": "never", "drop_always_treated": False,
    "discrete": False, "trim": DEFAULT_TRIM,
    "p": 2, "kernel": "gaussian", "bandwidth": None,
    "band": "bootstrap", "alpha": 0.05, "scope": "z",
    "boot_reps": 999, "weights": "mammen", "seed": 0, "threads": 1,
    "grid_points": 41, "grid": None, "grid_min": None, "grid_max": None,
    "cells": None, "overwrite": False,
    # simulate only
    "preset": None, "covariate": "continuous", "n": 2000, "T": 4,
    "reps": 1000, "g": 2, "t": 2, "arm_bandwidth": "h2",
}


def _merge_config(args: argparse.Namespace) -> dict:
    """flags > JSON config file > defaults."""
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise DrcattError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key, val in vars(args).items():
        if key in cfg and val is not None:
            cfg[key] = val
    return cfg


def _validate_common(cfg: dict):
    if cfg["output_dir"] is None:
        raise DrcattError("output_dir is required (--output-dir)")
    if not 0 < cfg["alpha"] < 1:
        raise DrcattError(f"alpha must be in (0, 1), got {cfg['alpha']}")
    if cfg["p"] not in (1, 2):
        raise DrcattError(f"p must be 1 or 2, got {cfg['p']}")
    if cfg["band"] == "bootstrap" and cfg["boot_reps"] < 1:
        raise DrcattError("boot_reps must be >= 1")
    if cfg["delta"] < 0:
        raise DrcattError("delta must be >= 0")


def _control_mode(cfg: dict) -> str:
    return {"never": NEVER_TREATED, "notyet": NOT_YET_TREATED}[cfg["control_mode"]]


def _parse_cells(spec: str, delta: int, mode: str):
    cells = []
    for part in spec.split(","):
        g, t = part.split(":")
        cells.append(GroupTimeCell(g=int(g), t=int(t), delta=delta,
                                   control_mode=mode))
    return cells


def _resolve_grid(cfg: dict, zs) -> np.ndarray:
    if cfg["grid"] is not None:
        vals = cfg["grid"]
        if isinstance(vals, str):
            vals = [float(v) for v in vals.split(",")]
        return np.asarray(vals, dtype=float)
    if cfg["grid_min"] is not None and cfg["grid_max"] is not None:
        return np.linspace(cfg["grid_min"], cfg["grid_max"], cfg["grid_points"])
    return default_grid(zs, cfg["grid_points"])


def _prepare_output(path: Path, overwrite: bool):
    if path.exists() and not overwrite:
        raise DrcattError(f"{path} exists; pass --overwrite to replace it")


def _write_frame(df: pd.DataFrame, path: Path, overwrite: bool):
    _prepare_output(path, overwrite)
    df.to_csv(path, index=False)


def _write_json(obj, path: Path, overwrite: bool):
    _prepare_output(path, overwrite)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _load_input(cfg: dict):
    if cfg["path"] is None:
        raise DrcattError("input path is required (--input)")
    df = pd.read_csv(cfg["path"])
    x_cols = cfg["x_cols"]
    if isinstance(x_cols, str):
        x_cols = [c for c in x_cols.split(",") if c]
    return load_panel(df, id_col=cfg["id_col"], time_col=cfg["time_col"],
                      y_col=cfg["y_col"], d_col=cfg["d_col"],
                      g_col=cfg["g_col"], z_col=cfg["z_col"],
                      x_cols=x_cols or (),
                      drop_always_treated=cfg["drop_always_treated"])


def run_estimate(cfg: dict) -> int:
    _validate_common(cfg)
    panel = _load_input(cfg)
    report = validate_staggered(panel)
    if not report.ok:
        raise DrcattError(
            f"staggered-adoption violations at (unit, period): "
            f"{report.violations[:5]}")
    mode = _control_mode(cfg)
    if cfg["cells"]:
        cells = _parse_cells(cfg["cells"], cfg["delta"], mode)
    else:
        cells = enumerate_cells(panel, delta=cfg["delta"], mode=mode)

    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    fitted, failures, bw_reports = [], [], {}
    for cell in cells:
        try:
            fs = fit_cell(panel, cell, trim=cfg["trim"])
            fitted.append(fs)
        except DrcattError as exc:
            failures.append((cell, repr(exc)))

    if not fitted or len(fitted) < 0.8 * len(cells):
        raise DrcattError(
            f"{len(failures)}/{len(cells)} cells failed in the first stage; "
            f"first: {failures[0] if failures else None}")

    if cfg["discrete"]:
        return _estimate_discrete(cfg, panel, fitted, failures, out_dir)

    grid_by_cell, curves, ok_fs = {}, [], []
    for fs in fitted:
        grid_by_cell[fs.cell] = _resolve_grid(cfg, fs.z)

    if cfg["bandwidth"] is None:
        for fs in list(fitted):
            try:
                bw_reports[fs.cell] = select_bandwidths(
                    fs, grid_by_cell[fs.cell], kernel=cfg["kernel"],
                    n=panel.n_units)
            except DrcattError as exc:
                failures.append((fs.cell, repr(exc)))
                fitted = [f for f in fitted if f.cell != fs.cell]
        if cfg["scope"] == SCOPE_GTZ:
            h_global = global_bandwidth(list(bw_reports.values()), cfg["p"])

    for fs in fitted:
        if cfg["bandwidth"] is not None:
            h = float(cfg["bandwidth"])
        elif cfg["scope"] == SCOPE_GTZ:
            h = h_global
        else:
            rep = bw_reports[fs.cell]
            h = rep.h1 if cfg["p"] == 1 else rep.h2
        spec = LprSpec(p=cfg["p"], h=h, kernel=cfg["kernel"])
        try:
            curves.append(dr_curve(fs, grid_by_cell[fs.cell], spec))
            ok_fs.append(fs)
        except DrcattError as exc:
            failures.append((fs.cell, repr(exc)))

    if not curves or len(curves) < 0.8 * len(cells):
        raise DrcattError(
            f"{len(failures)}/{len(cells)} cells failed; "
            f"first: {failures[0] if failures else None}")

    bands = _make_bands(cfg, panel, curves)

    curve_df = pd.concat([c.to_frame() for c in curves], ignore_index=True)
    band_rows = []
    for band in bands:
        c = band.curve
        band_rows.append(pd.DataFrame({
            "g": c.cell.g, "t": c.cell.t, "z": c.grid,
            "estimate": c.estimate, "se": c.se,
            "lower": band.lower, "upper": band.upper,
            "critical": band.critical.value, "method": band.critical.method,
        }))
    band_df = pd.concat(band_rows, ignore_index=True)

    sidecar = {
        "alpha": cfg["alpha"], "band": cfg["band"], "scope": cfg["scope"],
        "seed": cfg["seed"], "kernel": cfg["kernel"], "p": cfg["p"],
        "bandwidths": [r.as_dict() for r in bw_reports.values()],
        "cells": [c.sidecar() for c in curves],
        "first_stage": [{
            "g": fs.cell.g, "t": fs.cell.t,
            "gps_coef": fs.gps.coef, "or_coef": fs.or_fit.coef,
            "n_sub": fs.n,
        } for fs in ok_fs],
        "failed_cells": [{"g": c.g, "t": c.t, "error": e} for c, e in failures],
    }
    _write_frame(curve_df, out_dir / "curve.csv", cfg["overwrite"])
    _write_frame(band_df, out_dir / "band.csv", cfg["overwrite"])
    _write_json(sidecar, out_dir / "run.json", cfg["overwrite"])
    return EXIT_PARTIAL if failures else EXIT_OK


def _make_bands(cfg: dict, panel, curves):
    bands = []
    if cfg["band"] == "bootstrap":
        if cfg["scope"] == SCOPE_GTZ:
            crit = bootstrap_critical_value(
                curves, alpha=cfg["alpha"], reps=cfg["boot_reps"],
                kind=cfg["weights"], scope=SCOPE_GTZ, seed=cfg["seed"],
                panel_n=panel.n_units)
            return [assemble_band(c, crit) for c in curves]
        for c in curves:
            crit = bootstrap_critical_value(
                c, alpha=cfg["alpha"], reps=cfg["boot_reps"],
                kind=cfg["weights"], scope=SCOPE_Z, seed=cfg["seed"],
                panel_n=panel.n_units)
            bands.append(assemble_band(c, crit))
        return bands
    for c in curves:
        moments = kernel_moments(c.spec.kernel)
        crit = analytic_critical_value(cfg["alpha"], float(c.grid[0]),
                                       float(c.grid[-1]), c.spec.h, moments.lam)
        if cfg["band"] == "gumbel":
            crit = gumbel_critical_value(cfg["alpha"], crit.a_n)
        bands.append(assemble_band(c, crit))
    return bands


def _estimate_discrete(cfg, panel, fitted, failures, out_dir: Path) -> int:
    if cfg["scope"] == SCOPE_GTZ:
        dcs = discrete_bootstrap_band(
            fitted, alpha=cfg["alpha"], reps=cfg["boot_reps"],
            kind=cfg["weights"], seed=cfg["seed"], scope=SCOPE_GTZ,
            panel_n=panel.n_units)
    else:
        dcs = [discrete_bootstrap_band(
            fs, alpha=cfg["alpha"], reps=cfg["boot_reps"],
            kind=cfg["weights"], seed=cfg["seed"], panel_n=panel.n_units)
            for fs in fitted]
    band_rows, curve_rows = [], []
    for dc in dcs:
        band_rows.append(pd.DataFrame({
            "g": dc.cell.g, "t": dc.cell.t, "z": dc.support,
            "estimate": dc.estimate, "se": dc.se_tilde,
            "lower": dc.lower, "upper": dc.upper,
            "critical": dc.critical.value, "method": "discrete-boot",
        }))
        curve_rows.append(pd.DataFrame({
            "g": dc.cell.g, "t": dc.cell.t, "z": dc.support,
            "estimate": dc.estimate, "se": dc.se_tilde, "n_eff": dc.counts,
        }))
    sidecar = {
        "alpha": cfg["alpha"], "band": "bootstrap", "scope": cfg["scope"],
        "seed": cfg["seed"], "discrete": True,
        "cells": [{"g": dc.cell.g, "t": dc.cell.t,
                   "diagnostics": dc.diagnostics} for dc in dcs],
        "failed_cells": [{"g": c.g, "t": c.t, "error": e} for c, e in failures],
    }
    _write_frame(pd.concat(curve_rows, ignore_index=True),
                 out_dir / "curve.csv", cfg["overwrite"])
    _write_frame(pd.concat(band_rows, ignore_index=True),
                 out_dir / "band.csv", cfg["overwrite"])
    _write_json(sidecar, out_dir / "run.json", cfg["overwrite"])
    return EXIT_PARTIAL if failures else EXIT_OK


def run_bandwidth(cfg: dict) -> int:
    _validate_common(cfg)
    panel = _load_input(cfg)
    mode = _control_mode(cfg)
    if cfg["cells"]:
        cells = _parse_cells(cfg["cells"], cfg["delta"], mode)
    else:
        cells = enumerate_cells(panel, delta=cfg["delta"], mode=mode)
    rows, reports, failures = [], [], []
    for cell in cells:
        try:
            fs = fit_cell(panel, cell, trim=cfg["trim"])
            rep = select_bandwidths(fs, _resolve_grid(cfg, fs.z),
                                    kernel=cfg["kernel"], n=panel.n_units)
            reports.append(rep)
            rows.append(rep.as_dict())
        except DrcattError as exc:
            failures.append((cell, repr(exc)))
    if not reports:
        raise DrcattError(f"all cells failed; first: {failures[0]}")
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_frame(pd.DataFrame(rows), out_dir / "bandwidth.csv", cfg["overwrite"])
    _write_json({
        "h1_global": global_bandwidth(reports, 1),
        "h2_global": global_bandwidth(reports, 2),
        "failed_cells": [{"g": c.g, "t": c.t, "error": e} for c, e in failures],
    }, out_dir / "bandwidth.json", cfg["overwrite"])
    return EXIT_PARTIAL if failures else EXIT_OK


def run_simulate(cfg: dict) -> int:
    _validate_common(cfg)
    if cfg["preset"] is not None and cfg["preset"] not in PRESETS:
        raise DrcattError(
            f"unknown preset {cfg['preset']!r}; available: {list(PRESETS)}")
    if cfg["preset"] == "appendix-d":
        covariate = DISCRETE
        band = "discrete-boot"
        weights = "mammen"
        T = 4
    else:
        covariate = {"continuous": CONTINUOUS, "discrete": DISCRETE}[cfg["covariate"]]
        band = "discrete-boot" if covariate == DISCRETE else cfg["band"]
        weights = cfg["weights"]
        T = cfg["T"]
    if cfg["reps"] < 1:
        raise DrcattError("reps must be >= 1")

    sim = SimConfig(n=cfg["n"], T=T, covariate_kind=covariate)
    arm = EstimatorArm(name="main", p=cfg["p"], band=band,
                       bandwidth=cfg["arm_bandwidth"],
                       boot_reps=cfg["boot_reps"], weights=weights,
                       alpha=cfg["alpha"])
    cell = GroupTimeCell(g=cfg["g"], t=cfg["t"], delta=cfg["delta"])
    grid = None
    if covariate == CONTINUOUS:
        if cfg["grid"] is not None:
            grid = _resolve_grid(cfg, None)
        else:
            grid = np.round(np.arange(-1.0, 1.0001, 0.1), 10)
    reports = run_monte_carlo(sim, [arm], reps=cfg["reps"], seed=cfg["seed"],
                              cell=cell, grid=grid, threads=cfg["threads"])
    report = reports["main"]

    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_frame(report.to_frame(), out_dir / "mc_report.csv", cfg["overwrite"])
    summary = report.summary()
    summary.update(n=cfg["n"], T=T, covariate=covariate, seed=cfg["seed"],
                   band=band, boot_reps=cfg["boot_reps"], weights=weights)
    _write_json(summary, out_dir / "mc_report.json", cfg["overwrite"])
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="flat JSON config file")
    sub.add_argument("--alpha", type=float)
    sub.add_argument("--p", type=int, choices=(1, 2))
    sub.add_argument("--kernel", choices=("gaussian", "epanechnikov"))
    sub.add_argument("--boot-reps", type=int, dest="boot_reps")
    sub.add_argument("--weights", choices=("mammen", "normal"))
    sub.add_argument("--seed", type=int)
    sub.add_argument("--threads", type=int)
    sub.add_argument("--delta", type=int)
    sub.add_argument("--overwrite", action="store_const", const=True,
                     default=None)
    sub.add_argument("--output-dir", dest="output_dir")


def _add_input(sub: argparse.ArgumentParser):
    sub.add_argument("--input", dest="path")
    sub.add_argument("--id-col", dest="id_col")
    sub.add_argument("--time-col", dest="time_col")
    sub.add_argument("--y-col", dest="y_col")
    sub.add_argument("--d-col", dest="d_col")
    sub.add_argument("--g-col", dest="g_col")
    sub.add_argument("--z-col", dest="z_col")
    sub.add_argument("--x-cols", dest="x_cols",
                     help="comma-separated extra covariate columns")
    sub.add_argument("--control-mode", dest="control_mode",
                     choices=("never", "notyet"))
    sub.add_argument("--drop-always-treated", dest="drop_always_treated",
                     action="store_const", const=True, default=None)
    sub.add_argument("--trim", type=float)
    sub.add_argument("--cells", help="restrict to g:t,g:t,... cells")
    sub.add_argument("--grid", help="explicit comma-separated grid")
    sub.add_argument("--grid-points", type=int, dest="grid_points")
    sub.add_argument("--grid-min", type=float, dest="grid_min")
    sub.add_argument("--grid-max", type=float, dest="grid_max")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drcatt",
        description="Doubly robust conditional ATT curves with uniform bands")
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="estimate CATT curves and bands")
    _add_common(est)
    _add_input(est)
    est.add_argument("--band", choices=("analytic", "gumbel", "bootstrap"))
    est.add_argument("--scope", choices=(SCOPE_Z, SCOPE_GTZ))
    est.add_argument("--bandwidth", type=float,
                     help="override the plug-in bandwidth")
    est.add_argument("--discrete", action="store_const", const=True,
                     default=None, help="finite-support covariate variant")

    bw = subs.add_parser("bandwidth", help="plug-in bandwidth selection only")
    _add_common(bw)
    _add_input(bw)

    sim = subs.add_parser("simulate", help="Monte Carlo coverage experiments")
    _add_common(sim)
    sim.add_argument("--preset", help="named configuration, e.g. appendix-d")
    sim.add_argument("--covariate", choices=("continuous", "discrete"))
    sim.add_argument("--n", type=int)
    sim.add_argument("--T", type=int, dest="T")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--g", type=int)
    sim.add_argument("--t", type=int)
    sim.add_argument("--band", choices=("analytic", "gumbel", "bootstrap"))
    sim.add_argument("--arm-bandwidth", dest="arm_bandwidth",
                     help="h1, h2, rot, or an explicit value")
    sim.add_argument("--grid", help="explicit comma-separated grid")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        if args.command == "estimate":
            return run_estimate(cfg)
        if args.command == "bandwidth":
            return run_bandwidth(cfg)
        return run_simulate(cfg)
    except (DrcattError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
