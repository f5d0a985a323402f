"""Uniform confidence bands: analytic, Gumbel, and multiplier bootstrap.

The analytic critical value follows a Gaussian supremum approximation over
the evaluation interval [a, b]:

    c_hat = sqrt(a_n^2 - 2 log log (1 - alpha)^{-1/2}),
    a_n^2 = 2 log((b - a) / h) + 2 log(sqrt(lambda) / (2 pi)).

The bootstrap reweights only the third-stage LPR objective with IID
unit-mean unit-variance multipliers and takes the empirical quantile of the
sup of |DR*(z) - DR(z)| / SE(z).  Per-repetition RNG streams derive from
(seed, rep) so results are identical under any scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllPointsExcludedError, BandwidthTooLargeError
from .estimator import DrCurve
from .lpr import LprSpec, moment_prepare, moment_solve

ZERO_SE_THRESHOLD = 1e-12

SCOPE_Z = "z"
SCOPE_GTZ = "gtz"

MAMMEN = "mammen"
NORMAL = "normal"

_SQRT5 = math.sqrt(5.0)
MAMMEN_LOW = (3.0 - _SQRT5) / 2.0
MAMMEN_HIGH = (3.0 + _SQRT5) / 2.0
MAMMEN_P_LOW = (_SQRT5 + 1.0) / (2.0 * _SQRT5)


@dataclass(frozen=True)
class CriticalValue:
    value: float
    method: str               # analytic | gumbel | bootstrap
    alpha: float
    a_n: float = None
    reps: int = None
    scope: str = SCOPE_Z


@dataclass(frozen=True)
class UniformBand:
    curve: DrCurve
    critical: CriticalValue
    lower: np.ndarray
    upper: np.ndarray


def analytic_critical_value(alpha: float, a: float, b: float, h: float,
                            lam: float, scope: str = SCOPE_Z) -> CriticalValue:
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if not b > a:
        raise ValueError("require b > a")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    a_n_sq = 2.0 * math.log((b - a) / h) + 2.0 * math.log(math.sqrt(lam) / (2.0 * math.pi))
    if a_n_sq <= 0:
        raise BandwidthTooLargeError(
            f"a_n^2 = {a_n_sq:.4f} <= 0 at (b-a)/h = {(b - a) / h:.3f}; the "
            "analytic band is undefined here - consider the bootstrap")
    radicand = a_n_sq - 2.0 * math.log(math.log(1.0 / math.sqrt(1.0 - alpha)))
    if radicand < 0:
        raise BandwidthTooLargeError(
            f"negative radicand {radicand:.4f}; the analytic band is "
            "undefined here - consider the bootstrap")
    return CriticalValue(value=math.sqrt(radicand), method="analytic",
                         alpha=alpha, a_n=math.sqrt(a_n_sq), scope=scope)


def gumbel_critical_value(alpha: float, a_n: float,
                          scope: str = SCOPE_Z) -> CriticalValue:
    if not a_n > 0:
        raise ValueError("a_n must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    val = a_n - math.log(math.log(1.0 / math.sqrt(1.0 - alpha))) / a_n
    return CriticalValue(value=val, method="gumbel", alpha=alpha, a_n=a_n,
                         scope=scope)


def weight_rng(seed: int, rep: int) -> np.random.Generator:
    """Counter-style stream for bootstrap repetition ``rep``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(rep,)))


def draw_weights(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """IID multipliers with unit mean and unit variance."""
    if kind == NORMAL:
        return rng.normal(loc=1.0, scale=1.0, size=n)
    if kind == MAMMEN:
        low = rng.random(n) < MAMMEN_P_LOW
        return np.where(low, MAMMEN_LOW, MAMMEN_HIGH)
    raise ValueError(f"unknown weight kind: {kind!r}")


def empirical_quantile(samples: np.ndarray, level: float) -> float:
    """Ceiling-index order statistic: k = ceil(level * B) of the sorted sample."""
    s = np.sort(np.asarray(samples, dtype=float))
    k = math.ceil(level * s.size)
    k = min(max(k, 1), s.size)
    return float(s[k - 1])


def _curve_designs(curve: DrCurve):
    """Per-grid-point moment designs plus the moment-path baseline.

    The baseline DR(z) is recomputed through the same moment solver with
    unit multipliers so degenerate unit weights give a sup of exactly zero.
    """
    spec = curve.spec
    designs, base, ses = [], [], []
    ones = np.ones(curve.n_sub)
    for j, z in enumerate(curve.grid):
        se = curve.se[j]
        if not np.isfinite(se) or se < ZERO_SE_THRESHOLD:
            continue
        a_col = curve.a_hat_matrix[:, j]
        if not np.all(np.isfinite(a_col)):
            continue
        d = moment_prepare(curve.z_sub, a_col, float(curve.grid[j]),
                           LprSpec(p=spec.p, h=spec.h, kernel=spec.kernel))
        designs.append(d)
        base.append(moment_solve(d, ones))
        ses.append(se)
    return designs, np.asarray(base), np.asarray(ses)


def bootstrap_critical_value(curves, alpha: float, reps: int,
                             kind: str = MAMMEN, scope: str = SCOPE_Z,
                             seed: int = 0, panel_n: int = None) -> CriticalValue:
    """Empirical (1 - alpha) quantile of the bootstrap sup statistic.

    ``curves`` is a single DrCurve (scope ``z``) or a list of curves sharing
    a common bandwidth (scope ``gtz``).  One weight vector per panel and
    repetition is shared across cells, indexed through each curve's
    subsample.
    """
    if isinstance(curves, DrCurve):
        curves = [curves]
    if scope == SCOPE_GTZ and len({c.spec.h for c in curves}) > 1:
        raise ValueError("joint (g, t, z) scope requires a common bandwidth")

    prepared = []
    for c in curves:
        if c.a_hat_matrix is None:
            raise ValueError("curve was built without retained components")
        designs, base, ses = _curve_designs(c)
        if designs:
            prepared.append((c, designs, base, ses))
    if not prepared:
        raise AllPointsExcludedError("no grid points with usable SE")

    if panel_n is None:
        panel_n = max(int(c.sub_idx.max()) + 1 for c, _, _, _ in prepared)
    # one weight vector per repetition, drawn from its own stream, shared
    # across cells; solves are batched over repetitions per grid point
    v_panel = np.empty((reps, panel_n))
    for b in range(reps):
        v_panel[b] = draw_weights(kind, panel_n, weight_rng(seed, b))
    m_star = np.zeros(reps)
    for c, designs, base, ses in prepared:
        v = v_panel[:, c.sub_idx]
        for d, b0, se in zip(designs, base, ses):
            vals = np.abs(moment_solve(d, v) - b0) / se
            np.maximum(m_star, vals, out=m_star)
    return CriticalValue(value=empirical_quantile(m_star, 1.0 - alpha),
                         method="bootstrap", alpha=alpha, reps=reps, scope=scope)


def assemble_band(curve: DrCurve, critical: CriticalValue) -> UniformBand:
    if not np.isfinite(critical.value):
        raise ValueError("critical value must be finite")
    half = critical.value * curve.se
    return UniformBand(curve=curve, critical=critical,
                       lower=curve.estimate - half, upper=curve.estimate + half)
