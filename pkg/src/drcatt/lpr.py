"""Local polynomial regression engine.

The p-th order LPR at a point z solves the weighted least squares problem

    min_b sum_i m_i * K((Z_i - z) / h) * (Q_i - r_p(Z_i - z)' b)^2

with r_p(u) = (1, u, ..., u^p) and optional per-observation multipliers m_i
(used by the multiplier bootstrap).  beta[nu] * nu! estimates the nu-th
derivative of E[Q | Z = z].

Two solution paths are provided:

* ``lpr_fit`` solves via a rank-revealing SVD of the sqrt-weight-scaled
  design (singularity threshold 1e-10 relative), used for all primary fits.
* ``moment_prepare`` / ``moment_solve`` solve the same normal equations from
  precomputed kernel-weighted power sums, which lets the bootstrap evaluate
  thousands of reweighted fits as batched matrix products.  The baseline used
  inside the bootstrap statistic is computed through this same path so that
  unit multipliers reproduce it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindowError, NuExceedsOrderError, SingularLocalDesignError
from .kernels import kernel_weights

_SV_RCOND = 1e-10


@dataclass(frozen=True)
class LprSpec:
    p: int
    h: float
    kernel: str = "gaussian"

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("polynomial order must be >= 0")
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")


def lpr_fit(zs, qs, z0, spec: LprSpec, multipliers=None) -> np.ndarray:
    """Coefficient vector beta_hat(z0) of length p + 1."""
    zs = np.asarray(zs, dtype=float)
    qs = np.asarray(qs, dtype=float)
    u = (zs - z0) / spec.h
    w = kernel_weights(u, spec.kernel)
    if multipliers is not None:
        w = w * np.asarray(multipliers, dtype=float)
    active = w > 0
    if not active.any():
        raise EmptyWindowError(f"no observations with positive weight at z={z0}")
    za = zs[active]
    if np.unique(za).size < spec.p + 1:
        raise SingularLocalDesignError(
            f"fewer than p+1={spec.p + 1} distinct covariate values near z={z0}")
    ua = za - z0
    design = np.vander(ua, N=spec.p + 1, increasing=True)
    sw = np.sqrt(w[active])
    beta, _, rank, _ = np.linalg.lstsq(design * sw[:, None], qs[active] * sw,
                                       rcond=_SV_RCOND)
    if rank < spec.p + 1:
        raise SingularLocalDesignError(f"rank-deficient local design at z={z0}")
    return beta


def lpr_mu(zs, qs, z0, spec: LprSpec, nu: int = 0, multipliers=None) -> float:
    """nu! * e_nu' beta_hat(z0): the nu-th derivative estimate at z0."""
    if nu > spec.p:
        raise NuExceedsOrderError(f"derivative order {nu} exceeds p={spec.p}")
    beta = lpr_fit(zs, qs, z0, spec, multipliers=multipliers)
    return math.factorial(nu) * float(beta[nu])


def lpr_curve(zs, qs, grid, spec: LprSpec, multipliers=None) -> np.ndarray:
    """Pointwise lpr_mu(nu=0) over a grid of evaluation points."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty evaluation grid")
    out = np.empty(grid.size)
    for j, z0 in enumerate(grid):
        try:
            out[j] = lpr_mu(zs, qs, z0, spec, multipliers=multipliers)
        except (EmptyWindowError, SingularLocalDesignError) as exc:
            raise type(exc)(f"{exc} (grid point z={z0})") from exc
    return out


def llr_smooth(zs, qs, eval_points, h, kernel, chunk: int = 512) -> np.ndarray:
    """Local linear fit of qs on zs evaluated at many points at once.

    Closed-form order-1 solution from kernel-weighted moments; equivalent to
    lpr_fit with p=1 up to floating-point rounding.  Chunked over evaluation
    points to bound memory at chunk * n.
    """
    zs = np.asarray(zs, dtype=float)
    qs = np.asarray(qs, dtype=float)
    ev = np.asarray(eval_points, dtype=float)
    out = np.empty(ev.size)
    for lo in range(0, ev.size, chunk):
        e = ev[lo:lo + chunk]
        d = zs[None, :] - e[:, None]
        w = kernel_weights(d / h, kernel)
        s0 = w.sum(axis=1)
        wd = w * d
        s1 = wd.sum(axis=1)
        s2 = (wd * d).sum(axis=1)
        t0 = w @ qs
        t1 = wd @ qs
        det = s0 * s2 - s1 * s1
        if np.any(det <= 0) or np.any(s0 <= 0):
            bad = e[(det <= 0) | (s0 <= 0)]
            raise SingularLocalDesignError(
                f"degenerate local linear window at z={bad[:3]}")
        out[lo:lo + chunk] = (s2 * t0 - s1 * t1) / det
    return out


# --- batched moment path (bootstrap) ------------------------------------

@dataclass(frozen=True)
class MomentDesign:
    """Per-evaluation-point kernel-weighted power columns.

    pow_cols[:, k] = K(u_i) * u_i^k for k = 0..2p, and resp_cols[:, j] =
    K(u_i) * u_i^j * Q_i for j = 0..p, with u_i = Z_i - z (uncentered by h;
    the intercept coefficient is invariant to this scaling).
    """

    p: int
    pow_cols: np.ndarray
    resp_cols: np.ndarray


def moment_prepare(zs, qs, z0, spec: LprSpec) -> MomentDesign:
    zs = np.asarray(zs, dtype=float)
    qs = np.asarray(qs, dtype=float)
    d = zs - z0
    w = kernel_weights(d / spec.h, spec.kernel)
    pow_cols = np.empty((zs.size, 2 * spec.p + 1))
    pow_cols[:, 0] = w
    for k in range(1, 2 * spec.p + 1):
        pow_cols[:, k] = pow_cols[:, k - 1] * d
    resp_cols = pow_cols[:, : spec.p + 1] * qs[:, None]
    return MomentDesign(p=spec.p, pow_cols=pow_cols, resp_cols=resp_cols)


def moment_solve(design: MomentDesign, multipliers: np.ndarray) -> np.ndarray:
    """Intercept estimates for one or many multiplier vectors.

    multipliers has shape (n,) or (B, n); returns a scalar array of shape ()
    or (B,) holding e_0' beta_hat for each multiplier vector.
    """
    v = np.atleast_2d(np.asarray(multipliers, dtype=float))
    s = v @ design.pow_cols          # (B, 2p+1)
    t = v @ design.resp_cols         # (B, p+1)
    p = design.p
    idx = np.add.outer(np.arange(p + 1), np.arange(p + 1))
    mats = s[:, idx]                 # (B, p+1, p+1) Hankel from power sums
    sol = np.linalg.solve(mats, t[..., None])[..., 0, 0]
    if np.ndim(multipliers) == 1:
        return sol[0]
    return sol
