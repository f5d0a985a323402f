"""Kernel density estimation for the covariate and its first derivative.

The density enters the standard errors and the p = 2 bias constant.  A
plain KDE with a Silverman-type bandwidth is used; the derivative is the
analytic derivative of the KDE.  Estimates are floored at a small positive
value to protect downstream divisions, and floored evaluations are counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import GAUSSIAN, kernel_deriv, kernel_weights

DENSITY_FLOOR = 1e-10


def silverman_bandwidth(zs) -> float:
    zs = np.asarray(zs, dtype=float)
    sd = float(zs.std(ddof=1)) if zs.size > 1 else 1.0
    if sd <= 0:
        sd = 1.0
    return 1.06 * sd * zs.size ** (-1.0 / 5.0)


def kde(zs, z0, h_d, kernel=GAUSSIAN) -> float:
    """(1 / (n h_d)) sum K((Z_i - z0) / h_d), floored at 1e-10."""
    zs = np.asarray(zs, dtype=float)
    val = kernel_weights((zs - z0) / h_d, kernel).sum() / (zs.size * h_d)
    return max(float(val), DENSITY_FLOOR)


def kde_deriv(zs, z0, h_d, kernel=GAUSSIAN) -> float:
    """Derivative of the KDE with respect to the evaluation point."""
    zs = np.asarray(zs, dtype=float)
    val = -kernel_deriv((zs - z0) / h_d, kernel).sum() / (zs.size * h_d * h_d)
    return float(val)


@dataclass
class DensityFit:
    """Caches the sample and bandwidth; evaluates on demand."""

    zs: np.ndarray
    h_d: float
    kernel: str = GAUSSIAN
    floors_hit: int = field(default=0)

    @classmethod
    def from_sample(cls, zs, h_d=None, kernel=GAUSSIAN) -> "DensityFit":
        zs = np.asarray(zs, dtype=float)
        if h_d is None:
            h_d = silverman_bandwidth(zs)
        return cls(zs=zs, h_d=h_d, kernel=kernel)

    def pdf(self, z0) -> float:
        raw = kernel_weights((self.zs - z0) / self.h_d, self.kernel).sum() \
            / (self.zs.size * self.h_d)
        if raw < DENSITY_FLOOR:
            self.floors_hit += 1
            return DENSITY_FLOOR
        return float(raw)

    def pdf_deriv(self, z0) -> float:
        return kde_deriv(self.zs, z0, self.h_d, self.kernel)
