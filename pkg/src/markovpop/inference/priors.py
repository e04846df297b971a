"""Truncated-normal priors (half-normal is the ``(0, inf)``, center-0 case)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class Prior:
    """Normal with center ``c`` and scale ``d`` truncated to ``(a, b)``."""

    kind: str
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("prior scale must be positive")
        if not self.a < self.b:
            raise ValueError("prior support must be a nonempty interval")

    @classmethod
    def half_normal(cls, scale: float = 1.0) -> "Prior":
        return cls("half-normal", 0.0, np.inf, 0.0, scale)

    @classmethod
    def truncated_normal(cls, a: float, b: float, c: float, d: float) -> "Prior":
        return cls("truncated-normal", a, b, c, d)

    @property
    def log_mass(self) -> float:
        """Log of the untruncated normal's mass on the support."""
        hi = (self.b - self.c) / self.d
        lo = (self.a - self.c) / self.d
        if np.isinf(self.b):
            return float(log_ndtr(-lo))
        return float(np.log(ndtr(hi) - ndtr(lo)))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.c) / self.d
        val = -0.5 * z**2 - LOG_SQRT_2PI - np.log(self.d) - self.log_mass
        inside = (x > self.a) & (x < self.b)
        out = np.where(inside, val, -np.inf)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        # inverse CDF; fine for the moderate truncations used here
        lo, hi = ndtr((self.a - self.c) / self.d), ndtr((self.b - self.c) / self.d)
        return self.c + self.d * ndtri(lo + (hi - lo) * rng.random(size))
