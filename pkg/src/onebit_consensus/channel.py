"""One-bit link: linear compression, additive Gaussian noise, threshold quantizer."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DimensionMismatch, NonPositiveSigma, ValidationError


def normal_cdf(v, sigma: float):
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    return ndtr(np.asarray(v, dtype=float) / sigma)


def normal_pdf(v, sigma: float):
    if not sigma > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma}")
    v = np.asarray(v, dtype=float)
    return np.exp(-0.5 * (v / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian channel noise.

    ``sigma=0`` is only accepted with ``deterministic=True`` (test harness):
    the quantizer becomes an exact indicator and ``cdf`` a unit step.
    """

    sigma: float
    deterministic: bool = False

    def __post_init__(self):
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise NonPositiveSigma(f"sigma must be positive, got {self.sigma}")
        if self.sigma == 0 and not self.deterministic:
            raise NonPositiveSigma("sigma=0 needs deterministic=True (test mode only)")

    def cdf(self, v):
        if self.sigma == 0:
            return (np.asarray(v, dtype=float) >= 0).astype(float)
        return normal_cdf(v, self.sigma)

    def pdf(self, v):
        if self.sigma == 0:
            raise NonPositiveSigma("degenerate noise has no density")
        return normal_pdf(v, self.sigma)


@dataclass(frozen=True, eq=False)
class LinkConfig:
    thresholds: np.ndarray
    noise: NoiseModel

    def __post_init__(self):
        c = np.asarray(self.thresholds, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValidationError("thresholds must be finite")
        object.__setattr__(self, "thresholds", c)

    @classmethod
    def uniform(cls, d: int, c: float, sigma: float, **kw) -> "LinkConfig":
        return cls(np.full(d, float(c)), NoiseModel(sigma, **kw))

    @property
    def d(self) -> int:
        return self.thresholds.shape[0]


def encode(K2, x) -> float:
    K2 = np.asarray(K2, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if K2.shape != x.shape:
        raise DimensionMismatch(f"K2 has length {K2.shape[0]}, state has {x.shape[0]}")
    return float(K2 @ x)


def quantize(z, noise, c):
    """Bits ``1{z + noise <= c}`` elementwise (inclusive indicator)."""
    return (np.asarray(z) + np.asarray(noise) <= np.asarray(c)).astype(float)


def transmit(z: float, edge: int, link: LinkConfig, rng: np.random.Generator) -> int:
    """Send one compressed value over ``edge``; consumes one Gaussian variate."""
    noise = link.noise.sigma * rng.standard_normal()
    return int(quantize(z, noise, link.thresholds[edge]))
