"""Per-agent logic: projected recursive estimator, two-term controller, state update.

The scalar functions mirror one agent's view; the underscored batch helpers
do the same arithmetic on stacked arrays and are what the engine calls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MaskMismatch, NonPositiveRadius, ValidationError
from .linsys import GainPair


def project(v, M: float):
    """Closest point of ``[-M, M]`` to ``v`` (elementwise for arrays)."""
    if not np.all(np.asarray(M) > 0):
        raise NonPositiveRadius(f"projection radius must be positive, got {M}")
    out = np.minimum(np.maximum(v, -M), M)
    return float(out) if np.ndim(out) == 0 else out


def default_t0(gamma: float, d_max: int) -> int:
    """``max(1, ceil(gamma * d_max))``, which always satisfies ``t0 > gamma * d_max - 1``."""
    return max(1, math.ceil(gamma * d_max))


def check_t0(t0: int, gamma: float, d_max: int) -> None:
    if int(t0) != t0 or t0 < 1:
        raise ValidationError(f"t0 must be a positive integer, got {t0}")
    if not t0 > gamma * d_max - 1:
        raise ValidationError(
            f"t0={t0} violates t0 > gamma*d_max - 1 = {gamma * d_max - 1:g} "
            "(needed for the compressed-state bound)"
        )


@dataclass(frozen=True, eq=False)
class EstimatorState:
    z_hat: np.ndarray
    M: float
    beta: float
    t: int

    def __post_init__(self):
        z = np.asarray(self.z_hat, dtype=float).reshape(-1)
        if not self.M > 0:
            raise NonPositiveRadius(f"projection radius must be positive, got {self.M}")
        if np.any(np.abs(z) > self.M):
            raise ValidationError("initial estimates must satisfy |z_hat| <= M")
        object.__setattr__(self, "z_hat", z)


@dataclass(frozen=True)
class ControllerConfig:
    gains: GainPair
    gamma: float
    t0: int


def _estimator_update(z_hat, bits, thresholds, cdf, beta, M, t, mask=None):
    innov = cdf(thresholds - z_hat) - bits
    step = (beta / t) * innov
    if mask is not None:
        step = np.where(mask, step, 0.0)
    return np.minimum(np.maximum(z_hat + step, -M), M)


def estimator_step(est: EstimatorState, s_bits, thresholds, cdf, t: int, active=None) -> EstimatorState:
    """Advance all estimates one step; inactive edges keep their value.

    ``s_bits`` holds one entry per *active* edge, in edge order.  Real-valued
    entries are accepted so tests can inject exact expected bits.
    """
    d = est.z_hat.shape[0]
    mask = np.ones(d, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    bits = np.asarray(s_bits, dtype=float).reshape(-1)
    if mask.shape[0] != d or bits.shape[0] != int(mask.sum()):
        raise MaskMismatch(
            f"{bits.shape[0]} bits supplied for {int(mask.sum())} active edges (d={d})"
        )
    full = np.zeros(d)
    full[mask] = bits
    c = np.broadcast_to(np.asarray(thresholds, dtype=float), (d,))
    z = _estimator_update(est.z_hat, full, c, cdf, est.beta, est.M, t, mask)
    return EstimatorState(z_hat=z, M=est.M, beta=est.beta, t=t)


def control_input(x_i, neighbor_estimates, cfg: ControllerConfig, t: int) -> float:
    x_i = np.asarray(x_i, dtype=float).reshape(-1)
    if x_i.shape != cfg.gains.K1.shape:
        raise DimensionMismatch("state and gain lengths differ")
    z_self = float(cfg.gains.K2 @ x_i)
    est = np.asarray(neighbor_estimates, dtype=float).reshape(-1)
    consensus = float(np.sum(est - z_self)) if est.size else 0.0
    return float(cfg.gains.K1 @ x_i) + cfg.gamma / (t + 1) * consensus


def agent_step(x_i, u_i: float, sys) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=float).reshape(-1)
    if x_i.shape[0] != sys.n:
        raise DimensionMismatch(f"state has length {x_i.shape[0]}, system order is {sys.n}")
    return sys.A @ x_i + sys.B * u_i
