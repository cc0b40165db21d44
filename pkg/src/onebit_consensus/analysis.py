"""Convergence-theorem constants, step-gain thresholds and empirical rate tools."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .channel import LinkConfig, normal_pdf
from .errors import (
    GammaTooSmall,
    InsufficientHorizon,
    NonPositiveMetric,
    NotConnected,
    UnstableCompression,
    ValidationError,
)
from .linsys import check_compression_stability
from .topology import (
    Graph,
    MarkovTopologyProcess,
    build_selection,
    expected_laplacian,
    laplacian_spectrum,
    orthogonal_diagonalizer,
)

REGIME_TOL = 1e-12


@dataclass(frozen=True)
class TheoremConstants:
    lambda2: float
    lambda_G: float
    lambda_QW: float
    lambda_QL: float
    alpha: float
    f_M: float
    pi_min: float
    d_max: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RateReport:
    lambda_min_U: float
    regime: str
    beta_threshold_consensus: float
    beta_threshold_rate: float | None
    gamma_threshold: float
    passes_consensus: bool
    passes_rate: bool


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    points: int


class OracleResult(NamedTuple):
    xi: np.ndarray
    xi_star: float | None


def _sq_norm(X: np.ndarray) -> float:
    """Squared spectral norm as the top eigenvalue of the Gram matrix."""
    X = np.atleast_2d(X)
    G = X.T @ X if X.shape[0] >= X.shape[1] else X @ X.T
    return float(max(np.linalg.eigvalsh(G).max(), 0.0))


def theorem_constants(topology, link: LinkConfig, M: float) -> TheoremConstants:
    """Constants of the coupled Lyapunov inequalities.

    A plain :class:`Graph` is treated as a one-state chain, so the fixed case
    is the ``h = 1`` reduction (``pi_min = 1``, ``L_check = L``).
    """
    proc = topology if isinstance(topology, MarkovTopologyProcess) else MarkovTopologyProcess.fixed(topology)
    union = proc.union
    N = union.N
    L_check = expected_laplacian(proc)
    ev = laplacian_spectrum(L_check)
    lambda2 = float(ev[1]) if N > 1 else 0.0
    if N > 1 and lambda2 <= 1e-9:
        raise NotConnected("constants need a (jointly) connected topology")
    T_G = orthogonal_diagonalizer(L_check)
    J = np.eye(N) - np.ones((N, N)) / N
    Q = build_selection(union).Q
    lam_G = lam_QW = lam_QL = 0.0
    for g, sel in zip(proc.graphs, proc.selections):
        W_i = sel.W
        lam_G = max(lam_G, _sq_norm(T_G.T @ J @ W_i))
        lam_QW = max(lam_QW, _sq_norm(Q @ W_i))
        lam_QL = max(lam_QL, _sq_norm(Q @ g.laplacian @ T_G))
    alpha = 2.0 * math.sqrt(lam_QW) + (lam_QL * lambda2 / lam_G if lam_G > 0 else 0.0)
    c = link.thresholds
    f_M = float(np.min(link.noise.pdf(np.abs(c) + M))) if c.size else float(normal_pdf(M, link.noise.sigma))
    return TheoremConstants(
        lambda2=lambda2,
        lambda_G=lam_G,
        lambda_QW=lam_QW,
        lambda_QL=lam_QL,
        alpha=alpha,
        f_M=f_M,
        pi_min=proc.pi_min,
        d_max=union.d_max,
    )


def beta_threshold_consensus(consts: TheoremConstants, gamma: float) -> float:
    k = consts
    return (gamma * k.lambda_G**2 / k.lambda2**3 + gamma * k.alpha) / (2.0 * k.f_M * k.pi_min)


def beta_threshold_rate(consts: TheoremConstants, gamma: float) -> float:
    k = consts
    if not gamma * k.lambda2 > 1.0:
        raise GammaTooSmall(f"rate threshold needs gamma > 1/lambda2 = {1.0 / k.lambda2:.6g}")
    num = gamma**2 * k.lambda_G**2 / (k.lambda2**2 * (gamma * k.lambda2 - 1.0)) + gamma * k.alpha + 1.0
    return num / (2.0 * k.f_M * k.pi_min)


def beta_thresholds(consts: TheoremConstants, gamma: float) -> tuple[float, float | None, float]:
    """``(consensus threshold, rate threshold or None, gamma threshold)``."""
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    try:
        rate = beta_threshold_rate(consts, gamma)
    except GammaTooSmall:
        rate = None
    return beta_threshold_consensus(consts, gamma), rate, 1.0 / consts.lambda2


def classify_regime(lam: float) -> str:
    if abs(lam - 1.0) <= REGIME_TOL:
        return "O(ln t / t)"
    if lam < 1.0:
        return f"O(t^-{lam:.6g})" if lam > 0 else "no guarantee"
    return "O(1/t)"


def lambda_min_from_entries(u1: float, u2: float, u4: float) -> float:
    return 0.5 * (u1 + u4) - math.sqrt((0.5 * (u1 - u4)) ** 2 + u2**2)


def lambda_min_U(beta: float, gamma: float, consts: TheoremConstants) -> tuple[float, str]:
    k = consts
    u1 = gamma * k.lambda2
    u2 = gamma * k.lambda_G / k.lambda2
    u4 = 2.0 * beta * k.f_M * k.pi_min - gamma * k.alpha
    lam = lambda_min_from_entries(u1, u2, u4)
    return lam, classify_regime(lam)


def rate_report(consts: TheoremConstants, beta: float, gamma: float) -> RateReport:
    cons, rate, g_min = beta_thresholds(consts, gamma)
    lam, regime = lambda_min_U(beta, gamma, consts)
    return RateReport(
        lambda_min_U=lam,
        regime=regime,
        beta_threshold_consensus=cons,
        beta_threshold_rate=rate,
        gamma_threshold=g_min,
        passes_consensus=bool(beta > cons),
        passes_rate=bool(rate is not None and beta > rate and gamma > g_min),
    )


def check_report(consts: TheoremConstants, beta: float, gamma: float) -> dict:
    """Flat dictionary in the ``check`` subcommand's output layout."""
    rep = rate_report(consts, beta, gamma)
    return {
        "lambda2": consts.lambda2,
        "lambda_G": consts.lambda_G,
        "lambda_QW": consts.lambda_QW,
        "lambda_QL": consts.lambda_QL,
        "alpha": consts.alpha,
        "f_M": consts.f_M,
        "pi_min": consts.pi_min,
        "beta_min_consensus": rep.beta_threshold_consensus,
        "beta_min_rate": rep.beta_threshold_rate,
        "gamma_min": rep.gamma_threshold,
        "lambda_min_U": rep.lambda_min_U,
        "regime": rep.regime,
        "pass": {"consensus": rep.passes_consensus, "rate": rep.passes_rate},
    }


def rate_slope(t, values=None, window=None) -> SlopeFit:
    """Least-squares slope of ``log(values)`` against ``log(t)`` over ``window``.

    ``t`` may also be an :class:`~onebit_consensus.engine.EnsembleMetrics`
    with ``values`` naming the metric (default: max-over-agents consensus MSE).
    """
    if hasattr(t, "metric"):
        metrics = t
        values = metrics.metric(values or "cons_err")
        t = metrics.t
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (t[-1] / 100.0, t[-1])
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 2:
        raise ValidationError(f"fewer than two points in window {window}")
    if np.any(y[sel] <= 0):
        raise NonPositiveMetric("metric must be positive on the fit window")
    lx, ly = np.log(t[sel]), np.log(y[sel])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2, int(sel.sum()))


def difference_equation_oracle(b, eta, eta_limit: float | None = None) -> OracleResult:
    """Iterate ``D^{n-1} xi + b_{n-1} D^{n-2} xi + ... + b_1 xi = eta`` from zero.

    Returns the sequence ``xi(0), ..., xi(len(eta) + n - 2)`` and, when a limit
    of ``eta`` is given, the predicted limit ``eta* / prod(1 - r_j)``.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    stab = check_compression_stability(b)
    if not stab.stable:
        raise UnstableCompression(f"roots {np.round(stab.roots, 6)} not strictly inside the unit circle")
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if not np.all(np.isfinite(eta)):
        raise ValidationError("eta must be finite")
    order = b.size
    xi = np.zeros(eta.size + order)
    for t in range(eta.size):
        xi[t + order] = eta[t] - float(b @ xi[t : t + order])
    xi_star = None
    if eta_limit is not None:
        denom = np.prod(1.0 - stab.roots).real if order else 1.0
        xi_star = float(eta_limit / denom)
    return OracleResult(xi, xi_star)


def verify_original_from_compressed(trace, b, K2, transform=None) -> float:
    """Max residual of ``sum_k b_k x_in(t+k-1) + x_in(t+n-1) = K2 x_i(t+n-1)``.

    ``trace`` must hold consecutive steps in the canonical frame, or supply
    ``transform`` (the matrix ``P``) to map original-frame states first.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    K2 = np.asarray(K2, dtype=float).reshape(-1)
    n = b.size + 1
    x = np.asarray(trace.x, dtype=float)
    t = np.asarray(trace.t)
    if t.size < n:
        raise InsufficientHorizon(f"need at least {n} consecutive steps, have {t.size}")
    if np.any(np.diff(t) != 1):
        raise ValidationError("trace must be recorded at every step (record='all')")
    if transform is not None:
        x = x @ np.asarray(transform, dtype=float).T
    last = x[:, :, -1]
    span = t.size - n + 1
    coeffs = np.concatenate((b, [1.0]))
    lhs = sum(coeffs[k] * last[k : k + span] for k in range(n))
    rhs = x[n - 1 : n - 1 + span] @ K2
    return float(np.max(np.abs(lhs - rhs)))
