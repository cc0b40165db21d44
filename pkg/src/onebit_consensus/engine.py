"""Closed-loop simulation of the one-bit consensus algorithm.

All replications of a configuration advance together along a leading array
axis.  Replication ``r`` owns two random streams derived from
``SeedSequence(seed, spawn_key=(r, 0 | 1))``: channel noise and the Markov
chain.  Each step consumes one ``N x N`` block of standard normals from the
noise stream, indexed ``[listener, source]``, so the noise seen by an edge
does not depend on which other edges exist or are active.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import LinkConfig, quantize
from .errors import (
    BoundednessViolation,
    DimensionMismatch,
    NotConnected,
    NotJointlyConnected,
    NumericalError,
    ValidationError,
)
from .linsys import GainPair, LinearSystem, gain_identity_residuals
from .protocol import _estimator_update, check_t0, default_t0
from .topology import (
    Graph,
    MarkovTopologyProcess,
    build_selection,
    expected_laplacian,
    is_connected,
    next_states,
    orthogonal_diagonalizer,
)

BOUND_TOL = 1e-9
DEBUG_TOL = 1e-10
NOISE_CHUNK = 1024


@dataclass(eq=False)
class SimConfig:
    """Everything one run of the algorithm needs.

    ``exact_estimates`` and ``identical_streams`` are test-only switches: the
    first replaces every estimate by the true compressed state, the second
    gives every replication the same random streams.
    """

    system: LinearSystem
    gains: GainPair
    topology: Graph | MarkovTopologyProcess
    link: LinkConfig
    beta: float
    gamma: float
    M: float
    x0: np.ndarray
    zhat0: np.ndarray | float = 0.0
    t0: int | None = None
    horizon: int = 100_000
    seed: int = 0
    replications: int = 50
    initial_mode: int = 0
    record: str = "log"
    points_per_decade: int = 5
    debug: bool = False
    exact_estimates: bool = False
    identical_streams: bool = False
    gain_tol: float = 1e-6

    def __post_init__(self):
        self.validate()

    @property
    def process(self) -> MarkovTopologyProcess:
        if isinstance(self.topology, MarkovTopologyProcess):
            return self.topology
        return MarkovTopologyProcess.fixed(self.topology)

    @property
    def switching(self) -> bool:
        return isinstance(self.topology, MarkovTopologyProcess)

    @property
    def N(self) -> int:
        return self.process.N

    def validate(self) -> None:
        sys = self.system
        if sys.kind != "discrete":
            raise ValidationError("simulation needs a discrete-time system")
        n = sys.n
        if self.gains.K1.shape[0] != n:
            raise DimensionMismatch(f"gains have length {self.gains.K1.shape[0]}, system order is {n}")
        r_b, r_a = gain_identity_residuals(sys.A, sys.B, self.gains.K1, self.gains.K2)
        if r_b > self.gain_tol or r_a > self.gain_tol:
            raise ValidationError(
                f"gain identities K2B=1, K2(A+BK1)=K2 off by {max(r_b, r_a):.3g} "
                f"(tolerance {self.gain_tol:g})"
            )
        proc = self.process
        union = proc.union
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (proc.N, n):
            raise DimensionMismatch(f"x0 has shape {x0.shape}, expected {(proc.N, n)}")
        self.x0 = x0
        if self.link.d != union.d:
            raise DimensionMismatch(f"{self.link.d} thresholds for {union.d} edges")
        zhat0 = np.broadcast_to(np.asarray(self.zhat0, dtype=float), (union.d,)).copy()
        self.zhat0 = zhat0
        if not self.M > 0:
            raise ValidationError("M must be positive")
        if np.any(np.abs(x0 @ self.gains.K2) > self.M):
            raise ValidationError(
                f"max |K2 x_i^0| = {np.abs(x0 @ self.gains.K2).max():.6g} exceeds M = {self.M} "
                "(initiation requires |K2 x_i^0| <= M)"
            )
        if np.any(np.abs(zhat0) > self.M):
            raise ValidationError("initial estimates exceed M (initiation requires |z_hat^0| <= M)")
        if self.beta < 0 or self.gamma < 0:
            raise ValidationError("beta and gamma must be nonnegative")
        if self.t0 is None:
            self.t0 = default_t0(self.gamma, union.d_max)
        check_t0(self.t0, self.gamma, union.d_max)
        if self.horizon < 1 or self.replications < 1:
            raise ValidationError("horizon and replications must be at least 1")
        if not 0 <= self.initial_mode < proc.h:
            raise ValidationError(f"initial_mode {self.initial_mode} out of range")
        if self.record not in ("log", "all"):
            raise ValidationError("record must be 'log' or 'all'")
        if proc.N > 1:
            if not self.switching and not is_connected(union):
                raise NotConnected("fixed topology must be connected")
            if self.switching and not is_connected(union):
                raise NotJointlyConnected("switching graphs are not jointly connected")

    def diagonalizer(self) -> np.ndarray:
        proc = self.process
        L = expected_laplacian(proc) if self.switching else proc.union.laplacian
        return orthogonal_diagonalizer(L)


def record_times(t_first: int, t_last: int, mode: str = "log", per_decade: int = 5) -> np.ndarray:
    """Absolute-time indices (``t0 + k``) at which metrics are kept.

    ``log``: every step up to t=100, then ``per_decade`` points per decade.
    """
    if mode == "all" or t_last <= 100:
        return np.arange(t_first, t_last + 1)
    dense = np.arange(t_first, min(100, t_last) + 1)
    count = int(math.floor((math.log10(t_last) - 2.0) * per_decade + 1e-9)) + 1
    sparse = np.unique(np.round(10.0 ** (2.0 + np.arange(count) / per_decade)).astype(int))
    times = np.union1d(dense, sparse)
    times = times[(times >= t_first) & (times <= t_last)]
    return np.union1d(times, [t_last])


@dataclass(eq=False)
class Trace:
    """Per-recorded-step path of one replication (absolute time ``t``)."""

    t: np.ndarray
    m: np.ndarray
    x: np.ndarray
    zhat: np.ndarray
    cons_err: np.ndarray
    V: np.ndarray
    R: np.ndarray
    max_compressed: float = 0.0

    @property
    def max_cons_err(self) -> np.ndarray:
        return self.cons_err.max(axis=1)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.t, self.m, self.x, self.zhat, self.cons_err, self.V, self.R):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass(eq=False)
class EnsembleMetrics:
    """Replication means (estimates of the expectations) with standard errors."""

    t: np.ndarray
    cons_err: np.ndarray
    cons_err_stderr: np.ndarray
    V: np.ndarray
    V_stderr: np.ndarray
    R: np.ndarray
    R_stderr: np.ndarray
    replications: int
    max_compressed: float = 0.0
    representative: Trace | None = field(default=None, repr=False)

    @property
    def max_cons_err(self) -> np.ndarray:
        """Max over agents of the per-agent mean-square consensus error."""
        return self.cons_err.max(axis=1)

    def metric(self, name: str) -> np.ndarray:
        if name in ("cons_err", "mse", "max_cons_err"):
            return self.max_cons_err
        if name == "V":
            return self.V
        if name == "R":
            return self.R
        raise KeyError(name)


def consensus_error(x) -> tuple[np.ndarray, float]:
    """Per-agent ``||x_i - mean(x)||^2`` and its maximum; ``x`` is ``(N, n)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    err = np.sum((x - x.mean(axis=0)) ** 2, axis=1)
    return err, float(err.max())


def lyapunov_samples(x, z_hat, T_G, K2, Q) -> tuple[float, float]:
    """Single-path samples of ``||(T_G^-1 kron K2) delta||^2`` and ``||z_hat - (Q kron K2) x||^2``."""
    T_G = np.asarray(T_G, dtype=float)
    Q = np.asarray(Q, dtype=float)
    K2 = np.asarray(K2, dtype=float).reshape(1, -1)
    N = T_G.shape[0]
    x = np.asarray(x, dtype=float).reshape(-1)
    n = K2.shape[1]
    if x.shape[0] != N * n:
        raise DimensionMismatch(f"stacked state has length {x.shape[0]}, expected {N * n}")
    z_hat = np.asarray(z_hat, dtype=float).reshape(-1)
    if z_hat.shape[0] != Q.shape[0]:
        raise DimensionMismatch("z_hat length does not match Q")
    J = np.eye(N) - np.ones((N, N)) / N
    delta = np.kron(J, np.eye(n)) @ x
    V = np.kron(np.linalg.inv(T_G), K2) @ delta
    eps = z_hat - np.kron(Q, K2) @ x
    return float(V @ V), float(eps @ eps)


def _streams(seed: int, reps, kind: int):
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r, kind))))
        for r in reps
    ]


def _simulate(cfg: SimConfig, reps) -> dict:
    proc = cfg.process
    union = proc.union
    N, n, d = proc.N, cfg.system.n, union.d
    A, B = cfg.system.A, cfg.system.B
    K1, K2 = cfg.gains.K1, cfg.gains.K2
    listeners, sources = union.listeners, union.sources
    W = build_selection(union).W
    masks = proc.masks
    laps = proc.laplacians
    P = proc.transition
    C = cfg.link.thresholds
    cdf = cfg.link.noise.cdf
    sigma = cfg.link.noise.sigma
    beta, gamma, M = cfg.beta, cfg.gamma, cfg.M
    T_G = cfg.diagonalizer()
    Rn = len(reps)

    noise_rngs = _streams(cfg.seed, reps, 0)
    chain_rngs = _streams(cfg.seed, reps, 1) if cfg.switching else None

    t_first, t_last = cfg.t0 + 1, cfg.t0 + cfg.horizon
    times = record_times(t_first, t_last, cfg.record, cfg.points_per_decade)
    K = times.shape[0]
    out_cons = np.empty((K, Rn, N))
    out_V = np.empty((K, Rn))
    out_R = np.empty((K, Rn))
    out_x = np.empty((K, N, n))
    out_z = np.empty((K, d))
    out_m = np.empty(K, dtype=np.int64)

    x = np.broadcast_to(cfg.x0, (Rn, N, n)).copy()
    zhat = np.broadcast_to(cfg.zhat0, (Rn, d)).copy()
    mode = np.full(Rn, cfg.initial_mode, dtype=np.int64)
    max_abs_z = 0.0
    rec = 0

    for k0 in range(0, cfg.horizon, NOISE_CHUNK):
        chunk = min(NOISE_CHUNK, cfg.horizon - k0)
        blocks = np.stack([g.standard_normal((chunk, N, N)) for g in noise_rngs])
        edge_noise = sigma * blocks[:, :, listeners, sources]
        if chain_rngs is not None:
            uniforms = np.stack([g.random(chunk) for g in chain_rngs])
        for c in range(chunk):
            k = k0 + c
            t = t_first + k
            if chain_rngs is not None and k > 0:
                mode = next_states(P, mode, uniforms[:, c])
            z = x @ K2
            zmax = float(np.abs(z).max())
            if zmax > max_abs_z:
                max_abs_z = zmax
                if zmax > M + BOUND_TOL:
                    raise BoundednessViolation(
                        f"|K2 x_i({t})| = {zmax:.12g} exceeds M + {BOUND_TOL:g} = {M + BOUND_TOL}"
                    )
            mask = masks[mode]
            if cfg.exact_estimates:
                zhat = z[:, sources].copy()
            else:
                bits = quantize(z[:, sources], edge_noise[:, c], C)
                zhat = _estimator_update(zhat, bits, C, cdf, beta, M, t, mask)

            if rec < K and times[rec] == t:
                xbar = x.mean(axis=1, keepdims=True)
                delta = x - xbar
                out_cons[rec] = np.sum(delta**2, axis=2)
                vs = (delta @ K2) @ T_G
                out_V[rec] = np.sum(vs**2, axis=1)
                eps = zhat - z[:, sources]
                out_R[rec] = np.sum(eps**2, axis=1)
                out_x[rec] = x[0]
                out_z[rec] = zhat[0]
                out_m[rec] = mode[0]
                rec += 1

            err = np.where(mask, zhat - z[:, listeners], 0.0)
            cons = err @ W.T
            u = x @ K1 + (gamma / (t + 1)) * cons
            x_next = x @ A.T + u[..., None] * B

            if cfg.debug:
                _debug_checks(cfg, x, x_next, z, zhat, mask, W, laps[mode], t)
            x = x_next

        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state before t={t_first + k0 + chunk}")

    return {
        "t": times,
        "m": out_m,
        "x": out_x,
        "zhat": out_z,
        "cons_err": out_cons,
        "V": out_V,
        "R": out_R,
        "max_compressed": max_abs_z,
    }


def _debug_checks(cfg, x, x_next, z, zhat, mask, W, L_active, t):
    gamma = cfg.gamma
    K2 = cfg.gains.K2
    z_next = x_next @ K2
    deg = mask.astype(float) @ W.T
    incoming = np.where(mask, zhat, 0.0) @ W.T
    predicted = (1.0 - gamma * deg / (t + 1)) * z + gamma / (t + 1) * incoming
    gap = float(np.abs(predicted - z_next).max())
    if gap > DEBUG_TOL:
        raise NumericalError(f"compressed-state recursion off by {gap:.3g} at t={t}")
    if cfg.exact_estimates:
        scalar = z - gamma / (t + 1) * np.einsum("rij,rj->ri", L_active, z)
        gap = float(np.abs(scalar - z_next).max())
        if gap > DEBUG_TOL:
            raise NumericalError(f"scalar consensus recursion off by {gap:.3g} at t={t}")


def _trace_from(raw: dict, idx: int = 0) -> Trace:
    return Trace(
        t=raw["t"],
        m=raw["m"],
        x=raw["x"],
        zhat=raw["zhat"],
        cons_err=raw["cons_err"][:, idx, :],
        V=raw["V"][:, idx],
        R=raw["R"][:, idx],
        max_compressed=raw["max_compressed"],
    )


def run_fixed(cfg: SimConfig) -> Trace:
    if cfg.switching and cfg.topology.h != 1:
        raise ValidationError("run_fixed needs a single graph; use run_switching")
    return _trace_from(_simulate(cfg, [0]))


def run_switching(cfg: SimConfig) -> Trace:
    if not cfg.switching:
        raise ValidationError("run_switching needs a MarkovTopologyProcess")
    return _trace_from(_simulate(cfg, [0]))


def run(cfg: SimConfig) -> Trace:
    return run_switching(cfg) if cfg.switching else run_fixed(cfg)


def run_replications(cfg: SimConfig) -> EnsembleMetrics:
    reps = [0] * cfg.replications if cfg.identical_streams else list(range(cfg.replications))
    raw = _simulate(cfg, reps)
    Rn = len(reps)

    def mean_se(a):
        mean = a.mean(axis=1)
        if Rn == 1:
            return mean, np.zeros_like(mean)
        return mean, a.std(axis=1, ddof=1) / math.sqrt(Rn)

    cons, cons_se = mean_se(raw["cons_err"])
    V, V_se = mean_se(raw["V"])
    R, R_se = mean_se(raw["R"])
    return EnsembleMetrics(
        t=raw["t"],
        cons_err=cons,
        cons_err_stderr=cons_se,
        V=V,
        V_stderr=V_se,
        R=R,
        R_stderr=R_se,
        replications=Rn,
        max_compressed=raw["max_compressed"],
        representative=_trace_from(raw, 0),
    )
