"""Single-input linear systems: controllability, Brunovsky form, gains and ZOH.

The stabilization gain ``K1`` and compression row ``K2`` are built in the
Brunovsky (companion) frame from user-chosen compression coefficients ``b``
and mapped back with the transformation ``P``.  By construction
``K2 (A + B K1) = K2`` and ``K2 B = 1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .errors import (
    DimensionMismatch,
    IdentityViolation,
    IllConditionedWarning,
    NonPositivePeriod,
    NotControllable,
    UnstableCompression,
    ValidationError,
)

STABILITY_MARGIN = 1e-9
IDENTITY_TOL = 1e-6
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Pair ``(A, B)`` of a single-input system, ``B`` stored as a 1-D array."""

    A: np.ndarray
    B: np.ndarray
    kind: str = "discrete"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if B.ndim == 2:
            if B.shape[1] != 1:
                raise DimensionMismatch("B must have exactly one column (single input)")
            B = B[:, 0]
        B = B.reshape(-1)
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {n}x{n}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValidationError("system matrices must be finite")
        if self.kind not in ("continuous", "discrete"):
            raise ValidationError(f"unknown system kind {self.kind!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def closed_loop(self, K1) -> np.ndarray:
        return self.A + np.outer(self.B, np.asarray(K1, dtype=float))


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    P: np.ndarray
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    source: LinearSystem
    condition: float = 1.0

    @property
    def a(self) -> np.ndarray:
        """Last row ``[a_1, ..., a_n]`` of the companion matrix."""
        return self.A_tilde[-1].copy()

    def to_original(self) -> LinearSystem:
        Pinv = np.linalg.inv(self.P)
        return LinearSystem(Pinv @ self.A_tilde @ self.P, Pinv @ self.B_tilde, self.source.kind)

    def residual(self) -> float:
        """Relative Frobenius residual of ``P A P^-1 = A_tilde`` and ``P B = B_tilde``."""
        A, B = self.source.A, self.source.B
        rA = np.linalg.norm(self.P @ A @ np.linalg.inv(self.P) - self.A_tilde)
        rB = np.linalg.norm(self.P @ B - self.B_tilde)
        scale = max(1.0, np.linalg.norm(self.A_tilde))
        return float(max(rA / scale, rB))


@dataclass(frozen=True, eq=False)
class GainPair:
    K1: np.ndarray
    K2: np.ndarray
    b: np.ndarray
    frame: str = "original"

    def __post_init__(self):
        object.__setattr__(self, "K1", np.asarray(self.K1, dtype=float).reshape(-1))
        object.__setattr__(self, "K2", np.asarray(self.K2, dtype=float).reshape(-1))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        if self.K1.shape != self.K2.shape:
            raise DimensionMismatch("K1 and K2 must have the same length")


class SynthesizedGains(NamedTuple):
    canonical: GainPair
    original: GainPair


class CompressionStability(NamedTuple):
    stable: bool
    roots: np.ndarray


def controllability_matrix(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    col = np.asarray(B, dtype=float).reshape(-1)
    cols = []
    for _ in range(A.shape[0]):
        cols.append(col)
        col = A @ col
    return np.column_stack(cols)


def controllability_rank(sys: LinearSystem) -> int:
    """Numerical rank of ``[B, AB, ..., A^{n-1}B]``.

    Threshold is ``n * eps * sigma_max``, the usual numerical-rank convention.
    """
    C = controllability_matrix(sys.A, sys.B)
    s = np.linalg.svd(C, compute_uv=False)
    if s[0] == 0.0:
        return 0
    tol = sys.n * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def is_controllable(sys: LinearSystem) -> bool:
    return controllability_rank(sys) == sys.n


def companion(a) -> np.ndarray:
    """Companion matrix with ones on the superdiagonal and last row ``a``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    n = a.shape[0]
    At = np.zeros((n, n))
    if n > 1:
        At[:-1, 1:] = np.eye(n - 1)
    At[-1] = a
    return At


def to_brunovsky(sys: LinearSystem) -> CanonicalForm:
    """Transform a controllable pair to Brunovsky canonical form.

    ``P = C_tilde C^-1`` with ``C``, ``C_tilde`` the controllability matrices.
    The last companion row solves ``C a = A^n B`` (Cayley-Hamilton), so
    ``det(sI - A_tilde) = s^n - a_n s^{n-1} - ... - a_1``.
    """
    if controllability_rank(sys) != sys.n:
        raise NotControllable(
            f"(A, B) has controllability rank {controllability_rank(sys)} < n = {sys.n}"
        )
    n = sys.n
    C = controllability_matrix(sys.A, sys.B)
    cond = float(np.linalg.cond(C))
    if cond > COND_LIMIT:
        warnings.warn(
            f"controllability matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}",
            IllConditionedWarning,
            stacklevel=2,
        )
    AnB = sys.A @ C[:, -1]
    a = np.linalg.solve(C, AnB)
    A_tilde = companion(a)
    B_tilde = np.zeros(n)
    B_tilde[-1] = 1.0
    C_tilde = controllability_matrix(A_tilde, B_tilde)
    P = np.linalg.solve(C.T, C_tilde.T).T
    return CanonicalForm(P=P, A_tilde=A_tilde, B_tilde=B_tilde, source=sys, condition=cond)


def check_compression_stability(b) -> CompressionStability:
    """Roots of ``s^{n-1} + b_{n-1} s^{n-2} + ... + b_1``; stable iff all strictly inside the unit circle."""
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size == 0:
        return CompressionStability(True, np.zeros(0, dtype=complex))
    roots = np.roots(np.concatenate(([1.0], b[::-1]))).astype(complex)
    # np.roots drops leading zeros only; a zero b_1 yields a genuine root at 0
    if roots.size < b.size:
        roots = np.concatenate((roots, np.zeros(b.size - roots.size, dtype=complex)))
    stable = bool(np.all(np.abs(roots) < 1.0 - STABILITY_MARGIN))
    return CompressionStability(stable, roots)


def gain_identity_residuals(A, B, K1, K2) -> tuple[float, float]:
    """Return ``(|K2 B - 1|, ||K2 (A + B K1) - K2||_inf)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1)
    K1 = np.asarray(K1, dtype=float).reshape(-1)
    K2 = np.asarray(K2, dtype=float).reshape(-1)
    r_b = abs(float(K2 @ B) - 1.0)
    r_a = float(np.max(np.abs(K2 @ (A + np.outer(B, K1)) - K2)))
    return r_b, r_a


def canonical_gains(a, b) -> GainPair:
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = a.shape[0]
    if b.shape[0] != n - 1:
        raise DimensionMismatch(f"need {n - 1} compression coefficients, got {b.shape[0]}")
    K2 = np.concatenate((b, [1.0]))
    prev = np.concatenate(([0.0], b))
    K1 = -a + K2 - prev
    return GainPair(K1=K1, K2=K2, b=b, frame="canonical")


def synthesize_gains(canon: CanonicalForm, b, tol: float = IDENTITY_TOL) -> SynthesizedGains:
    stability = check_compression_stability(b)
    if not stability.stable:
        raise UnstableCompression(
            f"compression roots {np.round(stability.roots, 6)} not strictly inside the unit circle"
        )
    can = canonical_gains(canon.a, b)
    orig = GainPair(K1=can.K1 @ canon.P, K2=can.K2 @ canon.P, b=can.b, frame="original")
    checks = (
        (can, canon.A_tilde, canon.B_tilde),
        (orig, canon.source.A, canon.source.B),
    )
    for pair, A, B in checks:
        r_b, r_a = gain_identity_residuals(A, B, pair.K1, pair.K2)
        if r_b > tol or r_a > tol:
            raise IdentityViolation(
                f"{pair.frame} gains: |K2B-1|={r_b:.3g}, ||K2(A+BK1)-K2||={r_a:.3g} exceed {tol:g}"
            )
    return SynthesizedGains(canonical=can, original=orig)


def gains_for(sys: LinearSystem, b) -> SynthesizedGains:
    return synthesize_gains(to_brunovsky(sys), b)


def zoh_discretize(sys: LinearSystem, T: float) -> LinearSystem:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if sys.kind != "continuous":
        raise ValidationError("zoh_discretize expects a continuous-time system")
    if not T > 0:
        raise NonPositivePeriod(f"sampling period must be positive, got {T}")
    n = sys.n
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = sys.A
    aug[:n, n] = sys.B
    E = expm(aug * T)
    return LinearSystem(E[:n, :n], E[:n, n], "discrete")
