"""Graphs, Laplacians, edge-selection matrices and Markov-switching topologies.

Edges are directed pairs ``(i, j)`` meaning *agent i listens to agent j*;
indices are 0-based here (scenario files are 1-based).  The canonical edge
order is lexicographic in ``(listener, source)``, so each listener's edges
form one contiguous block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AsymmetricGraph,
    EdgeNotInUnion,
    MismatchedAgentCount,
    NotErgodic,
    ValidationError,
)

CONNECTIVITY_TOL = 1e-9
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Graph:
    N: int
    edges: tuple = ()

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("graph needs at least one agent")
        edges = []
        seen = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if not (0 <= i < self.N and 0 <= j < self.N):
                raise ValidationError(f"edge {(i, j)} out of range for N={self.N}")
            if i == j:
                raise ValidationError(f"self-loop at agent {i}")
            if (i, j) in seen:
                raise ValidationError(f"duplicate edge {(i, j)}")
            seen.add((i, j))
            edges.append((i, j))
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    @classmethod
    def undirected(cls, N: int, pairs: Iterable[Sequence[int]]) -> "Graph":
        edges = set()
        for i, j in pairs:
            edges.add((int(i), int(j)))
            edges.add((int(j), int(i)))
        return cls(N, tuple(edges))

    @property
    def d(self) -> int:
        return len(self.edges)

    @property
    def listeners(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges], dtype=int)

    @property
    def sources(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges], dtype=int)

    @property
    def adjacency(self) -> np.ndarray:
        Ag = np.zeros((self.N, self.N))
        for i, j in self.edges:
            Ag[i, j] = 1.0
        return Ag

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def d_max(self) -> int:
        return int(self.degrees.max()) if self.N else 0

    @property
    def laplacian(self) -> np.ndarray:
        Ag = self.adjacency
        return np.diag(Ag.sum(axis=1)) - Ag

    def neighbors(self, i: int) -> list[int]:
        return [j for (k, j) in self.edges if k == i]

    def is_symmetric(self) -> bool:
        es = set(self.edges)
        return all((j, i) in es for (i, j) in es)

    def components(self) -> int:
        """Number of weakly connected components (breadth-first search)."""
        adj = self.adjacency
        adj = (adj + adj.T) > 0
        seen = np.zeros(self.N, dtype=bool)
        count = 0
        for start in range(self.N):
            if seen[start]:
                continue
            count += 1
            stack = [start]
            seen[start] = True
            while stack:
                v = stack.pop()
                for w in np.flatnonzero(adj[v]):
                    if not seen[w]:
                        seen[w] = True
                        stack.append(int(w))
        return count


def _check_symmetric_matrix(L: np.ndarray) -> None:
    if not np.allclose(L, L.T, atol=1e-12, rtol=0.0):
        raise AsymmetricGraph("spectral operations need a symmetric Laplacian")


def _as_laplacian(g) -> np.ndarray:
    if isinstance(g, Graph):
        if not g.is_symmetric():
            raise AsymmetricGraph("graph has an edge without its reverse")
        return g.laplacian
    L = np.asarray(g, dtype=float)
    _check_symmetric_matrix(L)
    return L


def laplacian_spectrum(g) -> np.ndarray:
    """Sorted eigenvalues of a symmetric Laplacian (Graph or matrix)."""
    L = _as_laplacian(g)
    return np.sort(np.linalg.eigvalsh(L))


def algebraic_connectivity(g) -> float:
    ev = laplacian_spectrum(g)
    return float(ev[1]) if ev.size > 1 else 0.0


def is_connected(g) -> bool:
    L = _as_laplacian(g)
    if L.shape[0] == 1:
        return True
    return algebraic_connectivity(L) > CONNECTIVITY_TOL


def orthogonal_diagonalizer(g) -> np.ndarray:
    """Orthogonal ``T`` with ``T^T L T`` diagonal (ascending) and first column ``1/sqrt(N)``."""
    L = _as_laplacian(g)
    N = L.shape[0]
    evals, V = np.linalg.eigh(L)
    order = np.argsort(evals)
    evals, V = evals[order], V[:, order]
    ones = np.full(N, 1.0 / np.sqrt(N))
    zero = np.abs(evals) <= CONNECTIVITY_TOL * max(1.0, np.abs(evals).max())
    k = int(zero.sum())
    # ones lies in the kernel; re-orthonormalize the kernel block around it
    Qz, _ = np.linalg.qr(np.column_stack([ones, V[:, :k]]))
    Qz = Qz[:, :k]
    if Qz[0, 0] < 0:
        Qz[:, 0] = -Qz[:, 0]
    Qz[:, 0] = ones
    return np.column_stack([Qz, V[:, k:]])


@dataclass(frozen=True, eq=False)
class SelectionMatrices:
    Q: np.ndarray
    W: np.ndarray
    edge_order: tuple
    P_m: np.ndarray | None = None

    @property
    def mask(self) -> np.ndarray:
        if self.P_m is None:
            return np.ones(len(self.edge_order), dtype=bool)
        return np.diag(self.P_m) > 0.5


def build_selection(union: Graph, sub: Graph | None = None) -> SelectionMatrices:
    """Selection matrices against the union edge order.

    ``Q`` picks the source agent of each edge, ``W`` sums each listener's
    block.  With ``sub`` given, ``P_m`` is the diagonal edge-activity mask,
    ``W`` becomes ``W P_m`` and rows of ``Q`` for inactive edges are zero.
    """
    order = union.edges
    d, N = len(order), union.N
    if sub is not None:
        if sub.N != union.N:
            raise MismatchedAgentCount("sub-graph and union differ in agent count")
        missing = set(sub.edges) - set(order)
        if missing:
            raise EdgeNotInUnion(f"edges {sorted(missing)} are not in the union graph")
        active = set(sub.edges)
    else:
        active = set(order)
    p = np.array([1.0 if e in active else 0.0 for e in order])
    Q = np.zeros((d, N))
    W = np.zeros((N, d))
    for s, (i, j) in enumerate(order):
        Q[s, j] = p[s]
        W[i, s] = p[s]
    P_m = np.diag(p) if sub is not None else None
    return SelectionMatrices(Q=Q, W=W, edge_order=order, P_m=P_m)


def union_graph(graphs: Sequence[Graph]) -> Graph:
    if not graphs:
        raise ValidationError("need at least one graph")
    N = graphs[0].N
    if any(g.N != N for g in graphs):
        raise MismatchedAgentCount("all graphs must share the agent count")
    edges = set()
    for g in graphs:
        edges.update(g.edges)
    return Graph(N, tuple(edges))


def union_and_check_joint_connectivity(graphs: Sequence[Graph]) -> tuple[Graph, bool]:
    union = union_graph(graphs)
    return union, is_connected(union)


def _check_stochastic(P: np.ndarray) -> None:
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValidationError("transition matrix must be square")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ValidationError("transition probabilities must be finite and nonnegative")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValidationError("every transition row must sum to 1")


def is_ergodic(P) -> bool:
    """Primitive check: some power ``P^k`` with ``k <= h^2`` is entrywise positive."""
    P = np.asarray(P, dtype=float)
    h = P.shape[0]
    support = (P > 0).astype(float)
    power = support.copy()
    for _ in range(h * h):
        if np.all(power > 0):
            return True
        power = ((power @ support) > 0).astype(float)
    return bool(np.all(power > 0))


def stationary_distribution(P, check_ergodic: bool = True) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    _check_stochastic(P)
    if check_ergodic and not is_ergodic(P):
        raise NotErgodic("transition matrix is not irreducible and aperiodic")
    h = P.shape[0]
    lhs = np.vstack([P.T - np.eye(h), np.ones((1, h))])
    rhs = np.concatenate([np.zeros(h), [1.0]])
    pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class MarkovTopologyProcess:
    """Markov chain over ``h`` graphs sharing the agent set.

    ``check_ergodic=False`` lets tests freeze the chain with an identity
    transition matrix; ``pi`` is then the uniform distribution.
    """

    graphs: tuple
    transition: np.ndarray
    check_ergodic: bool = True
    union: Graph = field(init=False)
    pi: np.ndarray = field(init=False)
    selections: tuple = field(init=False)

    def __post_init__(self):
        graphs = tuple(self.graphs)
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (len(graphs), len(graphs)):
            raise ValidationError(
                f"transition matrix is {P.shape}, expected {(len(graphs), len(graphs))}"
            )
        union = union_graph(graphs)
        if self.check_ergodic:
            pi = stationary_distribution(P)
        else:
            _check_stochastic(P)
            pi = np.full(len(graphs), 1.0 / len(graphs))
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "union", union)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(
            self, "selections", tuple(build_selection(union, g) for g in graphs)
        )

    @classmethod
    def fixed(cls, graph: Graph) -> "MarkovTopologyProcess":
        return cls((graph,), np.ones((1, 1)))

    @property
    def h(self) -> int:
        return len(self.graphs)

    @property
    def N(self) -> int:
        return self.union.N

    @property
    def pi_min(self) -> float:
        return float(self.pi.min())

    @property
    def masks(self) -> np.ndarray:
        """Boolean ``(h, d)`` edge-activity table against the union order."""
        return np.array([s.mask for s in self.selections], dtype=bool)

    @property
    def laplacians(self) -> np.ndarray:
        return np.array([g.laplacian for g in self.graphs])

    def jointly_connected(self) -> bool:
        return is_connected(self.union)


def sample_chain(process, current: int, rng: np.random.Generator) -> int:
    """Next chain state by inverse CDF on one uniform variate."""
    P = process.transition if isinstance(process, MarkovTopologyProcess) else np.asarray(process)
    return next_states(P, np.array([current]), np.array([rng.random()]))[0]


def next_states(P: np.ndarray, current: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized inverse-CDF transition for a batch of chains."""
    cdf = np.cumsum(P, axis=1)[current]
    nxt = np.sum(u[:, None] >= cdf, axis=1)
    # guard against rounding leaving the last cumulative sum below 1
    return np.minimum(nxt, P.shape[0] - 1)


def expected_laplacian(process: MarkovTopologyProcess) -> np.ndarray:
    return np.tensordot(process.pi, process.laplacians, axes=1)
