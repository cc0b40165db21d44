import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebit_consensus.errors import (
    AsymmetricGraph,
    EdgeNotInUnion,
    MismatchedAgentCount,
    NotErgodic,
    ValidationError,
)
from onebit_consensus.topology import (
    Graph,
    MarkovTopologyProcess,
    algebraic_connectivity,
    build_selection,
    expected_laplacian,
    is_connected,
    is_ergodic,
    laplacian_spectrum,
    next_states,
    orthogonal_diagonalizer,
    sample_chain,
    stationary_distribution,
    union_and_check_joint_connectivity,
)

from conftest import EX1_PAIRS, EX2_P, EX2_PAIRS


def random_graph(rng, N, p):
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N) if rng.random() < p]
    return Graph.undirected(N, pairs)


def test_graph_validation():
    with pytest.raises(ValidationError):
        Graph(3, ((0, 0),))
    with pytest.raises(ValidationError):
        Graph(3, ((0, 1), (0, 1)))
    with pytest.raises(ValidationError):
        Graph(3, ((0, 3),))
    g = Graph(3, ((2, 0), (0, 1)))
    assert g.edges == ((0, 1), (2, 0))


def test_laplacian_basic(ex1_graph):
    L = ex1_graph.laplacian
    np.testing.assert_array_equal(L.sum(axis=1), 0)
    np.testing.assert_array_equal(L.sum(axis=0), 0)
    assert ex1_graph.d == 20 and ex1_graph.d_max == 3


def test_spectrum_examples():
    np.testing.assert_allclose(laplacian_spectrum(Graph.undirected(3, [(0, 1), (1, 2)])), [0, 1, 3], atol=1e-12)
    np.testing.assert_allclose(laplacian_spectrum(Graph.undirected(3, [(0, 1), (1, 2), (0, 2)])), [0, 3, 3], atol=1e-12)
    empty = Graph(2)
    np.testing.assert_allclose(laplacian_spectrum(empty), [0, 0])
    assert not is_connected(empty)


def test_spectrum_path_matches_characteristic_polynomial():
    # det(lambda I - L) for the 3-path is lambda (lambda - 1)(lambda - 3)
    L = Graph.undirected(3, [(0, 1), (1, 2)]).laplacian
    for lam in (0.0, 1.0, 3.0):
        assert abs(np.linalg.det(lam * np.eye(3) - L)) < 1e-12


def test_asymmetric_rejected():
    with pytest.raises(AsymmetricGraph):
        laplacian_spectrum(Graph(2, ((0, 1),)))


def test_ring_with_chords_lambda2(ex1_graph):
    # exact characteristic polynomial (sympy): l (l - 5)(l - 3)(l^2 - 6 l + 7)^2
    lam2 = algebraic_connectivity(ex1_graph)
    assert abs(lam2 - (3 - np.sqrt(2))) < 1e-9
    np.testing.assert_allclose(
        laplacian_spectrum(ex1_graph),
        np.sort([0, 5, 3] + [3 - np.sqrt(2), 3 + np.sqrt(2)] * 2),
        atol=1e-9,
    )
    # adding chords to the ring can only raise lambda2
    assert lam2 >= 2 - 2 * np.cos(2 * np.pi / 7)


def test_rank_equals_n_minus_components():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = random_graph(rng, 8, 0.25)
        assert np.linalg.matrix_rank(g.laplacian) == g.N - g.components()


def test_diagonalizer_examples():
    np.testing.assert_array_equal(orthogonal_diagonalizer(Graph(1)), [[1.0]])
    T = orthogonal_diagonalizer(Graph.undirected(2, [(0, 1)]))
    np.testing.assert_allclose(T[:, 0], [1 / np.sqrt(2)] * 2)
    assert abs(abs(T[0, 1]) - 1 / np.sqrt(2)) < 1e-12 and T[0, 1] == -T[1, 1]
    D = T.T @ Graph.undirected(2, [(0, 1)]).laplacian @ T
    np.testing.assert_allclose(D, np.diag([0, 2]), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), N=st.integers(1, 9), p=st.floats(0, 1))
def test_diagonalizer_properties(seed, N, p):
    g = random_graph(np.random.default_rng(seed), N, p)
    T = orthogonal_diagonalizer(g)
    assert np.max(np.abs(T.T @ T - np.eye(N))) <= 1e-9
    D = T.T @ g.laplacian @ T
    assert np.max(np.abs(D - np.diag(np.diag(D)))) <= 1e-9
    np.testing.assert_array_equal(T[:, 0], np.full(N, 1 / np.sqrt(N)))


def test_selection_two_agents():
    s = build_selection(Graph.undirected(2, [(0, 1)]))
    np.testing.assert_array_equal(s.Q, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(s.W, np.eye(2))
    assert s.P_m is None


def test_selection_sub_graphs(ex1_graph):
    empty = build_selection(ex1_graph, Graph(7))
    assert not empty.P_m.any() and not empty.W.any()
    full = build_selection(ex1_graph, ex1_graph)
    np.testing.assert_array_equal(full.P_m, np.eye(20))
    with pytest.raises(EdgeNotInUnion):
        build_selection(Graph.undirected(3, [(0, 1)]), Graph.undirected(3, [(1, 2)]))
    with pytest.raises(MismatchedAgentCount):
        build_selection(Graph.undirected(3, [(0, 1)]), Graph(4))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), N=st.integers(2, 9))
def test_selection_recovers_adjacency(seed, N):
    g = random_graph(np.random.default_rng(seed), N, 0.5)
    s = build_selection(g)
    assert set(np.unique(s.Q)) <= {0.0, 1.0} and np.all(s.Q.sum(axis=1) <= 1)
    np.testing.assert_array_equal(s.W @ s.Q, g.adjacency)
    np.testing.assert_array_equal(s.W.sum(axis=1), g.degrees)
    x = np.random.default_rng(seed).normal(size=N)
    np.testing.assert_allclose(s.W @ s.Q @ x, [sum(x[j] for j in g.neighbors(i)) for i in range(N)])


def test_joint_connectivity():
    u, ok = union_and_check_joint_connectivity(
        [Graph.undirected(3, [(0, 1)]), Graph.undirected(3, [(1, 2)])]
    )
    assert ok and u.d == 4
    _, ok = union_and_check_joint_connectivity([Graph(3), Graph(3)])
    assert not ok
    g = Graph.undirected(3, [(0, 1), (1, 2)])
    u, ok = union_and_check_joint_connectivity([g])
    assert ok and u.edges == g.edges
    with pytest.raises(MismatchedAgentCount):
        union_and_check_joint_connectivity([Graph(3), Graph(4)])


def test_stationary_examples():
    np.testing.assert_allclose(stationary_distribution(EX2_P), [1 / 3] * 3, atol=1e-12)
    np.testing.assert_allclose(stationary_distribution([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5])
    with pytest.raises(NotErgodic):
        stationary_distribution(np.eye(2))
    assert not is_ergodic([[0, 1], [1, 0]])
    with pytest.raises(ValidationError):
        stationary_distribution([[0.5, 0.6], [0.5, 0.5]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), h=st.integers(1, 6))
def test_stationary_invariance(seed, h):
    P = np.random.default_rng(seed).uniform(0.05, 1, (h, h))
    P /= P.sum(axis=1, keepdims=True)
    pi = stationary_distribution(P)
    assert np.max(np.abs(pi @ P - pi)) <= 1e-10 and abs(pi.sum() - 1) < 1e-12


def test_sample_chain_deterministic_row():
    P = np.array([[0.0, 1.0, 0.0], [0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    rng = np.random.default_rng(1)
    assert all(sample_chain(P, 0, rng) == 1 for _ in range(100))


def test_sample_chain_reproducible():
    def path(seed):
        rng = np.random.default_rng(seed)
        s, out = 0, []
        for _ in range(200):
            s = sample_chain(EX2_P, s, rng)
            out.append(s)
        return out

    assert path(5) == path(5)


def test_next_states_inverse_cdf():
    P = np.array([[0.2, 0.3, 0.5]] * 3)
    u = np.array([0.0, 0.199, 0.2, 0.49, 0.5, 0.999999])
    np.testing.assert_array_equal(next_states(P, np.zeros(6, dtype=int), u), [0, 0, 1, 1, 2, 2])


def test_expected_laplacian_examples():
    g = Graph.undirected(3, [(0, 1), (1, 2)])
    np.testing.assert_array_equal(expected_laplacian(MarkovTopologyProcess.fixed(g)), g.laplacian)
    g1 = Graph.undirected(3, [(0, 1)])
    g2 = Graph.undirected(3, [(1, 2)])
    proc = MarkovTopologyProcess((g1, g2), [[0.5, 0.5], [0.5, 0.5]])
    hand = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]) / 2
    np.testing.assert_allclose(expected_laplacian(proc), hand)


def test_process_masks():
    graphs = tuple(Graph.undirected(7, p) for p in EX2_PAIRS)
    proc = MarkovTopologyProcess(graphs, EX2_P)
    assert proc.union.edges == Graph.undirected(7, EX1_PAIRS).edges
    # every union edge belongs to exactly one sub-graph in this split
    np.testing.assert_array_equal(proc.masks.sum(axis=0), 1)
    for sel, g in zip(proc.selections, graphs):
        active = {e for e, on in zip(sel.edge_order, sel.mask) if on}
        assert active == set(g.edges)
    assert proc.jointly_connected() and proc.pi_min == pytest.approx(1 / 3)
    assert not any(is_connected(g) for g in graphs)
