import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d4l import graphnet as gn

from oracles import reachable


def random_digraph(n, p, seed):
    rng = np.random.default_rng(seed)
    draw = rng.random((n, n)) < p
    return gn.Digraph(n, frozenset((j, i) for j in range(n) for i in range(n) if draw[j, i]))


def test_self_loops_implicit():
    g = gn.Digraph(3, frozenset({(0, 1), (2, 2)}))
    assert (2, 2) not in g.edges
    for i in range(3):
        assert i in g.in_neighbors(i) and i in g.out_neighbors(i)
    assert g.adjacency()[1, 0] and not g.adjacency()[0, 1]


def test_edge_out_of_range():
    with pytest.raises(gn.GraphError):
        gn.Digraph(2, frozenset({(0, 2)}))


def test_clustered_n4_shape():
    g = gn.generate_clustered_digraph(10, 2, 0.9, 0.3, seed=1, strongly_connected=True)
    assert g.num_nodes == 10
    assert gn.is_strongly_connected(g)
    assert gn.cluster_sizes(10, 2) == [5, 5]


def test_clustered_complete_when_forced():
    g = gn.generate_clustered_digraph(4, 1, 1.0, 0.0, seed=3)
    assert g == gn.Digraph.complete(4)


def test_clustered_deterministic():
    a = gn.generate_clustered_digraph(12, 3, 0.5, 0.1, seed=9)
    b = gn.generate_clustered_digraph(12, 3, 0.5, 0.1, seed=9)
    assert a == b


def test_cluster_sizes_uneven():
    assert gn.cluster_sizes(10, 3) == [4, 3, 3]


@pytest.mark.parametrize("bad", [(-0.1, 0.2), (0.5, 1.5)])
def test_clustered_bad_probabilities(bad):
    with pytest.raises(gn.GraphError):
        gn.generate_clustered_digraph(6, 2, *bad, seed=0)


def test_clustered_too_many_clusters():
    with pytest.raises(gn.GraphError):
        gn.generate_clustered_digraph(3, 4, 0.5, 0.5, seed=0)


def test_strong_connectivity_matches_reachability_oracle():
    g = gn.generate_clustered_digraph(50, 5, 0.2, 0.1, seed=7)
    out = {}
    for j, i in g.edges:
        out.setdefault(j, set()).add(i)
    oracle = all(len(reachable(out, s)) == 50 for s in range(50))
    assert gn.is_strongly_connected(g) == oracle


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), p=st.floats(0.0, 0.6), seed=st.integers(0, 10_000))
def test_strong_connectivity_matches_networkx(n, p, seed):
    g = random_digraph(n, p, seed)
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    G.add_edges_from(g.edges)
    assert gn.is_strongly_connected(g) == nx.is_strongly_connected(G)


def test_strong_connectivity_examples():
    assert gn.is_strongly_connected(gn.Digraph.complete(5))
    assert not gn.is_strongly_connected(gn.Digraph(2))
    assert gn.is_strongly_connected(gn.Digraph.ring(5))


def test_b_strong_connectivity_examples():
    ring = gn.Digraph.ring(4)
    assert gn.check_b_strong_connectivity(gn.GraphSequence.static(ring), 1)
    half1 = gn.Digraph(4, frozenset({(0, 1), (2, 3)}))
    half2 = gn.Digraph(4, frozenset({(1, 2), (3, 0)}))
    seq = gn.GraphSequence((half1, half2))
    assert not gn.check_b_strong_connectivity(seq, 1)
    assert gn.check_b_strong_connectivity(seq, 2)
    a = gn.Digraph(4, frozenset({(0, 1), (1, 0)}))
    b = gn.Digraph(4, frozenset({(2, 3), (3, 2)}))
    assert not gn.check_b_strong_connectivity(gn.GraphSequence((a, b)), 2)


def test_split_into_slots_disconnected_but_b_connected():
    g = gn.generate_clustered_digraph(10, 2, 0.9, 0.3, seed=0, strongly_connected=True)
    seq = gn.split_into_slots(g, 3, seed=0)
    assert len(seq) == 3
    assert all(not gn.is_strongly_connected(s) for s in seq.slots)
    assert gn.check_b_strong_connectivity(seq, 3)


def test_push_sum_two_nodes():
    g = gn.Digraph(2, frozenset({(0, 1)}))
    A = gn.push_sum_weights(g).entries
    np.testing.assert_array_equal(A, [[0.5, 0.0], [0.5, 1.0]])


def test_push_sum_complete():
    A = gn.push_sum_weights(gn.Digraph.complete(6)).entries
    np.testing.assert_allclose(A, 1 / 6, rtol=0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 50), p=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_push_sum_column_stochastic_and_pattern(n, p, seed):
    g = random_digraph(n, p, seed)
    wm = gn.push_sum_weights(g)
    wm.check(g)
    assert np.max(np.abs(wm.entries.sum(axis=0) - 1)) <= 1e-12
    assert np.array_equal(wm.entries > 0, g.adjacency())


def test_metropolis_examples():
    path = gn.Digraph(2, frozenset({(0, 1), (1, 0)}))
    np.testing.assert_allclose(gn.metropolis_hastings_weights(path).entries, 0.5)
    tri = gn.Digraph.complete(3)
    np.testing.assert_allclose(gn.metropolis_hastings_weights(tri).entries, 1 / 3, atol=1e-15)


def test_metropolis_rejects_asymmetric():
    with pytest.raises(gn.GraphError):
        gn.metropolis_hastings_weights(gn.Digraph.ring(4))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 30), p=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_metropolis_doubly_stochastic(n, p, seed):
    g = random_digraph(n, p, seed).symmetrized()
    wm = gn.metropolis_hastings_weights(g)
    wm.check(g)
    assert np.max(np.abs(wm.entries.sum(axis=1) - 1)) <= 1e-12


def test_weight_check_rejects_bad_pattern():
    g = gn.Digraph.ring(3)
    wm = gn.WeightMatrix(np.full((3, 3), 1 / 3), "column-stochastic")
    with pytest.raises(gn.GraphError):
        wm.check(g)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 15), p=st.floats(0.05, 1.0), seed=st.integers(0, 10_000))
def test_normalized_weights_row_stochastic(n, p, seed):
    g = random_digraph(n, p, seed)
    A = gn.push_sum_weights(g).entries
    phi = np.random.default_rng(seed).uniform(0.1, 2.0, n)
    phi_next = A @ phi
    W = gn.normalized_weights(A, phi, phi_next)
    assert np.max(np.abs(W.sum(axis=1) - 1)) <= 1e-12
    # push-sum conserves the mass of phi
    assert abs(phi_next.sum() - phi.sum()) <= 1e-12 * n


def test_decay_curve_doubly_stochastic_keeps_phi():
    g = gn.Digraph.ring(5).symmetrized()
    wm = gn.metropolis_hastings_weights(g)
    A = wm.entries
    phi = np.ones(5)
    for _ in range(50):
        phi = A @ phi
    np.testing.assert_allclose(phi, 1.0, rtol=0, atol=1e-13)
    curve = gn.product_decay_curve(gn.GraphSequence.static(g), [wm], 30)
    assert curve[-1][1] < curve[0][1]


def test_decay_curve_single_node():
    seq = gn.GraphSequence.static(gn.Digraph(1))
    curve = gn.product_decay_curve(seq, gn.push_sum_weights, 10)
    assert all(d == 0.0 for _, d in curve)


def test_decay_curve_geometric_static():
    g = gn.generate_clustered_digraph(10, 2, 0.9, 0.3, seed=2, strongly_connected=True)
    curve = gn.product_decay_curve(gn.GraphSequence.static(g), gn.push_sum_weights, 200)
    slope, _, r2 = gn.fit_log_linear(curve)
    assert slope < 0 and r2 >= 0.95
    assert min(d for _, d in curve) < 1e-8


def test_decay_curve_time_varying_reaches_small():
    g = gn.generate_clustered_digraph(10, 2, 0.9, 0.3, seed=4, strongly_connected=True)
    seq = gn.split_into_slots(g, 3, seed=4)
    curve = gn.product_decay_curve(seq, gn.push_sum_weights, 400)
    assert min(d for _, d in curve) < 1e-8


def test_decay_curve_bad_horizon():
    with pytest.raises(gn.GraphError):
        gn.product_decay_curve(gn.GraphSequence.static(gn.Digraph(2)), gn.push_sum_weights, 0)
