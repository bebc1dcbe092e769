import numpy as np
import pytest

from d4l import baselines as bl
from d4l import core
from d4l import graphnet as gn
from d4l import problems as pb

from factories import random_problem


def cfg_for(p, g, **kw):
    kw.setdefault("max_iters", 20)
    kw.setdefault("timing", False)
    return core.RunConfig(p, g, **kw)


def test_beta_sequence():
    assert bl.beta_at(1) == 0.002
    assert [bl.beta_at(k) for k in range(5)] == [0.002 * k for k in range(5)]


def test_incidence_orientation_and_dual_update():
    p = random_problem("elastic_net", 0, I=2)
    g = gn.Digraph(2, frozenset({(0, 1), (1, 0)}))
    assert bl.incidence_edges(g) == [(0, 1)]
    cfg = cfg_for(p, g)
    st = bl.init_prox_pda(cfg)
    bl.prox_pda_ip_step(st, g, cfg)
    want = 0.002 * (st.agents[0].D - st.agents[1].D)
    np.testing.assert_array_equal(st.omega[(0, 1)], want)
    omega1 = st.omega[(0, 1)].copy()
    bl.prox_pda_ip_step(st, g, cfg)
    np.testing.assert_allclose(st.omega[(0, 1)], omega1 + 0.004 * (st.agents[0].D - st.agents[1].D),
                               rtol=0, atol=1e-15)
    assert st.msg_count == 4 and st.beta == 0.004


def test_prox_pda_rejects_directed_graphs_and_other_families():
    p = random_problem("elastic_net", 1, I=3)
    with pytest.raises(gn.GraphError):
        bl.run_prox_pda(cfg_for(p, gn.Digraph.ring(3)))
    q = random_problem("nnsc", 1, I=3)
    with pytest.raises(pb.ProblemError):
        bl.run_prox_pda(cfg_for(q, gn.Digraph.complete(3)))


def test_prox_pda_disagreement_shrinks():
    p = random_problem("elastic_net", 2, I=2, M=4, K=2, n=8)
    g = gn.Digraph.complete(2)
    cfg = cfg_for(p, g, max_iters=300)
    values = []
    st, trace = bl.run_prox_pda(cfg, monitor=lambda s: values.append(bl.edge_disagreement(s)))
    assert values[300] * 10 <= values[10]
    assert all(pb.is_feasible_dictionary(p, a.D) for a in st.agents)
    assert all(r["tracking_residual"] == "" for r in trace)


def test_atc_complete_graph_identical():
    p = random_problem("elastic_net", 3, I=4)
    g = gn.Digraph.complete(4)
    cfg = cfg_for(p, g)
    st = core.init_network(cfg)
    bl.atc_step(st, g, cfg)
    for a in st.agents[1:]:
        assert np.max(np.abs(a.D - st.agents[0].D)) <= 1e-14


def test_atc_single_agent_matches_direct_loop():
    p = random_problem("elastic_net", 4, I=1)
    cfg = cfg_for(p, gn.Digraph(1), max_iters=40)
    st = core.init_network(cfg)
    D, X = st.agents[0].D.copy(), st.agents[0].X.copy()
    S = p.shards[0]
    gamma = 0.5
    for nu in range(40):
        Dt = pb.project_dictionary(p, D - ((D @ X - S) @ X.T) / 10.0)
        U = D + gamma * (Dt - D)
        tau = max(pb.lipschitz_LX(p, U), 1.0)
        V = X - U.T @ (U @ X - S) / tau
        t = 1.0 / tau
        X = np.sign(V) * np.maximum(np.abs(V) - t * p.lam, 0.0) / (1.0 + t * p.mu)
        D = U
        gamma = gamma * (1 - 0.01 * gamma)
        bl.atc_step(st, cfg.graphs[nu], cfg)
        assert np.array_equal(st.agents[0].D, D) and np.array_equal(st.agents[0].X, X)


def test_atc_phi_mass_feasibility_and_messages():
    p = random_problem("nnsc", 5, I=6)
    g = gn.generate_clustered_digraph(6, 2, 0.9, 0.3, seed=5, strongly_connected=True)
    checks = []

    def monitor(s):
        checks.append(abs(s.phi.sum() - 6) <= 1e-12 * 6)
        checks.append(all(pb.is_feasible_dictionary(p, a.D) for a in s.agents))

    st, trace = bl.run_atc(cfg_for(p, g, max_iters=100), monitor=monitor)
    assert all(checks)
    assert [r["msg_exchanges"] for r in trace[:4]] == [0, 1, 2, 3]
    assert st.msg_count == 100
