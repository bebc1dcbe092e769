"""
Comparison algorithms.

``atc``: adapt-then-combine. Each agent takes a local convexified step driven
by its own gradient only (no tracking), then dictionaries are mixed with the
same push-sum protocol as D4L. One message exchange per iteration.

``prox_pda_ip``: a primal-dual scheme with increasing penalty
``beta^nu = 0.002 nu`` for undirected graphs and the elastic-net family.
Two message exchanges per iteration.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import core
from . import graphnet as gn
from . import problems as pb
from . import subsolvers as ss
from .linalg import spectral_norm

log = logging.getLogger(__name__)

ATC_MSGS_PER_ITER = 1
PDA_MSGS_PER_ITER = 2
BETA_RATE = 0.002


# --------------------------------------------------------------------------- ATC

def atc_step(state, g, cfg):
    """One adapt-then-combine iteration. Mutates and returns ``state``."""
    p = cfg.problem
    n = p.num_agents
    agents = state.agents
    gamma = state.gamma

    def adapt(i):
        a = agents[i]
        rD = ss.solve_D_direction(p, i, a.D, a.X, a.grad, cfg.tau_D, cfg.choice, cfg.inner,
                                  grad_i=a.grad)
        U = a.D + gamma * (rD.value - a.D)
        core._check_finite(U, i, "adapt (dictionary)")
        tau_X = ss.tau_X_rule(p, U, cfg.tau_X_rule, cfg.eps_tilde, cfg.mu_tilde)
        rX = ss.solve_X_subproblem(p, U, a.X, tau_X, cfg.choice, cfg.inner, i)
        core._check_finite(rX.value, i, "adapt (code)")
        return U, rX.value, rD.iters, rX.iters, int(not rD.converged) + int(not rX.converged)

    local = core._map(adapt, n, cfg.parallel)
    U = [r[0] for r in local]
    wm = gn.weights_for(g, cfg.weights)
    A = wm.entries
    phi = state.phi
    phi_next, W = core.mixing_step(A, phi, wm.kind == "doubly-stochastic")
    D_new = core._mix(A, phi, U, phi_next)
    grads = core._map(lambda i: pb.grad_D_fi(p, D_new[i], local[i][1], i), n, cfg.parallel)
    for i, a in enumerate(agents):
        core._check_finite(D_new[i], i, "combine")
        a.D, a.X, a.phi, a.grad = D_new[i], local[i][1], float(phi_next[i]), grads[i]
        a.Theta = grads[i]  # no tracking: the local gradient stands in
    fails = sum(r[4] for r in local)
    state.inner_failures += fails
    state.last = core.StepInfo(U=U, phi_prev=phi, A=A, W=W,
                               inner_iters_D=sum(r[2] for r in local),
                               inner_iters_X=sum(r[3] for r in local), inner_failures=fails)
    state.iter += 1
    state.msg_count += ATC_MSGS_PER_ITER
    state.schedule.advance()
    return state


def run_atc(cfg, sink=None, monitor=None):
    """Run adapt-then-combine from the same initialization as D4L."""
    state = core.init_network(cfg)
    return core.run_loop(state, atc_step, cfg, ATC_MSGS_PER_ITER, sink, monitor,
                         with_tracking=False)


# --------------------------------------------------------------------- Prox-PDA-IP

class _BetaView:
    """Exposes the current penalty where the trace expects a step size."""

    def __init__(self, state):
        self._state = state

    @property
    def value(self):
        return beta_at(self._state.iter)

    def advance(self):
        return self.value


def beta_at(nu):
    return BETA_RATE * nu


def incidence_edges(g):
    """Undirected edges ``(i, j)`` with ``i < j``, in lexicographic order (+1 at i, -1 at j)."""
    if not g.is_symmetric():
        raise gn.GraphError("Prox-PDA-IP needs an undirected (symmetric) graph")
    return sorted((j, i) for (j, i) in g.edges if j < i)


@dataclass
class ProxPdaState(core.NetworkState):
    omega: dict = field(default_factory=dict)

    @property
    def beta(self):
        return beta_at(self.iter)


def init_prox_pda(cfg):
    base = core.init_network(cfg)
    st = ProxPdaState(agents=base.agents, iter=0, schedule=None, msg_count=0, seed=base.seed,
                      notes=base.notes)
    st.schedule = _BetaView(st)
    return st


def _pda_inner(cfg):
    return dataclasses.replace(cfg.inner, stop="step")


def pda_x_update(p, D, X_prev, i, beta, theta, inner):
    """
    ``argmin_X f_i(D, X) + g_i(X) + beta*theta/2 ||X - X_prev||^2 + beta/2 ||D (X - X_prev)||^2``.
    """
    S = p.shards[i]
    DtD = D.T @ D
    DtS = D.T @ S

    def grad(X):
        dX = X - X_prev
        return DtD @ X - DtS + beta * theta * dX + beta * (DtD @ dX)

    L = spectral_norm(D) ** 2 * (1.0 + beta) + beta * theta
    return ss.inner_projected_subgradient(
        grad, L, lambda V, t: pb.prox_code(p, V, t), X_prev, inner,
        subgrad=lambda Z: p.lam * np.sign(Z) + p.mu * Z,
        project=(lambda Z: np.maximum(Z, 0.0)) if p.x_nonneg else (lambda Z: Z),
    )


def pda_d_update(p, D_prev, X_new, i, beta, dual_term, neighbor_sum, d_i, inner):
    """
    ``argmin_{D in set} f_i(D, X_new) + <dual_term, D>
    + beta (d_i ||D||^2 - <D, (d_i - 1) D_prev + neighbor_sum>)``.
    """
    S = p.shards[i]
    XXt = X_new @ X_new.T
    SXt = S @ X_new.T
    lin = dual_term - beta * ((d_i - 1) * D_prev + neighbor_sum)

    def grad(D):
        return D @ XXt - SXt + lin + 2.0 * beta * d_i * D

    L = spectral_norm(X_new) ** 2 + 2.0 * beta * d_i
    return ss.inner_projected_subgradient(
        grad, L, lambda V, t: pb.project_dictionary(p, V), D_prev, inner,
        subgrad=lambda Z: 0.0, project=lambda Z: pb.project_dictionary(p, Z),
    )


def prox_pda_ip_step(state, g, cfg):
    """One Prox-PDA-IP iteration on the undirected graph ``g``. Mutates and returns ``state``."""
    p = cfg.problem
    if p.family != "elastic_net":
        raise pb.ProblemError("Prox-PDA-IP is implemented for the elastic_net family")
    edges = incidence_edges(g)
    n = p.num_agents
    agents = state.agents
    beta = beta_at(state.iter + 1)
    inner = _pda_inner(cfg)
    D_old = [a.D for a in agents]
    # closed neighborhoods: N_i contains i and d_i = |N_i|
    nbrs = [sorted(set(g.in_neighbors(i)) | {i}) for i in range(n)]
    for (a, b) in edges:
        state.omega.setdefault((a, b), np.zeros(p.shape_D()))

    def local(i):
        a = agents[i]
        R = a.D @ a.X - p.shards[i]
        theta = float(np.sum(R * R))
        rX = pda_x_update(p, a.D, a.X, i, beta, theta, inner)
        core._check_finite(rX.value, i, "Prox-PDA-IP code update")
        dual = np.zeros(p.shape_D())
        for (e0, e1) in edges:
            if e0 == i:
                dual = dual + state.omega[(e0, e1)]
            elif e1 == i:
                dual = dual - state.omega[(e0, e1)]
        nsum = np.zeros(p.shape_D())
        for j in nbrs[i]:
            nsum = nsum + D_old[j]
        rD = pda_d_update(p, a.D, rX.value, i, beta, dual, nsum, len(nbrs[i]), inner)
        core._check_finite(rD.value, i, "Prox-PDA-IP dictionary update")
        return rD.value, rX.value, rD.iters, rX.iters, int(not rD.converged) + int(not rX.converged)

    res = core._map(local, n, cfg.parallel)
    for i, a in enumerate(agents):
        a.D, a.X = res[i][0], res[i][1]
        a.grad = pb.grad_D_fi(p, a.D, a.X, i)
        a.Theta = a.grad
    for (e0, e1) in edges:
        state.omega[(e0, e1)] = state.omega[(e0, e1)] + beta * (agents[e0].D - agents[e1].D)
    fails = sum(r[4] for r in res)
    state.inner_failures += fails
    eye = np.eye(n)
    state.last = core.StepInfo(U=[a.D for a in agents], phi_prev=np.ones(n), A=eye, W=eye,
                               inner_iters_D=sum(r[2] for r in res),
                               inner_iters_X=sum(r[3] for r in res), inner_failures=fails)
    state.iter += 1
    state.msg_count += PDA_MSGS_PER_ITER
    return state


def edge_disagreement(state):
    """``max_e ||D_i - D_j||_F`` over the edges carrying a dual variable."""
    if not state.omega:
        return 0.0
    return max(float(np.linalg.norm(state.agents[a].D - state.agents[b].D)) for a, b in state.omega)


def run_prox_pda(cfg, sink=None, monitor=None):
    """Run Prox-PDA-IP; every slot of ``cfg.graphs`` must be undirected."""
    for g in cfg.graphs.slots:
        incidence_edges(g)
    state = init_prox_pda(cfg)
    return core.run_loop(state, prox_pda_ip_step, cfg, PDA_MSGS_PER_ITER, sink, monitor,
                         with_tracking=False)
