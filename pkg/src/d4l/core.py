"""
The D4L engine: each agent takes a local convexified step on its dictionary
and code, then the network mixes dictionaries by push-sum and tracks the
full dictionary gradient.

Per iteration ``nu``:

1. ``Dt_i`` solves the local dictionary subproblem driven by ``I * Theta_i``,
   and ``U_i = D_i + gamma (Dt_i - D_i)``;
2. ``X_i`` is updated at ``U_i``;
3. ``phi+ = A phi`` and ``D_i+ = sum_j a_ij phi_j U_j / phi_i+``;
4. ``Theta_i+ = (sum_j a_ij phi_j Theta_j + grad_i+ - grad_i) / phi_i+``.

Each iteration costs two message exchanges.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import graphnet as gn
from . import metrics as mt
from . import problems as pb
from . import subsolvers as ss

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "iter", "msg_exchanges", "gamma", "objective", "consensus_err", "delta_D",
    "delta_X", "delta_max", "tracking_residual", "inner_iters_D", "inner_iters_X", "wall_ms",
)
MSGS_PER_ITER = 2


class NumericalError(RuntimeError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass
class AgentState:
    D: np.ndarray
    X: np.ndarray
    Theta: np.ndarray
    phi: float
    grad: np.ndarray  # grad_D f_i(D, X), refreshed once per iteration


@dataclass
class StepInfo:
    """What the last step mixed: kept so the invariants can be checked after the fact."""

    U: list
    phi_prev: np.ndarray
    A: np.ndarray
    W: np.ndarray
    inner_iters_D: int
    inner_iters_X: int
    inner_failures: int


@dataclass
class NetworkState:
    agents: list
    iter: int
    schedule: object
    msg_count: int
    seed: int
    last: StepInfo | None = None
    notes: list = field(default_factory=list)
    inner_failures: int = 0

    @property
    def gamma(self):
        return self.schedule.value

    @property
    def phi(self):
        return np.array([a.phi for a in self.agents])

    def dictionaries(self):
        return [a.D for a in self.agents]

    def codes(self):
        return [a.X for a in self.agents]


@dataclass
class RunConfig:
    """
    Everything a run needs. The horizon is ``max_iters`` iterations or
    ``msg_budget`` message exchanges, whichever comes first (at least one of
    them must be given). ``tol_delta`` / ``tol_consensus`` stop the run early
    when both are met; zero disables early stopping.
    """

    problem: pb.ProblemInstance
    graphs: object  # GraphSequence or Digraph
    weights: str = "push-sum"
    choice: ss.SurrogateChoice = ss.LINEARIZED
    tau_D: float = 10.0
    tau_X_rule: str = "adaptive-max"
    eps_tilde: float = 1.0
    mu_tilde: float | None = None
    schedule: str = "recursive"  # "recursive" | "polynomial"
    gamma0: float = 0.5
    eps: float = 1e-2
    poly_c: float = 1.0
    poly_p: float = 0.75
    max_iters: int | None = None
    msg_budget: int | None = None
    tol_delta: float = 0.0
    tol_consensus: float = 0.0
    seed: int = 0
    inner: ss.InnerSolverConfig = ss.InnerSolverConfig()
    merit: mt.MeritConfig = mt.MeritConfig()
    delta_stride: int = 1
    parallel: bool = False
    timing: bool = True

    def __post_init__(self):
        if isinstance(self.graphs, gn.Digraph):
            self.graphs = gn.GraphSequence.static(self.graphs)
        if self.graphs.num_nodes != self.problem.num_agents:
            raise ValueError("graph size must equal the number of shards")
        if self.max_iters is None and self.msg_budget is None:
            raise ValueError("give max_iters or msg_budget")
        if (self.max_iters is not None and self.max_iters < 0) or (
                self.msg_budget is not None and self.msg_budget < 0):
            raise ValueError("horizon must be nonnegative")
        if self.tau_D <= 0 or self.delta_stride < 1:
            raise ValueError("tau_D must be positive and delta_stride >= 1")

    def horizon(self, msgs_per_iter=MSGS_PER_ITER):
        limits = []
        if self.max_iters is not None:
            limits.append(self.max_iters)
        if self.msg_budget is not None:
            limits.append(self.msg_budget // msgs_per_iter)
        return min(limits)

    def make_schedule(self):
        if self.schedule == "recursive":
            return ss.GammaSchedule(self.gamma0, self.eps)
        if self.schedule == "polynomial":
            return ss.PolynomialSchedule(self.poly_c, self.poly_p)
        raise ValueError(f"unknown schedule {self.schedule!r}")


def initial_dictionary(p, i, rng):
    """
    ``K`` distinct columns of shard ``i`` drawn uniformly and projected onto
    the dictionary set. Returns ``(D, fallback)``; when the shard has fewer
    than ``K`` columns, Gaussian columns are used instead and ``fallback`` is True.
    """
    S = p.shards[i]
    if p.K <= S.shape[1]:
        idx = rng.choice(S.shape[1], size=p.K, replace=False)
        return pb.project_dictionary(p, S[:, idx]), False
    return pb.project_dictionary(p, rng.standard_normal(p.shape_D())), True


def init_network(cfg):
    p = cfg.problem
    rng = np.random.default_rng(cfg.seed)
    agents, notes = [], []
    for i in range(p.num_agents):
        D, fallback = initial_dictionary(p, i, rng)
        if fallback:
            notes.append(f"agent {i}: K > n_i, Gaussian initial dictionary")
        X = np.zeros((p.K, p.shards[i].shape[1]))
        g = pb.grad_D_fi(p, D, X, i)
        agents.append(AgentState(D=D, X=X, Theta=g.copy(), phi=1.0, grad=g))
    return NetworkState(agents=agents, iter=0, schedule=cfg.make_schedule(), msg_count=0,
                        seed=cfg.seed, notes=notes)


def _check_finite(arr, agent, phase):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite value at agent {agent} during {phase}")


def _map(fn, n, parallel):
    if parallel and n > 1:
        with ThreadPoolExecutor() as ex:
            return list(ex.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def _mix(A, coeff_rows, vals, phi_next):
    """``out_i = (sum_j A_ij coeff_j vals_j) / phi_next_i`` with ``j`` ascending."""
    out = []
    for i in range(A.shape[0]):
        acc = np.zeros_like(vals[0])
        for j in np.flatnonzero(A[i]):
            acc = acc + (A[i, j] * coeff_rows[j]) * vals[j]
        out.append(acc / phi_next[i])
    return out


def mixing_step(A, phi, doubly_stochastic):
    """Return ``(phi_next, W)`` for one push-sum round."""
    if doubly_stochastic:
        return phi.copy(), A
    n = A.shape[0]
    phi_next = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in np.flatnonzero(A[i]):
            s += A[i, j] * phi[j]
        phi_next[i] = s
    if np.any(phi_next <= 0):
        raise NumericalError("push-sum weights became nonpositive")
    return phi_next, gn.normalized_weights(A, phi, phi_next)


def local_step(p, a, i, gamma, cfg):
    """Local optimization of one agent. Returns ``(U_i, X_i+, iters_D, iters_X, failures)``."""
    I = p.num_agents
    for arr in (a.D, a.X, a.Theta):
        _check_finite(arr, i, "local optimization input")
    rD = ss.solve_D_subproblem(p, a.D, a.X, a.Theta, I, cfg.tau_D, cfg.choice, cfg.inner, i,
                               grad_i=a.grad)
    U = a.D + gamma * (rD.value - a.D)
    _check_finite(U, i, "dictionary update")
    tau_X = ss.tau_X_rule(p, U, cfg.tau_X_rule, cfg.eps_tilde, cfg.mu_tilde)
    rX = ss.solve_X_subproblem(p, U, a.X, tau_X, cfg.choice, cfg.inner, i)
    _check_finite(rX.value, i, "code update")
    fails = int(not rD.converged) + int(not rX.converged)
    return U, rX.value, rD.iters, rX.iters, fails


def d4l_step(state, g, cfg):
    """One D4L iteration on the digraph ``g``. Mutates and returns ``state``."""
    p = cfg.problem
    n = p.num_agents
    agents = state.agents
    gamma = state.gamma

    # local optimization
    local = _map(lambda i: local_step(p, agents[i], i, gamma, cfg), n, cfg.parallel)
    U = [r[0] for r in local]
    X_new = [r[1] for r in local]

    # consensus on dictionaries
    wm = gn.weights_for(g, cfg.weights)
    A = wm.entries
    phi = state.phi
    phi_next, W = mixing_step(A, phi, wm.kind == "doubly-stochastic")
    D_new = _mix(A, phi, U, phi_next)
    for i, D in enumerate(D_new):
        _check_finite(D, i, "dictionary mixing")

    # gradient tracking
    grad_new = _map(lambda i: pb.grad_D_fi(p, D_new[i], X_new[i], i), n, cfg.parallel)
    mixed = _mix(A, phi, [a.Theta for a in agents], np.ones(n))
    for i, a in enumerate(agents):
        Theta = ((mixed[i] - a.grad) + grad_new[i]) / phi_next[i]
        _check_finite(Theta, i, "gradient tracking")
        a.D, a.X, a.Theta, a.phi, a.grad = D_new[i], X_new[i], Theta, float(phi_next[i]), grad_new[i]

    fails = sum(r[4] for r in local)
    state.inner_failures += fails
    state.last = StepInfo(U=U, phi_prev=phi, A=A, W=W,
                          inner_iters_D=sum(r[2] for r in local),
                          inner_iters_X=sum(r[3] for r in local), inner_failures=fails)
    if fails:
        log.warning("iteration %d: %d inner solves hit max_iters", state.iter, fails)
    state.iter += 1
    state.msg_count += MSGS_PER_ITER
    state.schedule.advance()
    return state


def check_invariants(state, p, tol_phi=1e-12, tol_track=1e-8, tol_w=1e-12, tol_mean=1e-12,
                     tol_feas=pb.FEAS_TOL):
    """
    Measure the exact invariants of the current state and raise
    ``InvariantViolation`` when any exceeds its tolerance. Returns the
    measured errors as a dict.
    """
    I = len(state.agents)
    phi = state.phi
    err = {"phi_mass": abs(phi.sum() - I)}
    lhs = sum(a.phi * a.Theta for a in state.agents)
    rhs = sum(pb.grad_D_fi(p, a.D, a.X, i) for i, a in enumerate(state.agents))
    err["tracking_mass"] = float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(rhs)))))
    err["grad_cache"] = max(float(np.max(np.abs(a.grad - pb.grad_D_fi(p, a.D, a.X, i))))
                            for i, a in enumerate(state.agents))
    err["feasibility"] = max(pb.dictionary_violation(p, a.D) for a in state.agents)
    err["phi_positive"] = max(0.0, -float(phi.min()))
    if state.last is not None:
        info = state.last
        err["row_sums"] = float(np.max(np.abs(info.W.sum(axis=1) - 1.0)))
        mean_new = sum(a.phi * a.D for a in state.agents) / I
        mean_U = sum(info.phi_prev[j] * info.U[j] for j in range(I)) / I
        err["weighted_mean"] = float(np.max(np.abs(mean_new - mean_U)))
    limits = {"phi_mass": tol_phi * I, "tracking_mass": tol_track, "grad_cache": 1e-12,
              "feasibility": tol_feas, "phi_positive": 0.0, "row_sums": tol_w,
              "weighted_mean": tol_mean}
    bad = {k: v for k, v in err.items() if v > limits[k]}
    if bad:
        raise InvariantViolation(f"iteration {state.iter}: {bad}")
    return err


def trace_row(state, p, cfg, inner_D=0, inner_X=0, wall_ms=None, with_tracking=True,
              with_delta=True):
    """Metrics of ``state`` as a dict keyed by ``TRACE_COLUMNS``."""
    Ds, X = state.dictionaries(), state.codes()
    Dbar = mt.mean_dictionary(Ds)
    if with_delta:
        dD = mt.stationarity_D(p, Dbar, X, cfg.merit)
        dX = mt.stationarity_X(p, Dbar, X, cfg.merit)
        dmax = mt.delta_max(dD, dX)
    else:
        dD = dX = dmax = ""
    return {
        "iter": state.iter,
        "msg_exchanges": state.msg_count,
        "gamma": state.gamma,
        "objective": pb.objective(p, Dbar, X),
        "consensus_err": mt.consensus_error(Ds),
        "delta_D": dD,
        "delta_X": dX,
        "delta_max": dmax,
        "tracking_residual": mt.tracking_residual(state, p) if with_tracking else "",
        "inner_iters_D": inner_D,
        "inner_iters_X": inner_X,
        "wall_ms": "" if wall_ms is None else wall_ms,
    }


def _should_stop(row, cfg):
    if cfg.tol_delta <= 0 or cfg.tol_consensus <= 0 or row["delta_max"] == "":
        return False
    return row["delta_max"] <= cfg.tol_delta and row["consensus_err"] <= cfg.tol_consensus


def run_loop(state, step, cfg, msgs_per_iter, sink=None, monitor=None, with_tracking=True):
    """
    Drive ``step(state, g, cfg)`` over the graph sequence and collect trace
    rows. Shared by D4L and the baselines.
    """
    p = cfg.problem
    horizon = cfg.horizon(msgs_per_iter)
    seq = cfg.graphs
    t0 = time.perf_counter()

    def emit(inner_D, inner_X):
        wall = round((time.perf_counter() - t0) * 1e3, 3) if cfg.timing else None
        row = trace_row(state, p, cfg, inner_D, inner_X, wall, with_tracking,
                        with_delta=state.iter % cfg.delta_stride == 0 or state.iter == horizon)
        trace.append(row)
        if sink is not None:
            sink(row)
        return row

    trace = []
    row = emit(0, 0)
    if monitor is not None:
        monitor(state)
    for nu in range(horizon):
        if _should_stop(row, cfg):
            break
        step(state, seq[nu], cfg)
        if monitor is not None:
            monitor(state)
        info = state.last
        row = emit(info.inner_iters_D, info.inner_iters_X)
    return state, trace


def run(cfg, sink=None, monitor=None):
    """
    Run D4L from ``init_network(cfg)``.

    Parameters
    ----------
    cfg : RunConfig
    sink : callable, optional
        Called with every trace row as soon as it is produced.
    monitor : callable, optional
        Called with the state after initialization and after every step (for
        example ``lambda s: check_invariants(s, cfg.problem)``).

    Returns
    -------
    (NetworkState, list of dict)
    """
    seq = cfg.graphs
    B = seq.window_B or len(seq)
    if not gn.check_b_strong_connectivity(seq, B):
        log.warning("graph sequence is not %d-strongly connected", B)
    state = init_network(cfg)
    return run_loop(state, d4l_step, cfg, MSGS_PER_ITER, sink, monitor)
