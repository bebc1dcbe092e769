"""
Directed communication graphs, time-varying graph sequences and consensus
weight matrices.

Edges are ordered pairs ``(j, i)`` meaning "j sends to i". Self-loops are
implicit: every node belongs to its own in- and out-neighborhood and they are
never stored in ``Digraph.edges``.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .linalg import spectral_norm

log = logging.getLogger(__name__)

DEFAULT_KAPPA = 1e-9
MAX_REJECTIONS = 1000


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Digraph:
    num_nodes: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.num_nodes < 1:
            raise GraphError("num_nodes must be positive")
        clean = set()
        for j, i in self.edges:
            j, i = int(j), int(i)
            if not (0 <= j < self.num_nodes and 0 <= i < self.num_nodes):
                raise GraphError(f"edge ({j}, {i}) out of range for {self.num_nodes} nodes")
            if j != i:
                clean.add((j, i))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def complete(cls, n):
        return cls(n, frozenset((j, i) for j in range(n) for i in range(n) if i != j))

    @classmethod
    def ring(cls, n):
        """Directed ring ``0 -> 1 -> ... -> n-1 -> 0``."""
        return cls(n, frozenset((k, (k + 1) % n) for k in range(n)))

    @classmethod
    def from_adjacency(cls, adj):
        """Build from a boolean matrix with ``adj[i, j]`` true iff j sends to i."""
        adj = np.asarray(adj, dtype=bool)
        ii, jj = np.nonzero(adj)
        return cls(adj.shape[0], frozenset(zip(jj.tolist(), ii.tolist())))

    def adjacency(self):
        """Boolean ``I x I`` matrix, ``[i, j]`` true iff ``j`` is an in-neighbor of ``i`` (diagonal set)."""
        adj = np.eye(self.num_nodes, dtype=bool)
        for j, i in self.edges:
            adj[i, j] = True
        return adj

    def in_neighbors(self, i):
        return sorted({j for j, k in self.edges if k == i} | {i})

    def out_neighbors(self, j):
        return sorted({i for k, i in self.edges if k == j} | {j})

    def out_degrees(self):
        """Out-degree of every node, self-loop included."""
        return self.adjacency().sum(axis=0)

    def is_symmetric(self):
        return all((i, j) in self.edges for j, i in self.edges)

    def union(self, other):
        if other.num_nodes != self.num_nodes:
            raise GraphError("cannot union graphs of different sizes")
        return Digraph(self.num_nodes, self.edges | other.edges)

    def symmetrized(self):
        return Digraph(self.num_nodes, self.edges | frozenset((i, j) for j, i in self.edges))


@dataclass(frozen=True)
class GraphSequence:
    """A finite list of slots, cycled forever: slot ``nu`` is ``slots[nu % len(slots)]``."""

    slots: tuple
    window_B: int | None = None

    def __post_init__(self):
        slots = tuple(self.slots)
        if not slots:
            raise GraphError("a graph sequence needs at least one slot")
        n = slots[0].num_nodes
        if any(g.num_nodes != n for g in slots):
            raise GraphError("all slots must share num_nodes")
        object.__setattr__(self, "slots", slots)

    @classmethod
    def static(cls, g):
        return cls((g,), window_B=1)

    @property
    def num_nodes(self):
        return self.slots[0].num_nodes

    def __len__(self):
        return len(self.slots)

    def __getitem__(self, nu):
        return self.slots[nu % len(self.slots)]


@dataclass(frozen=True)
class WeightMatrix:
    entries: np.ndarray
    kind: str  # "column-stochastic" | "doubly-stochastic"

    def check(self, g, kappa=DEFAULT_KAPPA, tol=1e-12):
        """Raise ``GraphError`` unless the matrix matches ``g`` and its stochasticity kind."""
        A = self.entries
        pattern = A > 0
        if not np.array_equal(pattern, g.adjacency()):
            raise GraphError("weight zero pattern does not match the digraph")
        if np.any(A[pattern] <= kappa):
            raise GraphError(f"positive weights must exceed kappa={kappa}")
        if np.max(np.abs(A.sum(axis=0) - 1.0)) > tol:
            raise GraphError("columns do not sum to one")
        if self.kind == "doubly-stochastic" and np.max(np.abs(A.sum(axis=1) - 1.0)) > tol:
            raise GraphError("rows do not sum to one")


def _reachable(adj, start):
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_strongly_connected(g):
    """True iff every node reaches every other node along directed edges."""
    # out[u, v]: u sends to v
    out = g.adjacency().T
    return bool(_reachable(out, 0).all() and _reachable(out.T, 0).all())


def cluster_sizes(num_nodes, num_clusters):
    base, extra = divmod(num_nodes, num_clusters)
    return [base + 1 if c < extra else base for c in range(num_clusters)]


def generate_clustered_digraph(num_nodes, num_clusters, p1, p2, seed=None,
                               strongly_connected=False):
    """
    Random clustered digraph.

    Each ordered pair ``(j, i)``, ``j != i``, carries an arc ``j -> i`` with
    probability ``p1`` if both nodes share a cluster and ``p2`` otherwise.
    When ``num_clusters`` does not divide ``num_nodes`` the first
    ``num_nodes % num_clusters`` clusters get one extra node.

    Parameters
    ----------
    num_nodes, num_clusters : int
    p1, p2 : float
        Intra- and inter-cluster arc probabilities.
    seed : int, optional
    strongly_connected : bool, optional
        If true, redraw with ``seed + 1, seed + 2, ...`` until the graph is
        strongly connected (at most 1000 attempts).

    Returns
    -------
    Digraph
    """
    if num_nodes < 1:
        raise GraphError("num_nodes must be positive")
    if not 1 <= num_clusters <= num_nodes:
        raise GraphError("need 1 <= num_clusters <= num_nodes")
    for p in (p1, p2):
        if not 0.0 <= p <= 1.0:
            raise GraphError(f"invalid probability {p}")
    labels = np.repeat(np.arange(num_clusters), cluster_sizes(num_nodes, num_clusters))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p1, p2)
    seed = 0 if seed is None else int(seed)
    for attempt in range(MAX_REJECTIONS):
        rng = np.random.default_rng(seed + attempt)
        # draw[j, i] < prob  =>  arc j -> i
        draw = rng.random((num_nodes, num_nodes))
        jj, ii = np.nonzero((draw < prob) & ~np.eye(num_nodes, dtype=bool))
        g = Digraph(num_nodes, frozenset(zip(jj.tolist(), ii.tolist())))
        if not strongly_connected or is_strongly_connected(g):
            return g
    raise GraphError(f"no strongly connected draw in {MAX_REJECTIONS} attempts")


def generate_undirected_clustered_graph(num_nodes, num_clusters, p1, p2, seed=None):
    """Symmetric clustered graph (one coin per unordered pair), redrawn until connected."""
    labels = np.repeat(np.arange(num_clusters), cluster_sizes(num_nodes, num_clusters))
    prob = np.where(labels[:, None] == labels[None, :], p1, p2)
    seed = 0 if seed is None else int(seed)
    for attempt in range(MAX_REJECTIONS):
        rng = np.random.default_rng(seed + attempt)
        draw = np.triu(rng.random((num_nodes, num_nodes)) < prob, k=1)
        jj, ii = np.nonzero(draw)
        g = Digraph(num_nodes, frozenset(zip(jj.tolist(), ii.tolist()))).symmetrized()
        if is_strongly_connected(g):
            return g
    raise GraphError(f"no connected draw in {MAX_REJECTIONS} attempts")


def split_into_slots(g, num_slots, seed=None, require_disconnected=True):
    """
    Spread the edges of ``g`` over ``num_slots`` graphs.

    The union of the slots is ``g``, so a strongly connected ``g`` yields a
    ``num_slots``-strongly connected sequence. With ``require_disconnected``
    the split is redrawn until no single slot is strongly connected.
    """
    edges = sorted(g.edges)
    seed = 0 if seed is None else int(seed)
    for attempt in range(MAX_REJECTIONS):
        rng = np.random.default_rng(seed + attempt)
        owner = rng.integers(0, num_slots, size=len(edges))
        slots = tuple(
            Digraph(g.num_nodes, frozenset(e for e, o in zip(edges, owner) if o == s))
            for s in range(num_slots)
        )
        if not require_disconnected or not any(is_strongly_connected(s) for s in slots):
            return GraphSequence(slots, window_B=num_slots)
    raise GraphError("could not split the graph into disconnected slots")


def check_b_strong_connectivity(seq, B):
    """
    True iff the union over every window of ``B`` consecutive slots is
    strongly connected. Windows are checked until the slot/window pattern
    repeats (``lcm(len(seq), B) / B`` windows).
    """
    if B < 1:
        raise GraphError("B must be >= 1")
    L = len(seq)
    num_windows = math.lcm(L, B) // B
    for k in range(num_windows):
        union = seq[k * B]
        for t in range(k * B + 1, (k + 1) * B):
            union = union.union(seq[t])
        if not is_strongly_connected(union):
            return False
    return True


def push_sum_weights(g):
    """Column-stochastic weights ``a_ij = 1/d_j`` for ``j`` in the in-neighborhood of ``i``."""
    adj = g.adjacency()
    deg = adj.sum(axis=0)
    A = np.where(adj, 1.0 / deg[None, :], 0.0)
    return WeightMatrix(A, "column-stochastic")


def metropolis_hastings_weights(g):
    """Doubly-stochastic Metropolis-Hastings weights for an undirected graph."""
    if not g.is_symmetric():
        raise GraphError("Metropolis-Hastings weights need a symmetric edge set")
    n = g.num_nodes
    adj = g.adjacency() & ~np.eye(n, dtype=bool)
    deg = adj.sum(axis=1)
    W = np.zeros((n, n))
    for i in range(n):
        for j in np.flatnonzero(adj[i]):
            W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, i] = 1.0 - W[i].sum()
    return WeightMatrix(W, "doubly-stochastic")


def weights_for(g, rule):
    if rule in ("push-sum", "push_sum"):
        return push_sum_weights(g)
    if rule in ("metropolis", "metropolis-hastings"):
        return metropolis_hastings_weights(g)
    raise GraphError(f"unknown weight rule {rule!r}")


def normalized_weights(A, phi, phi_next):
    """Row-stochastic ``W = diag(phi_next)^-1 A diag(phi)``."""
    return A * phi[None, :] / phi_next[:, None]


def product_decay_curve(seq, weights, horizon, B=None):
    """
    Distance of the normalized weight product from its limit.

    Runs ``phi^{nu+1} = A^nu phi^nu`` from ``phi^0 = 1``, forms
    ``W^nu = (Phi^{nu+1})^-1 A^nu Phi^nu``, accumulates ``W^{nu:0}`` and
    records ``||W^{nu:0} - J||_2`` with ``J = (1/I) 1 (phi^0)^T``.

    Parameters
    ----------
    seq : GraphSequence
    weights : sequence of WeightMatrix or callable
        Per-slot weights (cycled like the slots), or a function mapping a
        ``Digraph`` to its ``WeightMatrix``.
    horizon : int
        Number of products to form.
    B : int, optional
        Window used for the connectivity warning; defaults to
        ``seq.window_B`` or ``len(seq)``.

    Returns
    -------
    list of (int, float)
    """
    if horizon < 1:
        raise GraphError("horizon must be >= 1")
    B = B or seq.window_B or len(seq)
    if not check_b_strong_connectivity(seq, B):
        log.warning("graph sequence is not %d-strongly connected", B)
    n = seq.num_nodes
    phi = np.ones(n)
    J = np.full((n, n), 1.0 / n) * phi[None, :]
    P = np.eye(n)
    curve = []
    for nu in range(horizon):
        if callable(weights):
            A = weights(seq[nu]).entries
        else:
            A = weights[nu % len(weights)].entries
        phi_next = A @ phi
        if np.any(phi_next <= 0):
            raise GraphError(f"nonpositive push-sum weight at iteration {nu}")
        P = normalized_weights(A, phi, phi_next) @ P
        phi = phi_next
        curve.append((nu, spectral_norm(P - J)))
    return curve


def fit_log_linear(curve, floor=1e-12):
    """
    Least-squares line through ``log(distance)`` versus iteration.

    Points at or below ``floor`` (the round-off plateau) are dropped.

    Returns
    -------
    slope, intercept, r2 : float
    """
    nu = np.array([c[0] for c in curve], dtype=float)
    d = np.array([c[1] for c in curve], dtype=float)
    keep = d > floor
    if keep.sum() < 2:
        raise ValueError("fewer than two points above the floor")
    x, y = nu[keep], np.log(d[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)
