"""
Experiment orchestration: build a problem and a graph sequence from a flat
configuration, run one algorithm, and write ``trace.csv``, ``summary.json``
and ``state.npz`` into an output directory.
"""

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import core
from . import data as dt
from . import graphnet as gn
from . import io
from . import metrics as mt
from . import problems as pb
from . import subsolvers as ss

log = logging.getLogger(__name__)

ALGORITHMS = ("d4l", "atc", "prox-pda-ip")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
METRIC_COLUMNS = tuple(c for c in core.TRACE_COLUMNS if c != "msg_exchanges")
# keys that must agree between experiments being compared
SHARED_KEYS = ("family", "data", "data_path", "M", "K", "n_per_agent", "sparsity", "noise_sigma",
               "patch", "image_size", "image_noise", "lam", "mu", "alpha", "lam_D", "mu_D",
               "graph", "graph_path", "num_agents", "num_clusters", "p1", "p2", "num_slots",
               "seed", "data_seed", "graph_seed")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """
    Flat experiment description; every field is also a command-line flag.

    ``data`` is ``synthetic`` (sparse generative model), ``image`` (patches
    of a noisy image, either ``data_path`` as PGM or a synthetic
    piecewise-constant picture) or ``matrix`` (a matrix file at
    ``data_path``). ``graph`` is ``clustered``, ``complete``, ``ring`` or
    ``file``. ``lam`` / ``mu`` default to ``1 / sqrt(M)``.
    """

    algorithm: str = "d4l"
    family: str = "elastic_net"
    data: str = "synthetic"
    data_path: str | None = None
    M: int = 8
    K: int = 4
    n_per_agent: int = 20
    sparsity: float = 0.5
    noise_sigma: float = 0.05
    patch: int = 8
    image_size: int = 64
    image_noise: float = 0.1
    lam: float | None = None
    mu: float | None = None
    alpha: float = 1.0
    lam_D: float = 0.0
    mu_D: float = 0.0
    graph: str = "clustered"
    graph_path: str | None = None
    num_agents: int = 10
    num_clusters: int = 2
    p1: float = 0.9
    p2: float = 0.3
    num_slots: int = 1
    undirected: bool = False
    weights: str = "push-sum"
    f_surrogate: str = "linearized"
    h_surrogate: str = "linearized"
    tau_D: float = 10.0
    tau_X_rule: str = "adaptive-max"
    eps_tilde: float = 1.0
    mu_tilde: float | None = None
    schedule: str = "recursive"
    gamma0: float = 0.5
    eps: float = 1e-2
    inner_step0: float = 0.9
    inner_eps: float = 1e-3
    inner_tol: float = 1e-6
    inner_max_iters: int = 500
    max_iters: int | None = None
    msg_budget: int | None = 1000
    tol_delta: float = 0.0
    tol_consensus: float = 0.0
    delta_stride: int = 1
    seed: int = 0
    data_seed: int | None = None
    graph_seed: int | None = None
    parallel: bool = False
    timing: bool = False
    out: str = "out"

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.family not in pb.FAMILIES:
            raise ConfigError(f"family must be one of {pb.FAMILIES}")
        if self.data not in ("synthetic", "image", "matrix"):
            raise ConfigError("data must be synthetic, image or matrix")
        if self.graph not in ("clustered", "complete", "ring", "file"):
            raise ConfigError("graph must be clustered, complete, ring or file")
        for key in ("data_path", "graph_path"):
            path = getattr(self, key)
            needed = (key == "graph_path" and self.graph == "file") or (
                key == "data_path" and self.data == "matrix")
            if needed and path is None:
                raise ConfigError(f"{key} is required")
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{key} {path!r} does not exist")
        if self.max_iters is None and self.msg_budget is None:
            raise ConfigError("give max_iters or msg_budget")
        if self.num_agents < 1 or self.num_slots < 1:
            raise ConfigError("num_agents and num_slots must be positive")
        if self.algorithm == "prox-pda-ip" and not self.undirected and self.graph != "complete":
            raise ConfigError("prox-pda-ip requires an undirected graph (set undirected)")
        return self

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self):
        return dataclasses.asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _seed(cfg, which):
    v = getattr(cfg, which)
    return cfg.seed if v is None else v


def build_data(cfg):
    """
    Return ``(S, extra)`` where ``extra`` holds the clean and noisy images for
    image data (empty otherwise).
    """
    seed = _seed(cfg, "data_seed")
    if cfg.data == "matrix":
        return io.read_matrix(cfg.data_path), {}
    if cfg.data == "image":
        if cfg.data_path is not None:
            clean = io.read_pgm(cfg.data_path)
        else:
            clean = dt.piecewise_constant_image(cfg.image_size, seed)
        noisy = dt.add_noise(clean, cfg.image_noise, seed + 1)
        return dt.extract_patches(noisy, cfg.patch), {"clean": clean, "noisy": noisy}
    S, _, _ = dt.synth_instance(cfg.M, cfg.K, cfg.num_agents * cfg.n_per_agent, cfg.sparsity,
                                cfg.noise_sigma, seed)
    if cfg.family == "nnsc":
        S = np.abs(S)
    return S, {}


def build_problem(cfg, S):
    M = S.shape[0]
    lam = 1.0 / math.sqrt(M) if cfg.lam is None else cfg.lam
    mu = 1.0 / math.sqrt(M) if cfg.mu is None else cfg.mu
    return pb.ProblemInstance(cfg.family, dt.partition_data(S, cfg.num_agents), K=cfg.K,
                              lam=lam, mu=mu, alpha=cfg.alpha, lam_D=cfg.lam_D, mu_D=cfg.mu_D)


def build_graphs(cfg):
    seed = _seed(cfg, "graph_seed")
    n = cfg.num_agents
    if cfg.graph == "file":
        seq = io.read_graph_sequence(cfg.graph_path)
        if seq.num_nodes != n:
            raise ConfigError("graph file size does not match num_agents")
        return seq
    if cfg.graph == "complete":
        g = gn.Digraph.complete(n)
    elif cfg.graph == "ring":
        g = gn.Digraph.ring(n)
        if cfg.undirected:
            g = g.symmetrized()
    elif cfg.undirected:
        g = gn.generate_undirected_clustered_graph(n, cfg.num_clusters, cfg.p1, cfg.p2, seed=seed)
    else:
        g = gn.generate_clustered_digraph(n, cfg.num_clusters, cfg.p1, cfg.p2, seed=seed,
                                          strongly_connected=True)
    if cfg.num_slots == 1:
        return gn.GraphSequence.static(g)
    return gn.split_into_slots(g, cfg.num_slots, seed=seed)


def run_config(cfg, problem, graphs):
    return core.RunConfig(
        problem=problem, graphs=graphs, weights=cfg.weights,
        choice=ss.SurrogateChoice(cfg.f_surrogate, cfg.h_surrogate), tau_D=cfg.tau_D,
        tau_X_rule=cfg.tau_X_rule, eps_tilde=cfg.eps_tilde, mu_tilde=cfg.mu_tilde,
        schedule=cfg.schedule, gamma0=cfg.gamma0, eps=cfg.eps, max_iters=cfg.max_iters,
        msg_budget=cfg.msg_budget, tol_delta=cfg.tol_delta, tol_consensus=cfg.tol_consensus,
        seed=cfg.seed,
        inner=ss.InnerSolverConfig(step0=cfg.inner_step0, eps_inner=cfg.inner_eps,
                                   tol=cfg.inner_tol, max_iters=cfg.inner_max_iters),
        delta_stride=cfg.delta_stride, parallel=cfg.parallel, timing=cfg.timing,
    )


RUNNERS = {"d4l": core.run, "atc": bl.run_atc, "prox-pda-ip": bl.run_prox_pda}


def denoise(p, state, extra, patch):
    """Rebuild the image from ``Dbar X`` and score it against the clean image."""
    Dbar = mt.mean_dictionary(state.dictionaries())
    clean, noisy = extra["clean"], extra["noisy"]
    N = (clean.shape[0] - patch + 1) * (clean.shape[1] - patch + 1)
    approx = np.hstack([Dbar @ X for X in state.codes()])[:, :N]
    restored = dt.reconstruct_from_patches(approx, clean.shape, patch)
    q_in = mt.image_quality(clean, noisy)
    q_out = mt.image_quality(clean, restored)
    return restored, {"psnr_in_db": q_in.psnr_db, "psnr_out_db": q_out.psnr_db,
                      "snr_in_db": q_in.snr_db, "snr_out_db": q_out.snr_db}


def execute(cfg, sink=None):
    """Build and run ``cfg`` in memory. Returns ``(state, trace, problem, extra)``."""
    cfg.validate()
    S, extra = build_data(cfg)
    problem = build_problem(cfg, S)
    graphs = build_graphs(cfg)
    rc = run_config(cfg, problem, graphs)
    state, trace = RUNNERS[cfg.algorithm](rc, sink=sink)
    return state, trace, problem, extra


def run_experiment(cfg):
    """
    Run ``cfg`` and write ``trace.csv``, ``summary.json``, ``state.npz`` and
    ``config.json`` under ``cfg.out``. Returns an exit status (0 on success).
    """
    try:
        cfg.validate()
    except (ConfigError, pb.ProblemError, gn.GraphError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    t0 = time.perf_counter()
    with io.TraceWriter(out / "trace.csv") as writer:
        try:
            state, trace, problem, extra = execute(cfg, sink=writer)
        except (ConfigError, pb.ProblemError, gn.GraphError, ss.SolverError, ValueError) as exc:
            log.error("config error: %s", exc)
            return EXIT_CONFIG
        except core.NumericalError as exc:
            log.error("numerical abort: %s", exc)
            return EXIT_NUMERICAL
    last = trace[-1]
    summary = {
        "algorithm": cfg.algorithm,
        "iterations": state.iter,
        "msg_exchanges": state.msg_count,
        "objective": last["objective"],
        "consensus_err": last["consensus_err"],
        "delta_max": last["delta_max"],
        "inner_failures": state.inner_failures,
        "wall_s": time.perf_counter() - t0,
        "notes": state.notes,
    }
    if extra:
        restored, scores = denoise(problem, state, extra, cfg.patch)
        summary.update(scores)
        io.write_pgm(out / "restored.pgm", restored)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    io.save_state(out / "state.npz", state)
    return EXIT_OK


def check_shared(cfgs):
    ref = cfgs[0].to_dict()
    for c in cfgs[1:]:
        d = c.to_dict()
        diff = [k for k in SHARED_KEYS if d[k] != ref[k]]
        if diff:
            raise ConfigError(f"experiments differ in shared settings: {diff}")


def merge_traces(traces):
    """
    Align traces on message exchanges.

    Parameters
    ----------
    traces : dict
        Algorithm label to list of trace rows.

    Returns
    -------
    header : list of str
        ``msg_exchanges`` followed by ``label:metric`` for every label and metric.
    rows : list of list
        One row per distinct exchange count. Each algorithm contributes its
        latest row at or before that count (forward fill); cells before its
        first row are empty.
    """
    labels = list(traces)
    grid = sorted({r["msg_exchanges"] for rows in traces.values() for r in rows})
    header = ["msg_exchanges"] + [f"{lab}:{m}" for lab in labels for m in METRIC_COLUMNS]
    out = []
    pos = {lab: -1 for lab in labels}
    for x in grid:
        line = [x]
        for lab in labels:
            rows = traces[lab]
            while pos[lab] + 1 < len(rows) and rows[pos[lab] + 1]["msg_exchanges"] <= x:
                pos[lab] += 1
            src = rows[pos[lab]] if pos[lab] >= 0 else None
            line.extend("" if src is None else src[m] for m in METRIC_COLUMNS)
        out.append(line)
    return header, out


def compare(cfgs, out):
    """
    Run every config (sharing problem, graph and seed) into ``out/<label>``
    and write the merged ``out/compare.csv``. Returns the merged header and rows.
    """
    if not cfgs:
        raise ConfigError("nothing to compare")
    check_shared(cfgs)
    out = Path(out)
    traces = {}
    for k, c in enumerate(cfgs):
        label = c.algorithm if sum(x.algorithm == c.algorithm for x in cfgs) == 1 else f"{c.algorithm}{k}"
        c = dataclasses.replace(c, out=str(out / label))
        status = run_experiment(c)
        if status != EXIT_OK:
            raise RuntimeError(f"experiment {label} failed with status {status}")
        traces[label] = io.read_trace(out / label / "trace.csv")
    header, rows = merge_traces(traces)
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else v for v in r])
    return header, rows
