"""
Text and binary file formats: matrices, graphs and graph sequences, PGM
images, trace CSVs and saved network states.

Matrix file: a ``rows cols`` header, then one row per line with values
written to 17 significant digits (exact round trip).

Graph file: an ``I E`` header, then ``E`` lines ``j i`` for the arc j -> i
(0-based, no self-loops). A sequence file concatenates graph blocks separated
by a line holding ``---``.
"""

import csv
from pathlib import Path

import numpy as np

from .core import TRACE_COLUMNS, AgentState
from .graphnet import Digraph, GraphSequence


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        for row in A:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad matrix header")
        rows, cols = int(header[0]), int(header[1])
        vals = np.array(fh.read().split(), dtype=float)
    if vals.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, got {vals.size}")
    return vals.reshape(rows, cols)


def _graph_lines(g):
    edges = sorted(g.edges)
    return [f"{g.num_nodes} {len(edges)}"] + [f"{j} {i}" for j, i in edges]


def _parse_graph(lines):
    n, e = (int(t) for t in lines[0].split())
    body = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(body) != e:
        raise ValueError(f"graph header announces {e} arcs, found {len(body)}")
    return Digraph(n, frozenset((int(j), int(i)) for j, i in body))


def write_graph(path, g):
    Path(path).write_text("\n".join(_graph_lines(g)) + "\n")


def read_graph(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return _parse_graph(lines)


def write_graph_sequence(path, seq):
    blocks = ["\n".join(_graph_lines(g)) for g in seq.slots]
    Path(path).write_text("\n---\n".join(blocks) + "\n")


def read_graph_sequence(path):
    """Read one or more ``---``-separated graph blocks as a cycling sequence."""
    blocks, cur = [], []
    for ln in Path(path).read_text().splitlines():
        if ln.strip() == "---":
            blocks.append(cur)
            cur = []
        elif ln.strip():
            cur.append(ln)
    if cur:
        blocks.append(cur)
    slots = [_parse_graph(b) for b in blocks]
    return GraphSequence(tuple(slots), window_B=len(slots))


def write_pgm(path, image):
    """Write an image in [0, 1] as 8-bit binary PGM (values clipped and rounded)."""
    img = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path):
    """Read an 8-bit binary PGM and scale it to [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1  # single whitespace before the raster
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).astype(float) / maxval


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class TraceWriter:
    """Append-only CSV trace writer that flushes every ``flush_every`` rows."""

    def __init__(self, path, flush_every=100):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(TRACE_COLUMNS)
        self._n = 0
        self.flush_every = flush_every

    def __call__(self, row):
        self._w.writerow([_fmt(row[c]) for c in TRACE_COLUMNS])
        self._n += 1
        if self._n % self.flush_every == 0:
            self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path):
    """Read a trace CSV into a list of dicts (numbers parsed, empty cells as None)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if v == "":
                    row[k] = None
                elif k in ("iter", "msg_exchanges", "inner_iters_D", "inner_iters_X"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return out


def save_state(path, state):
    arrays = {"iter": state.iter, "msg_count": state.msg_count, "seed": state.seed,
              "phi": state.phi, "num_agents": len(state.agents)}
    for i, a in enumerate(state.agents):
        arrays[f"D_{i}"] = a.D
        arrays[f"X_{i}"] = a.X
        arrays[f"Theta_{i}"] = a.Theta
        arrays[f"grad_{i}"] = a.grad
    np.savez(path, **arrays)


def load_state(path):
    """Return ``(agents, meta)`` from a file written by ``save_state``."""
    with np.load(path) as z:
        n = int(z["num_agents"])
        phi = z["phi"]
        agents = [AgentState(D=z[f"D_{i}"], X=z[f"X_{i}"], Theta=z[f"Theta_{i}"],
                             phi=float(phi[i]), grad=z[f"grad_{i}"]) for i in range(n)]
        meta = {"iter": int(z["iter"]), "msg_count": int(z["msg_count"]), "seed": int(z["seed"])}
    return agents, meta
