"""
Command-line entry point.

Subcommands: ``gen-graph``, ``gen-data``, ``run``, ``compare`` and ``check``.
Every experiment setting can come from ``--config FILE`` (JSON) and be
overridden by the matching flag, for example ``--num-agents 20``.
"""

import argparse
import dataclasses
import json
import logging
import sys
import types
import typing
from pathlib import Path

import numpy as np

from . import core
from . import experiment as ex
from . import io

log = logging.getLogger("d4l")


def _flag_type(tp):
    """Parser callable for a config field annotation (``X | None`` maps to ``X``)."""
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    if tp is bool:
        return lambda s: s.lower() in ("1", "true", "yes", "on")
    return tp


def _add_config_flags(parser):
    parser.add_argument("--config", help="JSON config file")
    hints = typing.get_type_hints(ex.ExperimentConfig)
    for f in dataclasses.fields(ex.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in ("parallel", "timing", "undirected"):
            parser.add_argument(flag, dest=f.name, action="store_const", const=True, default=None,
                                help=f"enable {f.name}")
        else:
            parser.add_argument(flag, dest=f.name, type=_flag_type(hints[f.name]), default=None,
                                metavar=f.name.upper(), help=f"(default {f.default!r})")
    parser.add_argument("--horizon", dest="max_iters", type=int, default=None,
                        help="alias of --max-iters")


def config_from_args(args, config_path=None):
    base = ex.ExperimentConfig.load(config_path) if config_path else ex.ExperimentConfig()
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(ex.ExperimentConfig)
                 if getattr(args, f.name, None) is not None}
    return dataclasses.replace(base, **overrides)


def cmd_gen_graph(args):
    cfg = config_from_args(args, args.config)
    seq = ex.build_graphs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_graph_sequence(out / "graph.txt", seq)
    print(out / "graph.txt")
    return ex.EXIT_OK


def cmd_gen_data(args):
    cfg = config_from_args(args, args.config)
    S, extra = ex.build_data(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix(out / "data.txt", S)
    for name, img in extra.items():
        io.write_pgm(out / f"{name}.pgm", img)
    print(out / "data.txt")
    return ex.EXIT_OK


def cmd_run(args):
    cfg = config_from_args(args, args.config)
    status = ex.run_experiment(cfg)
    if status == ex.EXIT_OK:
        print(Path(cfg.out) / "summary.json")
    return status


def cmd_compare(args):
    paths = args.configs or ([args.config] if args.config else [])
    if not paths:
        log.error("compare needs at least one config file")
        return ex.EXIT_CONFIG
    cfgs = [config_from_args(args, p) for p in paths]
    out = args.out or "compare_out"
    try:
        ex.compare(cfgs, out)
    except ex.ConfigError as exc:
        log.error("%s", exc)
        return ex.EXIT_CONFIG
    print(Path(out) / "compare.csv")
    return ex.EXIT_OK


def cmd_check(args):
    cfg = config_from_args(args, args.config)
    S, _ = ex.build_data(cfg)
    p = ex.build_problem(cfg, S)
    agents, meta = io.load_state(args.state)
    if len(agents) != p.num_agents:
        log.error("state has %d agents, config has %d", len(agents), p.num_agents)
        return ex.EXIT_CONFIG
    state = core.NetworkState(agents=agents, iter=meta["iter"], schedule=None,
                              msg_count=meta["msg_count"], seed=meta["seed"])
    try:
        errs = core.check_invariants(state, p)
    except core.InvariantViolation as exc:
        print(f"FAIL {exc}")
        return 1
    print(json.dumps({k: float(np.float64(v)) for k, v in errs.items()}, indent=2))
    print("PASS")
    return ex.EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="d4l", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (
        ("gen-graph", cmd_gen_graph, "generate a graph sequence file"),
        ("gen-data", cmd_gen_data, "generate a data matrix (and images)"),
        ("run", cmd_run, "run one experiment"),
        ("compare", cmd_compare, "run several experiments and merge their traces"),
        ("check", cmd_check, "check the invariants of a saved state"),
    ):
        sp = sub.add_parser(name, help=hlp)
        _add_config_flags(sp)
        sp.set_defaults(func=fn)
        if name == "compare":
            sp.add_argument("configs", nargs="*", help="config files sharing problem, graph and seed")
        if name == "check":
            sp.add_argument("--state", required=True, help="state.npz written by run")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.ConfigError as exc:
        log.error("%s", exc)
        return ex.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
