"""
Run D4L and adapt-then-combine on the same 10-agent clustered digraph with an
equal budget of message exchanges, and print how consensus and the objective
evolve for each.

    python demos/consensus_vs_atc.py [--budget 2000] [--seed 0]
"""

import argparse

from d4l import experiment as ex


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--budget", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    traces = {}
    for alg in ("d4l", "atc"):
        cfg = ex.ExperimentConfig(algorithm=alg, num_agents=10, M=8, K=4, n_per_agent=20,
                                  msg_budget=args.budget, seed=args.seed)
        _, traces[alg], _, _ = ex.execute(cfg)

    header, rows = ex.merge_traces(traces)
    cols = [header.index(f"{a}:{m}") for a in traces for m in ("consensus_err", "objective")]
    print(f"{'exchanges':>9}  {'d4l e':>10}  {'d4l obj':>10}  {'atc e':>10}  {'atc obj':>10}")
    step = max(1, args.budget // 10)
    for r in rows:
        if r[0] % step == 0:
            print(f"{r[0]:>9}  " + "  ".join(f"{r[c]:>10.3e}" for c in cols))


if __name__ == "__main__":
    main()
