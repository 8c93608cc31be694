"""Wall-clock overhead of adaptive selection against the uniform plan.

Runs matched hybrid and uniform trainings (same seed and data), alternating
policies across repeats, then reports the per-phase means and the ratio.

    python scripts/overhead.py --iterations 100 --repeats 3
"""

import argparse
from pathlib import Path

from atpo.analysis import selection_overhead
from atpo.cli import load_config
from atpo.core import TrainConfig
from atpo.rl import run_training
from atpo.trace_io import read_records

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(HERE / "configs" / "copy_gate.json"))
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--out", default="results/overhead")
    args = ap.parse_args()
    base = load_config(args.config).to_dict()
    logs = {"hybrid": [], "uniform": []}
    for rep in range(args.repeats):
        for policy in ("hybrid", "uniform"):
            cfg = TrainConfig.from_dict({**base, "policy": policy, "iterations": args.iterations,
                                         "eval_every": args.iterations, "eval_count": 8, "checkpoint_every": 0})
            d = Path(args.out) / f"{policy}_{rep}"
            run_training(cfg, d)
            logs[policy] += read_records(d / "timings.jsonl")
    rep = selection_overhead(logs["hybrid"], logs["uniform"])
    print(f"ratio {rep['ratio']:.4f}  (adaptive {rep['adaptive_total']:.4f}s, uniform {rep['uniform_total']:.4f}s per iteration)")
    for phase, v in rep["phases"].items():
        print(f"  {phase:10s} {v['adaptive']:.6f}  {v['uniform']:.6f}")


if __name__ == "__main__":
    main()
