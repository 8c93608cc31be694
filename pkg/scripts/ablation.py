"""Step-selection ablation: {uniform, roec, cm, hybrid} x seeds on one task.

Writes one run directory per (policy, seed) plus ``table.tsv`` (eval reward per
evaluation step, one column per run) and ``summary.tsv`` (seed means).

    python scripts/ablation.py --task sort --iterations 300 --out results/ablation
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from atpo.analysis import compare_runs
from atpo.cli import load_config
from atpo.core import TrainConfig
from atpo.rl import run_training
from atpo.trace_io import read_records

HERE = Path(__file__).resolve().parent
POLICIES = ("uniform", "roec", "cm", "hybrid")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--task", default="sort", choices=("copy", "sort", "sum"))
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="results/ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    # every task shares the sort gate hyperparameters; only the task id changes
    base = load_config(HERE / "configs" / "sort_gate.json").to_dict()
    out = Path(args.out)
    runs = {}
    for policy in POLICIES:
        for seed in args.seeds:
            cfg = TrainConfig.from_dict(
                {**base, "task": args.task, "policy": policy, "seed": seed,
                 "iterations": args.iterations, "checkpoint_every": 0})
            d = out / f"{policy}_s{seed}"
            if not (d / "final.bin").exists():
                logging.info("running %s seed %d", policy, seed)
                run_training(cfg, d)
            runs[f"{policy}/s{seed}"] = read_records(d / "run.jsonl")
    header, rows = compare_runs(runs)
    lines = ["\t".join(header)] + ["\t".join(str(x) if isinstance(x, int) else f"{x:.4f}" for x in r) for r in rows]
    (out / "table.tsv").write_text("\n".join(lines) + "\n")
    summary = ["iteration\t" + "\t".join(POLICIES)]
    for r in rows:
        means = [np.mean([r[header.index(f"{p}/s{s}")] for s in args.seeds]) for p in POLICIES]
        summary.append(f"{r[0]}\t" + "\t".join(f"{m:.4f}" for m in means))
    (out / "summary.tsv").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))


if __name__ == "__main__":
    main()
