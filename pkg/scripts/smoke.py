"""Training smoke gate: copy and sort at the gate configuration.

    python scripts/smoke.py --out results/smoke
"""

import argparse
import json
import logging
from pathlib import Path

from atpo.cli import load_config
from atpo.rl import run_training
from atpo.trace_io import read_records

HERE = Path(__file__).resolve().parent
GATES = {"copy": 0.9, "sort": 0.6}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results/smoke")
    ap.add_argument("--tasks", nargs="+", default=list(GATES), choices=list(GATES))
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    summary = {}
    for task in args.tasks:
        cfg = load_config(HERE / "configs" / f"{task}_gate.json")
        if args.seed is not None:
            cfg = type(cfg).from_dict({**cfg.to_dict(), "seed": args.seed})
        out = Path(args.out) / task
        res = run_training(cfg, out, progress=logging.info)
        evals = [r for r in read_records(out / "run.jsonl") if r["kind"] == "eval"]
        first, last = evals[0]["eval_reward"], evals[-1]["eval_reward"]
        ok = first < 0.3 and last >= GATES[task] if task == "copy" else last >= GATES[task]
        summary[task] = {"initial": first, "final": last, "gate": GATES[task], "pass": ok}
        print(f"{task}: {first:.3f} -> {res['final_eval_reward']:.3f} (gate {GATES[task]}) {'PASS' if ok else 'FAIL'}")
    (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
