"""Regenerate the worked example of every file format under docs/examples/."""

import argparse
import json
from pathlib import Path

from atpo.core import TrainConfig
from atpo.rl import run_training
from atpo.selection import select_hybrid
from atpo.tasks import generate
from atpo.trace_io import read_records, read_traces, write_curves, write_dataset, write_traces

from atpo.metrics import batch_mean_curves


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "docs" / "examples"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    write_dataset(out / "dataset.tsv", generate("sum", 4, 16, 7) + generate("sort", 4, 16, 7))

    cfg = TrainConfig(task="sort", T=8, N=3, L=8, batch_prompts=2, group_size=3, iterations=2,
                      eval_count=4, eval_every=1, checkpoint_every=0, seed=7)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    run = out / "_run"
    run_training(cfg, run, trace_every=1)
    (out / "run.jsonl").write_text((run / "run.jsonl").read_text())
    timings = read_records(run / "timings.jsonl")
    # timings are wall-clock; keep the example stable by rounding
    (out / "timings.jsonl").write_text("".join(
        json.dumps({k: round(v, 4) if isinstance(v, float) else v for k, v in r.items()},
                   separators=(",", ":")) + "\n" for r in timings))
    traces = read_traces(run / "traces" / "iter_00000.jsonl")
    write_traces(out / "trace.jsonl", traces[:2])
    curves = batch_mean_curves(traces)
    write_curves(out / "curves.csv", curves)
    print("hybrid plan for curves.csv, N=3:", select_hybrid(curves, 3).boundaries)
    (out / "checkpoint.bin").write_bytes((run / "final.bin").read_bytes())
    for p in sorted(run.rglob("*"), reverse=True):
        p.unlink() if p.is_file() else p.rmdir()
    run.rmdir()


if __name__ == "__main__":
    main()
