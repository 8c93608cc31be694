"""Command-line entry point.

Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, tasks, trace_io
from .core import POLICIES, TASKS, AtpoError, TrainConfig, Vocab
from .rl import NumericError, Trainer, run_training
from .selection import select

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("atpo")


def _fail_code(err: AtpoError) -> int:
    if isinstance(err, NumericError):
        return EXIT_NUMERIC
    return EXIT_IO if err.code == "IO_ERROR" else EXIT_USAGE


def load_config(path) -> TrainConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise AtpoError("IO_ERROR", f"{path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise AtpoError("BAD_CONFIG", f"{path}: {e}") from e
    if not isinstance(raw, dict):
        raise AtpoError("BAD_CONFIG", f"{path}: expected a JSON object")
    try:
        return TrainConfig.from_dict(raw)
    except TypeError as e:
        raise AtpoError("BAD_CONFIG", str(e)) from e


# ------------------------------------------------------------------ commands

def cmd_generate_data(args):
    insts = tasks.generate(args.task, args.count, args.length, args.seed,
                           P=args.prompt_length, start=args.start)
    trace_io.write_dataset(args.out, insts)
    print(f"wrote {len(insts)} {args.task} instances to {args.out}")


def cmd_train(args):
    config = load_config(args.config)
    if args.workers is not None:
        config = TrainConfig.from_dict({**config.to_dict(), "workers": args.workers})
    res = run_training(config, args.out_dir, trace_every=args.trace_every,
                       progress=None if args.quiet else log.info)
    print(f"final mean eval reward: {res['final_eval_reward']:.6f}")


def cmd_eval(args):
    vocab = Vocab(size=args.vocab_size)
    params, seed = trace_io.read_checkpoint(args.checkpoint)
    if params.dims.V != vocab.size:
        raise AtpoError("HEADER_MISMATCH", f"checkpoint V={params.dims.V}, expected {vocab.size}")
    d = params.dims
    config = TrainConfig(task=args.task, T=args.steps, N=1, L=d.L, P=d.P, vocab_size=d.V,
                         d_model=d.d, seed=args.seed if args.seed is not None else seed,
                         eval_count=args.count)
    trainer = Trainer(config, params=params)
    if args.data:
        trainer.eval_set = trace_io.read_dataset(args.data, d.L, d.P, vocab)
    mode = "greedy" if args.greedy else "sample"
    reward, exact = trainer.evaluate(mode=mode, temperature=args.temperature)
    if args.traces_out:
        trace_io.write_traces(args.traces_out, trainer.last_eval_traces)
    print(f"mean reward: {reward:.6f}")
    print(f"exact match: {exact:.6f}")


def cmd_select(args):
    curves = trace_io.read_curves(args.curves)
    plan = select(args.policy, curves, args.n, args.threshold_mult)
    print(" ".join(str(b) for b in plan.boundaries))


def _write_table(path, header, rows):
    text = "\t".join(header) + "\n" + "".join(
        "\t".join(str(x) if isinstance(x, int) else f"{x:.17g}" for x in row) + "\n" for row in rows)
    if path:
        trace_io._write_text(path, text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args):
    if args.what == "outcome-curves":
        traces = [tr for p in args.paths for tr in trace_io.read_traces(p)]
        oc = analysis.outcome_curves(traces)
        out = Path(args.out_dir or ".")
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise AtpoError("IO_ERROR", str(e)) from e
        for name, curves in (("correct", oc.correct), ("incorrect", oc.incorrect)):
            path = out / f"curves_{name}.csv"
            if curves is None:
                trace_io._write_text(path, trace_io.CURVES_HEADER + "\n")
            else:
                trace_io.write_curves(path, curves)
        counts = {"correct": oc.n_correct, "incorrect": oc.n_incorrect}
        trace_io._write_text(out / "counts.json", json.dumps(counts) + "\n")
        print(f"correct: {oc.n_correct}  incorrect: {oc.n_incorrect}  -> {out}")
    elif args.what == "compare":
        runs = {}
        for p in args.paths:
            label, _, path = p.rpartition("=") if "=" in p else ("", "", p)
            runs[label or Path(path).parent.name or path] = trace_io.read_records(path)
        header, rows = analysis.compare_runs(runs)
        _write_table(args.out, header, rows)
    else:
        if len(args.paths) != 2:
            raise AtpoError("MISSING_TIMINGS", "overhead needs ADAPTIVE_TIMINGS UNIFORM_TIMINGS")
        a, u = (trace_io.read_records(p) for p in args.paths)
        rep = analysis.selection_overhead(a, u)
        print(f"ratio {rep['ratio']:.6f}")
        for phase, v in rep["phases"].items():
            print(f"{phase}\t{v['adaptive']:.6g}\t{v['uniform']:.6g}")


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="atpo", description="Adaptive step selection for masked-diffusion RL (toy scale).")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="write a synthetic task dataset (TSV: task, prompt, gold)")
    g.add_argument("--task", choices=TASKS, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--length", type=int, default=16, help="completion length L")
    g.add_argument("--prompt-length", type=int, default=8, help="prompt length P")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--start", type=int, default=0, help="first instance index")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_generate_data)

    t = sub.add_parser("train", help="run the training loop from a JSON config")
    t.add_argument("--config", required=True, help="JSON file with TrainConfig fields; unknown keys rejected")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--trace-every", type=int, default=None, help="write rollout traces every k iterations")
    t.add_argument("--workers", type=int, default=None, help="concurrent rollout/scoring workers")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on held-out instances")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--task", choices=TASKS, required=True)
    e.add_argument("--count", type=int, default=64)
    e.add_argument("--steps", type=int, default=16, help="denoising steps T")
    e.add_argument("--greedy", action=argparse.BooleanOptionalAction, default=True)
    e.add_argument("--temperature", type=float, default=1.0)
    e.add_argument("--seed", type=int, default=None, help="data/sampling seed (default: checkpoint seed)")
    e.add_argument("--vocab-size", type=int, default=14)
    e.add_argument("--data", help="dataset file to evaluate instead of generated held-out instances")
    e.add_argument("--traces-out", help="write the evaluation rollouts as a trace file")
    e.set_defaults(fn=cmd_eval)

    s = sub.add_parser("select", help="print the segment boundaries chosen for a curves file")
    s.add_argument("--curves", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--policy", choices=POLICIES, default="hybrid")
    s.add_argument("--threshold-mult", type=float, default=1.0)
    s.set_defaults(fn=cmd_select)

    a = sub.add_parser("analyze", help="outcome-curves | compare | overhead")
    a.add_argument("what", choices=("outcome-curves", "compare", "overhead"))
    a.add_argument("paths", nargs="+", help="trace files | [label=]run.jsonl ... | adaptive uniform timings")
    a.add_argument("--out-dir", help="outcome-curves output directory")
    a.add_argument("--out", help="compare output table (default stdout)")
    a.set_defaults(fn=cmd_analyze)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.fn(args)
    except AtpoError as e:
        print(f"error: {e}", file=sys.stderr)
        return _fail_code(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
