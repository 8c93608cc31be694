"""File formats: traces (JSONL), curves (CSV), run logs (JSONL), datasets (TSV), checkpoints (binary).

Floats in JSON are written with Python's shortest round-trip repr, which
never needs more than 17 significant digits and parses back bit-exactly.
Curves use ``%.17g``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import AtpoError, DifficultyCurves, RolloutTrace, StepRecord, Vocab
from .model import Dims, ModelParams, param_count
from .tasks import TaskInstance, make_instance

ROEC_TOL = 1e-9


class ParseError(AtpoError):
    def __init__(self, path, line: int, message: str):
        self.line = line
        super().__init__("PARSE_ERROR", f"{path}:{line}: {message}")


def _io(fn, path, *args):
    try:
        return fn(path, *args)
    except OSError as e:
        raise AtpoError("IO_ERROR", f"{path}: {e.strerror or e}") from e


def _read_lines(path) -> list[str]:
    return _io(lambda p: Path(p).read_text().splitlines(), path)


def _write_text(path, text: str):
    _io(lambda p: Path(p).write_text(text), path)


# ------------------------------------------------------------------- traces

_TRACE_KEYS = {"prompt_id", "rollout_id", "T", "L", "reward", "correct", "steps",
               "final_tokens", "prompt_tokens"}
_STEP_KEYS = {"t", "masked_count", "transfer_positions", "mean_entropy", "mean_inv_margin"}


def trace_to_dict(tr: RolloutTrace) -> dict:
    return {
        "prompt_id": tr.prompt_id, "rollout_id": tr.rollout_id, "T": tr.T, "L": tr.L,
        "reward": tr.reward, "correct": tr.correct,
        "steps": [{"t": s.t, "masked_count": s.masked_count,
                   "transfer_positions": list(s.transfer_positions),
                   "mean_entropy": s.mean_entropy, "mean_inv_margin": s.mean_inv_margin}
                  for s in tr.steps],
        "final_tokens": list(tr.final_tokens),
        "prompt_tokens": list(tr.prompt_tokens),
    }


def trace_from_dict(d: dict, strict: bool = True) -> RolloutTrace:
    if strict:
        extra = set(d) - _TRACE_KEYS
        if extra:
            raise AtpoError("UNKNOWN_FIELDS", ", ".join(sorted(extra)))
    steps = []
    for s in d["steps"]:
        if strict and set(s) - _STEP_KEYS:
            raise AtpoError("UNKNOWN_FIELDS", ", ".join(sorted(set(s) - _STEP_KEYS)))
        steps.append(StepRecord(int(s["t"]), int(s["masked_count"]),
                                tuple(int(p) for p in s["transfer_positions"]),
                                float(s["mean_entropy"]), float(s["mean_inv_margin"])))
    return RolloutTrace(int(d["prompt_id"]), int(d["rollout_id"]), int(d["T"]), int(d["L"]),
                        tuple(steps), tuple(d["final_tokens"]), tuple(d.get("prompt_tokens", ())),
                        float(d["reward"]), bool(d["correct"]))


def dumps_trace(tr: RolloutTrace) -> str:
    return json.dumps(trace_to_dict(tr), separators=(",", ":"))


def write_traces(path, traces: Iterable[RolloutTrace], append: bool = False):
    text = "".join(dumps_trace(t) + "\n" for t in traces)

    def write(p):
        with open(p, "a" if append else "w") as f:
            f.write(text)
    _io(write, path)


def read_traces(path, strict: bool = True) -> list[RolloutTrace]:
    out = []
    for i, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            out.append(trace_from_dict(json.loads(line), strict))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ParseError(path, i, str(e)) from e
    return out


# ------------------------------------------------------------------- curves

CURVES_HEADER = "step,mean_entropy,mean_inv_margin,roec"


def write_curves(path, curves: DifficultyCurves):
    rows = [CURVES_HEADER]
    for t in range(curves.T):
        rows.append(f"{t + 1},{curves.entropy[t]:.17g},{curves.inv_margin[t]:.17g},{curves.roec[t]:.17g}")
    _write_text(path, "\n".join(rows) + "\n")


def read_curves(path) -> DifficultyCurves:
    lines = [ln for ln in _read_lines(path) if ln.strip()]
    if not lines or lines[0].strip() != CURVES_HEADER:
        raise ParseError(path, 1, f"expected header {CURVES_HEADER!r}")
    h, cm, r = [], [], []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        try:
            if len(cells) != 4 or int(cells[0]) != i - 1:
                raise ValueError(f"bad row {line!r}")
            h.append(float(cells[1]))
            cm.append(float(cells[2]))
            r.append(float(cells[3]))
        except ValueError as e:
            raise ParseError(path, i, str(e)) from e
    if not h:
        raise ParseError(path, 2, "no data rows")
    h = np.array(h)
    expect = np.concatenate([[0.0], np.abs(np.diff(h))])
    bad = np.flatnonzero(np.abs(np.array(r) - expect) > ROEC_TOL)
    if bad.size:
        raise AtpoError("ROEC_INCONSISTENT", f"{path}: step {bad[0] + 1}")
    return DifficultyCurves(h, cm, r)


# ----------------------------------------------------------------- run logs

def append_record(path, record: dict):
    line = json.dumps(record, separators=(",", ":")) + "\n"

    def write(p):
        with open(p, "a") as f:
            f.write(line)
    _io(write, path)


def read_records(path) -> list[dict]:
    """Read a JSONL log. A torn final line (crashed writer) is reported, not skipped."""
    text = _io(lambda p: Path(p).read_text(), path)
    lines = text.split("\n")
    out = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if i == len(lines):
            raise ParseError(path, i, "torn final record (no trailing newline)")
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise ParseError(path, i, str(e)) from e
    return out


# ----------------------------------------------------------------- datasets

def write_dataset(path, instances: Iterable[TaskInstance]):
    _write_text(path, "".join(f"{x.task}\t{x.prompt_text}\t{x.gold_text}\n" for x in instances))


def read_dataset(path, L: int, P: int = 8, vocab: Vocab | None = None) -> list[TaskInstance]:
    vocab = vocab or Vocab()
    out = []
    for i, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 3:
            raise ParseError(path, i, "expected task<TAB>prompt<TAB>gold")
        try:
            out.append(make_instance(cells[0], i - 1, cells[1], cells[2], L, P, vocab))
        except AtpoError as e:
            raise ParseError(path, i, str(e)) from e
    return out


# -------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"ATPOCKPT"
CKPT_VERSION = 1
# magic, version, V, P, L, d, seed, parameter count
_HEADER = struct.Struct("<8sIIIIIqQ")


def write_checkpoint(path, params: ModelParams, seed: int):
    d = params.dims
    header = _HEADER.pack(CKPT_MAGIC, CKPT_VERSION, d.V, d.P, d.L, d.d, int(seed), param_count(d))
    body = params.flat().astype("<f4").tobytes()
    _io(lambda p: Path(p).write_bytes(header + body), path)


def read_checkpoint(path, expect: Dims | None = None) -> tuple[ModelParams, int]:
    data = _io(lambda p: Path(p).read_bytes(), path)
    if len(data) < _HEADER.size:
        raise AtpoError("BAD_CHECKPOINT", f"{path}: truncated header")
    magic, version, V, P, L, dm, seed, n = _HEADER.unpack_from(data)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise AtpoError("BAD_CHECKPOINT", f"{path}: bad magic/version")
    dims = Dims(V, P, L, dm)
    if expect is not None and dims != expect:
        raise AtpoError("HEADER_MISMATCH", f"{path}: checkpoint dims {dims} != expected {expect}")
    if n != param_count(dims) or len(data) != _HEADER.size + 4 * n:
        raise AtpoError("BAD_CHECKPOINT", f"{path}: parameter count mismatch")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    return ModelParams.from_flat(dims, flat), int(seed)
