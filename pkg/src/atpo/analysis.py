"""Desk-scale analysis outputs: outcome-split curves, run comparisons, selection overhead."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AtpoError, DifficultyCurves, RolloutTrace
from .metrics import batch_mean_curves

PHASES = ("rollout", "metric", "selection", "scoring", "update")


@dataclass(frozen=True)
class OutcomeCurves:
    correct: DifficultyCurves | None
    incorrect: DifficultyCurves | None
    n_correct: int
    n_incorrect: int


def outcome_curves(traces: Sequence[RolloutTrace]) -> OutcomeCurves:
    if not traces:
        raise AtpoError("EMPTY_BATCH")
    if len({tr.T for tr in traces}) > 1:
        raise AtpoError("MIXED_T", str(sorted({tr.T for tr in traces})))
    good = [tr for tr in traces if tr.correct]
    bad = [tr for tr in traces if not tr.correct]
    return OutcomeCurves(batch_mean_curves(good) if good else None,
                         batch_mean_curves(bad) if bad else None,
                         len(good), len(bad))


def eval_series(records: Sequence[dict], key: str = "eval_reward") -> dict[int, float]:
    return {int(r["iteration"]): float(r[key]) for r in records if r.get(key) is not None}


def compare_runs(runs: dict[str, Sequence[dict]], key: str = "eval_reward"):
    """Align runs on their shared evaluation grid.

    Returns ``(header, rows)``: header is ``["iteration", *labels]`` and each row
    is ``[iteration, value per run]``.
    """
    if not runs:
        raise AtpoError("EMPTY_INPUT", "no runs given")
    series = {label: eval_series(recs, key) for label, recs in runs.items()}
    grids = {tuple(sorted(s)) for s in series.values()}
    if len(grids) != 1:
        raise AtpoError("GRID_MISMATCH", "runs were evaluated at different iterations")
    grid = grids.pop()
    labels = list(series)
    return ["iteration", *labels], [[it, *(series[lb][it] for lb in labels)] for it in grid]


def _phase_means(records: Sequence[dict], label: str) -> dict[str, float]:
    if not records:
        raise AtpoError("MISSING_TIMINGS", f"{label} log is empty")
    for r in records:
        missing = [p for p in PHASES if p not in r]
        if missing:
            raise AtpoError("MISSING_TIMINGS", f"{label} record lacks {', '.join(missing)}")
    return {p: float(np.mean([r[p] for r in records])) for p in PHASES}


def selection_overhead(adaptive: Sequence[dict] | None, uniform: Sequence[dict] | None) -> dict:
    """Ratio of mean per-iteration wall time (sum of phases), adaptive over uniform."""
    if adaptive is None or uniform is None:
        raise AtpoError("MISSING_TIMINGS", "both adaptive and uniform timing logs are required")
    a = _phase_means(adaptive, "adaptive")
    u = _phase_means(uniform, "uniform")
    total_a, total_u = sum(a.values()), sum(u.values())
    if total_u <= 0:
        raise AtpoError("MISSING_TIMINGS", "uniform timings sum to zero")
    return {
        "ratio": total_a / total_u,
        "adaptive_total": total_a,
        "uniform_total": total_u,
        "phases": {p: {"adaptive": a[p], "uniform": u[p]} for p in PHASES},
    }
