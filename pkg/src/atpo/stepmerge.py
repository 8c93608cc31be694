"""Segment-level likelihoods for a rollout under a segment plan.

For segment ``[b_i, b_{i+1})`` the input is the final completion with every
position committed after step ``b_i`` re-masked; only the positions committed
inside the segment are scored. With unit segments this reproduces each step's
entering state exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MASK_ID, AtpoError, RolloutTrace, SegmentPlan
from .model import batch_logits, log_softmax


@dataclass(frozen=True)
class SegmentScore:
    index: int
    interval: tuple[int, int]
    positions: tuple[int, ...]
    logprobs: tuple[float, ...]


def _check(trace: RolloutTrace, plan: SegmentPlan):
    if plan.T != trace.T:
        raise AtpoError("T_MISMATCH", f"plan T={plan.T}, trace T={trace.T}")


def changed_sets(trace: RolloutTrace, plan: SegmentPlan) -> list[tuple[int, ...]]:
    _check(trace, plan)
    step = trace.commit_step()
    return [tuple(int(p) for p in np.flatnonzero((step > a) & (step <= b)))
            for a, b in plan.segments()]


def segment_inputs(trace: RolloutTrace, plan: SegmentPlan):
    """(M, P+L) token matrix of re-masked segment states, and the changed sets."""
    _check(trace, plan)
    step = trace.commit_step()
    final = np.array(trace.final_tokens, dtype=np.int64)
    prompt = np.array(trace.prompt_tokens, dtype=np.int64)
    rows = []
    for a, _ in plan.segments():
        comp = final.copy()
        comp[step > a] = MASK_ID
        rows.append(np.concatenate([prompt, comp]))
    return np.stack(rows), changed_sets(trace, plan)


def segment_logprobs(trace: RolloutTrace, plan: SegmentPlan, snapshot) -> list[SegmentScore]:
    tokens, sets = segment_inputs(trace, plan)
    P = len(trace.prompt_tokens)
    lp = log_softmax(batch_logits(snapshot, tokens)[:, P:])
    out = []
    for i, ((a, b), C) in enumerate(zip(plan.segments(), sets)):
        out.append(SegmentScore(i, (a, b), C,
                                tuple(float(lp[i, p, trace.final_tokens[p]]) for p in C)))
    return out
