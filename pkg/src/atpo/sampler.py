"""Instrumented masked-denoising rollouts.

Each step scores the still-masked completion positions, records their mean
entropy and mean inverse margin, then commits the ``k_t`` most confident
positions (top-1 probability, ties to the lower position). Committed tokens
are never revisited.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import MASK_ID, AtpoError, RolloutTrace, StepRecord
from .metrics import DEFAULT_MARGIN_EPS, entropy_rows, inv_margin_rows
from .model import batch_logits, log_softmax, softmax


@dataclass(frozen=True)
class DecodeSpec:
    T: int
    L: int
    temperature: float = 1.0
    mode: str = "sample"
    seed: int = 0
    margin_eps: float = DEFAULT_MARGIN_EPS

    def __post_init__(self):
        if not 1 <= self.T <= self.L:
            raise AtpoError("BAD_SHAPE", f"need 1 <= T <= L, got T={self.T}, L={self.L}")
        if self.mode not in ("sample", "greedy"):
            raise AtpoError("BAD_MODE", self.mode)
        if self.mode == "sample" and not self.temperature > 0:
            raise AtpoError("BAD_TEMPERATURE", str(self.temperature))


def commit_schedule(L: int, T: int) -> list[int]:
    if not 1 <= T <= L:
        raise AtpoError("BAD_SHAPE", f"need 1 <= T <= L, got T={T}, L={L}")
    ks, m = [], L
    for t in range(1, T + 1):
        k = -(-m // (T - t + 1))
        ks.append(k)
        m -= k
    return ks


def rollout_rng(seed: int, prompt_id: int, rollout_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(prompt_id) * 2**32 + int(rollout_id)]))


def rollout_batch(params, prompts: Sequence[Sequence[int]], ids: Sequence[tuple[int, int]],
                  spec: DecodeSpec, record_states: bool = False):
    """Run one rollout per (prompt, (prompt_id, rollout_id)) pair in lockstep.

    Returns the traces, or ``(traces, states)`` with ``record_states`` where
    ``states[t-1]`` is the (B, L) completion array entering step t.
    """
    prompts = np.asarray(prompts, dtype=np.int64)
    B, P = prompts.shape
    L, T = spec.L, spec.T
    comp = np.full((B, L), MASK_ID, dtype=np.int64)
    masked = np.ones((B, L), dtype=bool)
    rngs = [rollout_rng(spec.seed, pid, rid) for pid, rid in ids] if spec.mode == "sample" else None
    rows = np.arange(B)[:, None]
    records: list[list[StepRecord]] = [[] for _ in range(B)]
    states = []
    for t, k in enumerate(commit_schedule(L, T), start=1):
        if record_states:
            states.append(comp.copy())
        m = int(masked[0].sum())
        logits = batch_logits(params, np.concatenate([prompts, comp], axis=1))[:, P:]
        probs = softmax(logits)
        sel = probs[masked].reshape(B, m, -1)
        H = entropy_rows(sel).mean(axis=1)
        CM = inv_margin_rows(sel, spec.margin_eps).mean(axis=1)
        top1 = np.where(masked, probs.max(axis=-1), -np.inf)
        chosen = np.argsort(-top1, axis=1, kind="stable")[:, :k]
        if spec.mode == "greedy":
            tokens = probs[rows, chosen].argmax(axis=-1)
        else:
            pt = softmax(logits[rows, chosen] / spec.temperature)
            cdf = np.cumsum(pt, axis=-1)
            u = np.stack([g.random(k) for g in rngs])[..., None] * cdf[..., -1:]
            tokens = np.minimum((cdf <= u).sum(axis=-1), probs.shape[-1] - 1)
        comp[rows, chosen] = tokens
        masked[rows, chosen] = False
        for b in range(B):
            records[b].append(StepRecord(t, m, tuple(sorted(int(x) for x in chosen[b])),
                                         float(H[b]), float(CM[b])))
    traces = [RolloutTrace(pid, rid, T, L, tuple(records[b]), tuple(comp[b]), tuple(prompts[b]))
              for b, (pid, rid) in enumerate(ids)]
    return (traces, states) if record_states else traces


def rollout(params_old, prompt: Sequence[int], spec: DecodeSpec,
            prompt_id: int = 0, rollout_id: int = 0) -> RolloutTrace:
    return rollout_batch(params_old, [prompt], [(prompt_id, rollout_id)], spec)[0]


def entering_completion(trace: RolloutTrace, t: int) -> np.ndarray:
    """The completion as it stood when step ``t`` began."""
    comp = np.array(trace.final_tokens, dtype=np.int64)
    comp[trace.commit_step() >= t] = MASK_ID
    return comp


def stepwise_logprobs(trace: RolloutTrace, params) -> list[dict[int, float]]:
    """Per step, log-probabilities of the committed tokens given that step's entering state."""
    prompt = np.array(trace.prompt_tokens, dtype=np.int64)
    comps = np.stack([entering_completion(trace, t) for t in range(1, trace.T + 1)])
    tokens = np.concatenate([np.broadcast_to(prompt, (trace.T, prompt.size)), comps], axis=1)
    lp = log_softmax(batch_logits(params, tokens)[:, prompt.size:])
    out = []
    for s in trace.steps:
        out.append({p: float(lp[s.t - 1, p, trace.final_tokens[p]]) for p in s.transfer_positions})
    return out
