"""Group-relative policy optimisation over segment-scored rollouts.

One training iteration: snapshot the policy as pi_old, roll out G completions
for each of B prompts, average the difficulty curves over the whole batch,
pick one shared segment plan, score every trajectory's segments under the
current / old / reference parameters, and take one clipped-surrogate step
with a KL penalty toward the frozen initial parameters.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import AtpoError, DifficultyCurves, RolloutTrace, SegmentPlan, SequenceState, TrainConfig
from .metrics import batch_mean_curves
from .model import (Dims, ModelParams, ParamSnapshot, TokenObjective, batch_logits,
                    batch_loss_and_grad, init_params, log_softmax)
from .sampler import DecodeSpec, rollout_batch
from .selection import select
from .stepmerge import segment_inputs
from . import tasks, trace_io

log = logging.getLogger(__name__)


class NumericError(AtpoError):
    def __init__(self, iteration: int, message: str):
        self.iteration = iteration
        super().__init__("NON_FINITE", f"iteration {iteration}: {message}")


# ---------------------------------------------------------------- advantages

def group_advantages(rewards, eps_adv: float = 1e-8) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    # constant groups carry no signal; the mean's rounding error would otherwise leak through eps
    if r.size <= 1 or np.ptp(r) == 0:
        return np.zeros_like(r)
    return (r - r.mean()) / (r.std() + eps_adv)


# ----------------------------------------------------------------- objective

def token_objective(logp_new, logp_old, logp_ref, A, clip_eps: float = 0.2, beta: float = 0.01):
    """Clipped surrogate minus beta * k3 KL estimate; to be maximised. Vectorised."""
    ratio = np.exp(np.asarray(logp_new) - logp_old)
    surrogate = np.minimum(ratio * A, np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * A)
    delta = np.asarray(logp_ref) - logp_new
    kl = np.exp(delta) - delta - 1
    return surrogate - beta * kl


def token_objective_grad(logp_new, logp_old, logp_ref, A, clip_eps: float = 0.2, beta: float = 0.01):
    """d token_objective / d logp_new."""
    ratio = np.exp(np.asarray(logp_new) - logp_old)
    A = np.broadcast_to(A, ratio.shape)
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps)
    # the clipped branch wins (zero gradient) only when it is strictly smaller
    active = ratio * A <= clipped * A
    d_sur = np.where(active, ratio * A, 0.0)
    d_kl = 1.0 - np.exp(np.asarray(logp_ref) - logp_new)
    return d_sur - beta * d_kl


def _score_rows(tokens, P, sets, trace, snapshot) -> np.ndarray:
    lp = log_softmax(batch_logits(snapshot, tokens)[:, P:])
    return np.array([lp[i, p, trace.final_tokens[p]] for i, C in enumerate(sets) for p in C])


def trajectory_loss(trace: RolloutTrace, plan: SegmentPlan, snapshots: dict, A: float,
                    config: TrainConfig):
    """Loss for one trajectory and the token objectives that realise its gradient.

    ``snapshots`` maps ``current``/``old``/``ref`` to parameters. Returns
    ``(loss, objectives)`` with objectives as ``TokenObjective`` tuples whose
    weights are d(-loss)/d(logp_new) per position.
    """
    tokens, sets = segment_inputs(trace, plan)
    P = len(trace.prompt_tokens)
    lp = {k: _score_rows(tokens, P, sets, trace, snapshots[k]) for k in ("current", "old", "ref")}
    obj = token_objective(lp["current"], lp["old"], lp["ref"], A, config.clip_eps, config.kl_beta)
    g = token_objective_grad(lp["current"], lp["old"], lp["ref"], A, config.clip_eps, config.kl_beta)
    n = obj.size
    objectives = []
    k = 0
    for i, C in enumerate(sets):
        state = SequenceState(tokens[i, :P], tokens[i, P:])
        for p in C:
            objectives.append(TokenObjective(state, p, trace.final_tokens[p], float(g[k] / n)))
            k += 1
    return float(-obj.mean()), objectives


# ----------------------------------------------------------------- optimizer

@dataclass
class OptimizerState:
    m: ModelParams
    v: ModelParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params: ModelParams, **hp) -> "OptimizerState":
        return cls(params.zeros_like(), params.zeros_like(), **hp)


def global_norm(grads: ModelParams) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for _, g in grads.items())))


def adam_step(params: ModelParams, grads: ModelParams, state: OptimizerState,
              lr: float, clip_norm: float | None = None) -> tuple[ModelParams, OptimizerState, float]:
    """Global-norm clip, then a bias-corrected Adam(W) update.

    Returns new params, new state, and the pre-clip gradient norm.
    """
    if grads.dims != params.dims or state.m.dims != params.dims:
        raise AtpoError("SHAPE_MISMATCH", "params, grads and optimizer state dims differ")
    norm = global_norm(grads)
    scale = 1.0
    if clip_norm is not None and norm > clip_norm:
        scale = clip_norm / norm
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k] * scale
        m = b1 * state.m[k] + (1 - b1) * g
        v = b2 * state.v[k] + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        new_p[k] = p - lr * (mhat / (np.sqrt(vhat) + state.eps) + state.weight_decay * p)
        new_m[k], new_v[k] = m, v
    dims = params.dims
    new_state = OptimizerState(ModelParams(dims, new_m), ModelParams(dims, new_v), t,
                               b1, b2, state.eps, state.weight_decay)
    return ModelParams(dims, new_p), new_state, norm


# ------------------------------------------------------------------- trainer

@dataclass
class IterationResult:
    record: dict
    timings: dict
    traces: list[RolloutTrace] = field(default_factory=list)
    plan: SegmentPlan | None = None
    curves: DifficultyCurves | None = None


def _add(a: ModelParams, b: ModelParams) -> ModelParams:
    return ModelParams(a.dims, {k: a[k] + b[k] for k in a.arrays})


class Trainer:
    """Holds the policy, its reference snapshot, optimizer state and the data stream."""

    def __init__(self, config: TrainConfig, params: ModelParams | None = None):
        self.config = config
        self.dims = Dims(config.vocab_size, config.P, config.L, config.d_model)
        self.vocab = config.vocab
        self.params = params if params is not None else init_params(config.seed, self.dims, config.init_scale)
        self.ref = ParamSnapshot.take(self.params, "ref")
        self.opt = OptimizerState.for_params(
            self.params, beta1=config.adam_beta1, beta2=config.adam_beta2,
            eps=config.adam_eps, weight_decay=config.weight_decay)
        self.iteration = 0
        self.eval_set = tasks.generate(config.task, config.eval_count, config.L, config.seed,
                                       P=config.P, start=tasks.EVAL_OFFSET, vocab=self.vocab)
        self._pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def _map(self, fn, items):
        # chunks are fixed by the data, not the worker count, so results do not depend on it
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def batch_prompts(self, iteration: int) -> list[tasks.TaskInstance]:
        c = self.config
        return tasks.generate(c.task, c.batch_prompts, c.L, c.seed, P=c.P,
                              start=iteration * c.batch_prompts, vocab=self.vocab)

    def _rollout_group(self, snapshot, inst: tasks.TaskInstance, spec: DecodeSpec):
        G = self.config.group_size
        traces = rollout_batch(snapshot, [inst.prompt] * G, [(inst.index, j) for j in range(G)], spec)
        out = []
        for tr in traces:
            comp = tr.final_tokens
            out.append(tr.with_outcome(tasks.reward(inst, comp, self.vocab.pad_id),
                                       tasks.is_correct(inst, comp, self.vocab.pad_id)))
        return out

    def _group_grad(self, args):
        group, advs, plan, old, n_traj = args
        c = self.config
        P = c.P
        all_tokens, rows, cols, targets, A, owner = [], [], [], [], [], []
        for j, (tr, a) in enumerate(zip(group, advs)):
            tokens, sets = segment_inputs(tr, plan)
            base = len(all_tokens)
            all_tokens.extend(tokens)
            for i, C in enumerate(sets):
                for p in C:
                    rows.append(base + i)
                    cols.append(P + p)
                    targets.append(tr.final_tokens[p])
                    A.append(a)
                    owner.append(j)
        tokens = np.stack(all_tokens)
        rows, cols, targets = np.array(rows), np.array(cols), np.array(targets)
        A, owner = np.array(A), np.array(owner)

        def lp_of(snap):
            lp = log_softmax(batch_logits(snap, tokens)[rows, cols])
            return lp[np.arange(rows.size), targets]

        lp_old, lp_ref = lp_of(old), lp_of(self.ref)
        counts = np.bincount(owner)[owner]

        def weights(lp_new):
            g = token_objective_grad(lp_new, lp_old, lp_ref, A, c.clip_eps, c.kl_beta)
            return g / counts / n_traj

        _, grad, lp_new = batch_loss_and_grad(self.params, tokens, rows, cols, targets, weights)
        obj = token_objective(lp_new, lp_old, lp_ref, A, c.clip_eps, c.kl_beta)
        traj_loss = -np.bincount(owner, weights=obj) / np.bincount(owner)
        return traj_loss, grad

    def evaluate(self, instances=None, mode: str = "greedy", temperature: float = 1.0) -> tuple[float, float]:
        """Mean reward and exact-match rate on the held-out set (greedy by default).

        The scored rollouts are kept on ``last_eval_traces``.
        """
        c = self.config
        instances = self.eval_set if instances is None else instances
        spec = DecodeSpec(c.T, c.L, temperature, mode, c.seed, c.margin_eps)
        chunks = [instances[i:i + 16] for i in range(0, len(instances), 16)]
        snap = ParamSnapshot.take(self.params, "current")

        def run(chunk):
            trs = rollout_batch(snap, [x.prompt for x in chunk], [(x.index, 0) for x in chunk], spec)
            return [t.with_outcome(tasks.reward(x, t.final_tokens, self.vocab.pad_id),
                                   tasks.is_correct(x, t.final_tokens, self.vocab.pad_id))
                    for x, t in zip(chunk, trs)]

        self.last_eval_traces = [t for part in self._map(run, chunks) for t in part]
        return (float(np.mean([t.reward for t in self.last_eval_traces])),
                float(np.mean([t.correct for t in self.last_eval_traces])))

    def train_iteration(self) -> IterationResult:
        c = self.config
        it = self.iteration
        timings = {}
        t0 = time.perf_counter()
        old = ParamSnapshot.take(self.params, "old")
        batch = self.batch_prompts(it)
        spec = DecodeSpec(c.T, c.L, c.temperature, "sample", c.seed * 1_000_003 + it, c.margin_eps)
        groups = self._map(lambda inst: self._rollout_group(old, inst, spec), batch)
        t1 = time.perf_counter()
        traces = [tr for g in groups for tr in g]
        curves = batch_mean_curves(traces)
        t2 = time.perf_counter()
        plan = select(c.policy, curves, c.N, c.threshold_mult)
        t3 = time.perf_counter()
        advs = [group_advantages([tr.reward for tr in g], c.adv_eps) for g in groups]
        n_traj = len(traces)
        parts = self._map(self._group_grad, [(g, a, plan, old, n_traj) for g, a in zip(groups, advs)])
        t4 = time.perf_counter()
        grad = parts[0][1]
        for _, gr in parts[1:]:
            grad = _add(grad, gr)
        loss = float(np.mean(np.concatenate([tl for tl, _ in parts])))
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for _, g in grad.items()):
            raise NumericError(it, f"loss={loss}")
        self.params, self.opt, gnorm = adam_step(self.params, grad, self.opt, c.lr, c.clip_norm)
        t5 = time.perf_counter()
        timings = {"rollout": t1 - t0, "metric": t2 - t1, "selection": t3 - t2,
                   "scoring": t4 - t3, "update": t5 - t4}
        rewards = np.array([tr.reward for tr in traces])
        record = {
            "iteration": it,
            "policy": c.policy,
            "mean_reward": float(rewards.mean()),
            "exact_rate": float(np.mean([tr.correct for tr in traces])),
            "loss": loss,
            "grad_norm": gnorm,
            "boundaries": list(plan.boundaries),
            "mean_entropy": float(curves.entropy.mean()),
            "mean_inv_margin": float(curves.inv_margin.mean()),
            "max_roec": float(curves.roec.max()),
        }
        self.iteration += 1
        return IterationResult(record, timings, traces, plan, curves)


# ------------------------------------------------------------------- driver

def run_training(config: TrainConfig, out_dir, trace_every: int | None = None,
                 progress=None) -> dict:
    """Train for ``config.iterations`` iterations, writing everything under ``out_dir``.

    Files: ``config.json``, ``run.jsonl`` (train and eval records; deterministic),
    ``timings.jsonl`` (wall-clock per phase; not deterministic), ``ckpt_<k>.bin``
    every ``checkpoint_every`` updates, ``final.bin``, and ``traces/iter_<k>.jsonl``
    every ``trace_every`` iterations.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in ("run.jsonl", "timings.jsonl"):
            (out / name).write_text("")
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise AtpoError("IO_ERROR", f"{out}: {e.strerror or e}") from e
    trace_every = config.trace_every if trace_every is None else trace_every
    run_log, timing_log = out / "run.jsonl", out / "timings.jsonl"
    trainer = Trainer(config)

    def evaluate(step):
        t0 = time.perf_counter()
        r, exact = trainer.evaluate()
        trace_io.append_record(run_log, {"kind": "eval", "iteration": step,
                                         "eval_reward": r, "eval_exact": exact})
        if progress:
            progress(f"step {step}: eval reward {r:.4f}, exact {exact:.4f} "
                     f"({time.perf_counter() - t0:.1f}s)")
        return r

    try:
        first = last = evaluate(0)
        for it in range(config.iterations):
            res = trainer.train_iteration()
            trace_io.append_record(run_log, {"kind": "train", **res.record})
            trace_io.append_record(timing_log, {"iteration": it, "policy": config.policy, **res.timings})
            if trace_every and it % trace_every == 0:
                (out / "traces").mkdir(exist_ok=True)
                trace_io.write_traces(out / "traces" / f"iter_{it:05d}.jsonl", res.traces)
            step = it + 1
            if config.checkpoint_every and step % config.checkpoint_every == 0:
                trace_io.write_checkpoint(out / f"ckpt_{step:05d}.bin", trainer.params, config.seed)
            if step % config.eval_every == 0 or step == config.iterations:
                last = evaluate(step)
        trace_io.write_checkpoint(out / "final.bin", trainer.params, config.seed)
    finally:
        trainer.close()
    return {"initial_eval_reward": first, "final_eval_reward": last, "trainer": trainer}
