"""Domain types shared across the package.

Every type validates on construction and is treated as immutable afterwards.
Numeric arrays are float64; token arrays are int64.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

PROB_TOL = 1e-6


class AtpoError(ValueError):
    """Raised for any contract violation. ``code`` names the failure kind."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


# --------------------------------------------------------------------- vocab

MASK_ID = 0
PAD_ID = 1
DEFAULT_SYMBOLS = "0123456789+>"


@dataclass(frozen=True)
class Vocab:
    size: int = 14
    mask_id: int = MASK_ID
    pad_id: int = PAD_ID
    symbols: str = DEFAULT_SYMBOLS

    def __post_init__(self):
        if self.size < 4:
            raise AtpoError("BAD_VOCAB", f"V={self.size} < 4")
        if self.mask_id == self.pad_id:
            raise AtpoError("BAD_VOCAB", "MASK and PAD share an id")
        ids = self.symbol_ids
        if len(set(self.symbols)) != len(self.symbols):
            raise AtpoError("BAD_VOCAB", "duplicate symbol")
        for i in ids.values():
            if not 0 <= i < self.size or i in (self.mask_id, self.pad_id):
                raise AtpoError("BAD_VOCAB", f"symbol id {i} invalid")

    @property
    def symbol_ids(self) -> dict[str, int]:
        # symbols take the ids left over after MASK/PAD, in order
        free = [i for i in range(self.size) if i not in (self.mask_id, self.pad_id)]
        if len(self.symbols) > len(free):
            raise AtpoError("BAD_VOCAB", "more symbols than free ids")
        return dict(zip(self.symbols, free))

    def encode(self, text: str) -> list[int]:
        table = self.symbol_ids
        try:
            return [table[c] for c in text]
        except KeyError as e:
            raise AtpoError("UNKNOWN_SYMBOL", repr(e.args[0])) from None

    def decode(self, ids: Sequence[int], pad: str = "", mask: str = "_") -> str:
        inv = {i: c for c, i in self.symbol_ids.items()}
        out = []
        for i in ids:
            i = int(i)
            if i == self.pad_id:
                out.append(pad)
            elif i == self.mask_id:
                out.append(mask)
            else:
                out.append(inv.get(i, "?"))
        return "".join(out)


# ----------------------------------------------------------- distributions

def validate_prob(values) -> np.ndarray:
    """Check that ``values`` is a probability vector; return it as float64."""
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise AtpoError("BAD_SHAPE", f"expected a 1-d array, got shape {p.shape}")
    if np.any(p < 0):
        raise AtpoError("NEGATIVE_ENTRY", f"min entry {p.min()!r}")
    s = float(p.sum())
    if abs(s - 1.0) > PROB_TOL:
        raise AtpoError("SUM_OUT_OF_TOLERANCE", f"sum={s!r}")
    p.setflags(write=False)
    return p


# ---------------------------------------------------------------- sequences

@dataclass(frozen=True)
class SequenceState:
    prompt: np.ndarray
    completion: np.ndarray
    mask_id: int = MASK_ID

    def __post_init__(self):
        prompt = np.asarray(self.prompt, dtype=np.int64)
        completion = np.asarray(self.completion, dtype=np.int64)
        if np.any(prompt == self.mask_id):
            raise AtpoError("MASK_IN_PROMPT")
        prompt.setflags(write=False)
        completion.setflags(write=False)
        object.__setattr__(self, "prompt", prompt)
        object.__setattr__(self, "completion", completion)

    @property
    def tokens(self) -> np.ndarray:
        return np.concatenate([self.prompt, self.completion])

    @property
    def masked_positions(self) -> np.ndarray:
        return np.flatnonzero(self.completion == self.mask_id)


@dataclass(frozen=True)
class StepRecord:
    """One denoising step: what was masked on entry, what got committed."""

    t: int
    masked_count: int
    transfer_positions: tuple[int, ...]
    mean_entropy: float
    mean_inv_margin: float


@dataclass(frozen=True)
class RolloutTrace:
    prompt_id: int
    rollout_id: int
    T: int
    L: int
    steps: tuple[StepRecord, ...]
    final_tokens: tuple[int, ...]
    prompt_tokens: tuple[int, ...] = ()
    reward: float = 0.0
    correct: bool = False

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "final_tokens", tuple(int(x) for x in self.final_tokens))
        object.__setattr__(self, "prompt_tokens", tuple(int(x) for x in self.prompt_tokens))
        if len(self.steps) != self.T:
            raise AtpoError("BAD_TRACE", f"{len(self.steps)} steps for T={self.T}")
        if len(self.final_tokens) != self.L:
            raise AtpoError("BAD_TRACE", "final token count != L")
        seen: set[int] = set()
        remaining = self.L
        for i, s in enumerate(self.steps):
            if s.t != i + 1:
                raise AtpoError("BAD_TRACE", f"step index {s.t} at slot {i}")
            if s.masked_count != remaining:
                raise AtpoError("BAD_TRACE", f"step {s.t}: masked_count {s.masked_count} != {remaining}")
            pos = set(s.transfer_positions)
            if len(pos) != len(s.transfer_positions) or pos & seen:
                raise AtpoError("BAD_TRACE", f"step {s.t}: transfer mask overlaps")
            if any(not 0 <= p < self.L for p in pos):
                raise AtpoError("BAD_TRACE", f"step {s.t}: position out of range")
            if not (s.mean_entropy >= 0 and s.mean_inv_margin >= 1):
                raise AtpoError("BAD_TRACE", f"step {s.t}: metric out of range")
            seen |= pos
            remaining -= len(pos)
        if remaining != 0:
            raise AtpoError("BAD_TRACE", "transfer masks do not cover the completion")
        if not 0.0 <= self.reward <= 1.0:
            raise AtpoError("BAD_TRACE", f"reward {self.reward} outside [0,1]")

    @property
    def entropies(self) -> np.ndarray:
        return np.array([s.mean_entropy for s in self.steps])

    @property
    def inv_margins(self) -> np.ndarray:
        return np.array([s.mean_inv_margin for s in self.steps])

    def commit_step(self) -> np.ndarray:
        """Array of length L: the step (1..T) at which each position was committed."""
        out = np.zeros(self.L, dtype=np.int64)
        for s in self.steps:
            out[list(s.transfer_positions)] = s.t
        return out

    def entering_masked(self, t: int) -> np.ndarray:
        """Positions still masked when step ``t`` begins (t may be T+1)."""
        return np.flatnonzero(self.commit_step() >= t)

    def with_outcome(self, reward: float, correct: bool) -> "RolloutTrace":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(reward=float(reward), correct=bool(correct))
        return RolloutTrace(**kw)


# ------------------------------------------------------------------ curves

@dataclass(frozen=True)
class DifficultyCurves:
    entropy: np.ndarray
    inv_margin: np.ndarray
    roec: np.ndarray

    def __post_init__(self):
        arrs = []
        for name in ("entropy", "inv_margin", "roec"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs.append(a)
        h, cm, r = arrs
        if h.ndim != 1 or h.size == 0 or cm.shape != h.shape or r.shape != h.shape:
            raise AtpoError("BAD_SHAPE", "curves must be equal-length non-empty 1-d arrays")
        if not all(np.all(np.isfinite(a)) and np.all(a >= 0) for a in arrs):
            raise AtpoError("BAD_CURVES", "entries must be finite and >= 0")

    def __eq__(self, other):
        if not isinstance(other, DifficultyCurves):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n))
                   for n in ("entropy", "inv_margin", "roec"))

    __hash__ = None

    @property
    def T(self) -> int:
        return int(self.entropy.size)

    @classmethod
    def from_means(cls, entropy, inv_margin) -> "DifficultyCurves":
        from .metrics import roec_curve

        return cls(entropy, inv_margin, roec_curve(entropy))


# -------------------------------------------------------------------- plans

@dataclass(frozen=True)
class SegmentPlan:
    T: int
    boundaries: tuple[int, ...]

    @property
    def num_segments(self) -> int:
        return len(self.boundaries) - 1

    def segments(self) -> list[tuple[int, int]]:
        b = self.boundaries
        return list(zip(b[:-1], b[1:]))


def validate_plan(boundaries, T: int, N: int) -> SegmentPlan:
    b = tuple(int(x) for x in boundaries)
    if len(b) < 2 or any(y <= x for x, y in zip(b, b[1:])):
        raise AtpoError("NOT_STRICTLY_INCREASING", str(b))
    if b[0] != 0 or b[-1] != T:
        raise AtpoError("BAD_ENDPOINTS", f"{b} for T={T}")
    if len(b) - 1 > N:
        raise AtpoError("TOO_MANY_SEGMENTS", f"{len(b) - 1} > N={N}")
    return SegmentPlan(T, b)


# ------------------------------------------------------------------ config

POLICIES = ("uniform", "roec", "cm", "hybrid")
TASKS = ("copy", "sort", "sum")


@dataclass(frozen=True)
class TrainConfig:
    task: str = "copy"
    T: int = 16
    N: int = 4
    L: int = 16
    P: int = 8
    vocab_size: int = 14
    d_model: int = 32
    group_size: int = 6
    batch_prompts: int = 8
    iterations: int = 300
    lr: float = 1e-3
    clip_eps: float = 0.2
    clip_norm: float = 0.2
    kl_beta: float = 0.01
    adv_eps: float = 1e-8
    margin_eps: float = 1e-6
    policy: str = "hybrid"
    threshold_mult: float = 1.0
    temperature: float = 1.0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    init_scale: float = 0.02
    eval_count: int = 64
    eval_every: int = 25
    checkpoint_every: int = 100
    trace_every: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 1 <= self.N <= self.T <= self.L:
            raise AtpoError("BAD_CONFIG", f"need 1 <= N <= T <= L, got N={self.N} T={self.T} L={self.L}")
        if self.group_size < 2:
            raise AtpoError("BAD_CONFIG", "group_size must be >= 2")
        if self.batch_prompts < 1 or self.iterations < 0 or self.P < 1:
            raise AtpoError("BAD_CONFIG", "batch_prompts >= 1, iterations >= 0, P >= 1 required")
        if self.policy not in POLICIES:
            raise AtpoError("BAD_CONFIG", f"policy {self.policy!r} not in {POLICIES}")
        if self.task not in TASKS:
            raise AtpoError("BAD_CONFIG", f"task {self.task!r} not in {TASKS}")
        rates = ("clip_eps", "clip_norm", "adv_eps", "margin_eps", "temperature",
                 "adam_eps", "init_scale", "threshold_mult")
        for name in rates:
            if not getattr(self, name) > 0:
                raise AtpoError("BAD_CONFIG", f"{name} must be > 0")
        # lr = 0 is allowed: it freezes the policy (used as a control run)
        if self.lr < 0 or self.kl_beta < 0 or self.weight_decay < 0:
            raise AtpoError("BAD_CONFIG", "lr, kl_beta, weight_decay must be >= 0")
        if not self.clip_eps < 1:
            raise AtpoError("BAD_CONFIG", "clip_eps must be < 1")
        if self.workers < 1 or self.eval_every < 1 or self.checkpoint_every < 0 or self.trace_every < 0:
            raise AtpoError("BAD_CONFIG", "bad schedule/worker settings")
        self.vocab  # validates V

    @property
    def vocab(self) -> Vocab:
        return Vocab(size=self.vocab_size)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise AtpoError("UNKNOWN_KEYS", ", ".join(sorted(unknown)))
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
