"""Synthetic verifiable tasks: copy, sort, and two-digit addition.

Prompts are the task text followed by the '>' separator, right-padded with
PAD to length P. Gold completions are right-padded with PAD to length L.
Instance ``i`` of a task is a pure function of ``(seed, task, i)``, so train
and eval sets are made disjoint by drawing from disjoint index ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TASKS, AtpoError, Vocab

N_DIGITS = 6
EVAL_OFFSET = 1_000_000_000
GOLD_LEN = {"copy": N_DIGITS, "sort": N_DIGITS, "sum": 3}
PROMPT_LEN = {"copy": N_DIGITS + 1, "sort": N_DIGITS + 1, "sum": 6}


@dataclass(frozen=True)
class TaskInstance:
    task: str
    index: int
    prompt_text: str
    gold_text: str
    prompt: tuple[int, ...]
    gold: tuple[int, ...]


def make_instance(task: str, index: int, prompt_text: str, gold_text: str,
                  L: int, P: int, vocab: Vocab) -> TaskInstance:
    ptoks = vocab.encode(prompt_text + ">")
    gtoks = vocab.encode(gold_text)
    if len(gtoks) > L:
        raise AtpoError("L_TOO_SMALL", f"{task} needs L >= {len(gtoks)}, got {L}")
    if len(ptoks) > P:
        raise AtpoError("P_TOO_SMALL", f"{task} needs P >= {len(ptoks)}, got {P}")
    return TaskInstance(
        task, index, prompt_text, gold_text,
        tuple(ptoks + [vocab.pad_id] * (P - len(ptoks))),
        tuple(gtoks + [vocab.pad_id] * (L - len(gtoks))),
    )


def _texts(task: str, rng: np.random.Generator) -> tuple[str, str]:
    if task == "sum":
        a, b = (int(x) for x in rng.integers(0, 100, size=2))
        return f"{a:02d}+{b:02d}", f"{a + b:03d}"
    digits = rng.integers(0, 10, size=N_DIGITS)
    prompt = "".join(map(str, digits))
    if task == "copy":
        return prompt, prompt
    return prompt, "".join(map(str, np.sort(digits)))


def generate(task: str, count: int, L: int, seed: int, P: int = 8,
             start: int = 0, vocab: Vocab | None = None) -> list[TaskInstance]:
    if task not in TASKS:
        raise AtpoError("BAD_TASK", task)
    if L < GOLD_LEN[task]:
        raise AtpoError("L_TOO_SMALL", f"{task} needs L >= {GOLD_LEN[task]}, got {L}")
    if P < PROMPT_LEN[task]:
        raise AtpoError("P_TOO_SMALL", f"{task} needs P >= {PROMPT_LEN[task]}, got {P}")
    vocab = vocab or Vocab()
    out = []
    for i in range(start, start + count):
        rng = np.random.default_rng([seed, TASKS.index(task), i])
        out.append(make_instance(task, i, *_texts(task, rng), L=L, P=P, vocab=vocab))
    return out


def _matches(instance: TaskInstance, completion, pad_id: int) -> tuple[int, int]:
    gold = np.asarray(instance.gold)
    comp = np.asarray(completion)
    if comp.shape != gold.shape:
        raise AtpoError("BAD_SHAPE", f"completion length {comp.size} != {gold.size}")
    keep = gold != pad_id
    return int(np.sum(comp[keep] == gold[keep])), int(keep.sum())


def reward(instance: TaskInstance, completion, pad_id: int = 1) -> float:
    hit, n = _matches(instance, completion, pad_id)
    return 0.5 * hit / n + 0.5 * float(hit == n)


def is_correct(instance: TaskInstance, completion, pad_id: int = 1) -> bool:
    hit, n = _matches(instance, completion, pad_id)
    return hit == n
