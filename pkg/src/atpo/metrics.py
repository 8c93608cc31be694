"""Step-level difficulty signals and their batch averages.

All quantities are in nats and computed in float64. Per-step means are taken
over the positions that were still masked when the step began.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import AtpoError, DifficultyCurves, RolloutTrace

DEFAULT_MARGIN_EPS = 1e-6


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(max(-np.sum(nz * np.log(nz)), 0.0))


def confidence_margin(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    top2 = np.partition(p, -2)[-2:]
    return float(top2[1] - top2[0])


def inverse_margin(p, eps_margin: float = DEFAULT_MARGIN_EPS) -> float:
    return 1.0 / max(confidence_margin(p), eps_margin)


def kl_divergence(p, q, eps_smooth: float = 0.0) -> float:
    """KL(p || q). With ``eps_smooth > 0`` q is smoothed toward uniform first."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise AtpoError("BAD_SHAPE", f"{p.shape} vs {q.shape}")
    if eps_smooth < 0:
        raise AtpoError("BAD_EPS", "eps_smooth must be >= 0")
    if eps_smooth > 0:
        q = (q + eps_smooth) / (1.0 + q.size * eps_smooth)
    support = p > 0
    if np.any(q[support] == 0):
        raise AtpoError("Q_HAS_ZERO_SUPPORT")
    ps, qs = p[support], q[support]
    return float(max(np.sum(ps * (np.log(ps) - np.log(qs))), 0.0))


# Row-wise versions used on the hot path (rollouts score many positions at once).

def entropy_rows(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return np.maximum(-terms.sum(axis=-1), 0.0)


def margin_rows(probs: np.ndarray) -> np.ndarray:
    top2 = np.partition(probs, -2, axis=-1)[..., -2:]
    return top2[..., 1] - top2[..., 0]


def inv_margin_rows(probs: np.ndarray, eps_margin: float = DEFAULT_MARGIN_EPS) -> np.ndarray:
    return 1.0 / np.maximum(margin_rows(probs), eps_margin)


def step_means(probs, eps_margin: float = DEFAULT_MARGIN_EPS) -> tuple[float, float]:
    """Mean entropy and mean inverse margin over the (m_t, V) distributions of one step."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if probs.shape[0] == 0:
        raise AtpoError("EMPTY_STEP")
    return float(entropy_rows(probs).mean()), float(inv_margin_rows(probs, eps_margin).mean())


def roec_curve(entropy: Sequence[float]) -> np.ndarray:
    h = np.asarray(entropy, dtype=np.float64)
    out = np.zeros_like(h)
    out[1:] = np.abs(np.diff(h))
    return out


def batch_mean_curves(traces: Sequence[RolloutTrace]) -> DifficultyCurves:
    """Unweighted mean over rollouts of their per-step means, plus RoEC of the mean entropy."""
    if len(traces) == 0:
        raise AtpoError("EMPTY_BATCH")
    T = traces[0].T
    if any(tr.T != T for tr in traces):
        raise AtpoError("MIXED_T", str(sorted({tr.T for tr in traces})))
    # sort so the float reduction does not depend on list order
    H = np.sort(np.stack([tr.entropies for tr in traces]), axis=0)
    CM = np.sort(np.stack([tr.inv_margins for tr in traces]), axis=0)
    h = H.sum(axis=0) / len(traces)
    cm = CM.sum(axis=0) / len(traces)
    return DifficultyCurves(h, cm, roec_curve(h))
