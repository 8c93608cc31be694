"""Step-selection policies: map difficulty curves and a segment budget N to a plan.

A selected step ``t`` becomes boundary ``t - 1``, so the selected step opens
its segment. Boundaries 0 and T are always present; selected boundaries must
fall in [1, T-1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AtpoError, DifficultyCurves, SegmentPlan, validate_plan

SIGMA_FLOOR = 1e-9


@dataclass(frozen=True)
class CurveStats:
    mean: float
    std: float


def curve_stats(values) -> CurveStats:
    v = np.asarray(values, dtype=np.float64)
    mu = float(v.mean())
    return CurveStats(mu, float(np.sqrt(np.mean((v - mu) ** 2))))


def _check_n(T: int, N: int):
    if not 1 <= N <= T:
        raise AtpoError("BAD_N", f"need 1 <= N <= T, got N={N}, T={T}")


def _finish(S, T: int, N: int) -> SegmentPlan:
    return validate_plan([0, *sorted(set(S)), T], T, N)


def select_uniform(T: int, N: int) -> SegmentPlan:
    _check_n(T, N)
    return validate_plan(sorted({i * T // N for i in range(N + 1)}), T, N)


def _ill_conditioned(curves: DifficultyCurves, N: int, threshold_mult: float) -> tuple[bool, float]:
    stats = curve_stats(curves.roec)
    bad = curves.T < 2 * N or stats.std < SIGMA_FLOOR
    return bad, stats.mean + threshold_mult * stats.std


def _stage_roec(curves: DifficultyCurves, N: int, threshold: float) -> list[int]:
    T = curves.T
    S: list[int] = []
    for t in range(1, T + 1):
        if len(S) == N - 1:
            break
        if curves.roec[t - 1] > threshold and 1 <= t - 1 <= T - 1:
            S.append(t - 1)
    return S


def _stage_cm(curves: DifficultyCurves, N: int, S: list[int]) -> list[int]:
    T = curves.T
    S = list(S)
    taken = set(S)
    # steps whose boundary is already chosen are masked out
    remaining = [t for t in range(1, T + 1) if t - 1 not in taken]
    # stable sort: ties keep increasing-t order
    remaining.sort(key=lambda t: -curves.inv_margin[t - 1])
    for t in remaining:
        if len(S) == N - 1:
            break
        b = t - 1
        if 1 <= b <= T - 1 and b not in taken:
            S.append(b)
            taken.add(b)
    return S


def select_hybrid(curves: DifficultyCurves, N: int, threshold_mult: float = 1.0) -> SegmentPlan:
    """RoEC spikes first (in step order), then backfill by largest inverse margin."""
    T = curves.T
    _check_n(T, N)
    bad, threshold = _ill_conditioned(curves, N, threshold_mult)
    if bad:
        return select_uniform(T, N)
    S = _stage_roec(curves, N, threshold)
    if len(S) < N - 1:
        S = _stage_cm(curves, N, S)
    return _finish(S, T, N)


def select_roec_only(curves: DifficultyCurves, N: int, threshold_mult: float = 1.0) -> SegmentPlan:
    T = curves.T
    _check_n(T, N)
    bad, threshold = _ill_conditioned(curves, N, threshold_mult)
    if bad:
        return select_uniform(T, N)
    S = _stage_roec(curves, N, threshold)
    for b in select_uniform(T, N).boundaries[1:-1]:
        if len(S) == N - 1:
            break
        if b not in S:
            S.append(b)
    return _finish(S, T, N)


def select_cm_only(curves: DifficultyCurves, N: int) -> SegmentPlan:
    T = curves.T
    _check_n(T, N)
    return _finish(_stage_cm(curves, N, []), T, N)


def select(policy: str, curves: DifficultyCurves, N: int, threshold_mult: float = 1.0) -> SegmentPlan:
    if policy == "uniform":
        return select_uniform(curves.T, N)
    if policy == "hybrid":
        return select_hybrid(curves, N, threshold_mult)
    if policy == "roec":
        return select_roec_only(curves, N, threshold_mult)
    if policy == "cm":
        return select_cm_only(curves, N)
    raise AtpoError("BAD_POLICY", policy)


def segments_of(plan: SegmentPlan) -> list[tuple[int, int]]:
    return plan.segments()
