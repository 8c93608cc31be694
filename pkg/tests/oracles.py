"""Independent reference implementations used only by the tests.

These deliberately avoid the package's code paths: selection is a literal
transcription of the two-stage rule using Python lists and ``statistics``;
metrics use mpmath at 30 digits.
"""

import statistics

import mpmath


# ----------------------------------------------------------------- metrics

DPS = 30


def _mp(p):
    return [mpmath.mpf(float(x)) for x in p]


def mp_entropy(p):
    with mpmath.workdps(DPS):
        return float(-mpmath.fsum(x * mpmath.log(x) for x in _mp(p) if x > 0))


def _top2(p):
    # ordering doubles is exact; only the subtraction needs extra precision
    a, b = sorted((float(x) for x in p), reverse=True)[:2]
    return mpmath.mpf(a), mpmath.mpf(b)


def mp_margin(p):
    with mpmath.workdps(DPS):
        a, b = _top2(p)
        return float(a - b)


def mp_inverse_margin(p, eps):
    with mpmath.workdps(DPS):
        a, b = _top2(p)
        return float(1 / max(a - b, mpmath.mpf(eps)))


def mp_kl(p, q):
    with mpmath.workdps(DPS):
        return float(mpmath.fsum(a * (mpmath.log(a) - mpmath.log(b)) for a, b in zip(_mp(p), _mp(q)) if a > 0))


# --------------------------------------------------------------- selection

def oracle_uniform(T, N):
    out = []
    for i in range(N + 1):
        b = (i * T) // N
        if b not in out:
            out.append(b)
    return out


def _fallback(roec, N):
    T = len(roec)
    sigma = statistics.pstdev(roec)
    return T < 2 * N or sigma < 1e-9


def _roec_candidates(roec, mult=1.0):
    mu = statistics.fmean(roec)
    sigma = statistics.pstdev(roec)
    thr = mu + mult * sigma
    # steps are 1-based
    return [t for t in range(1, len(roec) + 1) if roec[t - 1] > thr]


def _add_cm(S, cm, N, T):
    # walk steps from largest inverse margin down; equal values keep smaller t first
    order = sorted(range(1, T + 1), key=lambda t: (-cm[t - 1], t))
    for t in order:
        if len(S) >= N - 1:
            break
        if (t - 1) in S:
            continue
        b = t - 1
        if b < 1 or b > T - 1:
            continue
        S.append(b)
    return S


def oracle_hybrid(roec, cm, N, mult=1.0):
    T = len(roec)
    if _fallback(roec, N):
        return oracle_uniform(T, N)
    S = []
    for t in _roec_candidates(roec, mult):
        if len(S) == N - 1:
            break
        b = t - 1
        if 1 <= b <= T - 1:
            S.append(b)
    if len(S) < N - 1:
        S = _add_cm(S, cm, N, T)
    return [0] + sorted(set(S)) + [T]


def oracle_roec_only(roec, N, mult=1.0):
    T = len(roec)
    if _fallback(roec, N):
        return oracle_uniform(T, N)
    S = []
    for t in _roec_candidates(roec, mult):
        if len(S) == N - 1:
            break
        if 1 <= t - 1 <= T - 1:
            S.append(t - 1)
    for b in oracle_uniform(T, N)[1:-1]:
        if len(S) == N - 1:
            break
        if b not in S:
            S.append(b)
    return [0] + sorted(set(S)) + [T]


def oracle_cm_only(cm, N):
    T = len(cm)
    return [0] + sorted(set(_add_cm([], cm, N, T))) + [T]
