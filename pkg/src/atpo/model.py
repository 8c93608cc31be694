"""A one-block bidirectional transformer denoiser with a hand-written backward pass.

Layout (pre-LN, single head)::

    h0 = tok[x] + pos
    h1 = h0 + Attn(LN1(h0)) @ wo
    h2 = h1 + tanh(LN2(h1) @ w1 + b1) @ w2 + b2
    logits = LNf(h2) @ w_out + b_out

MASK is an ordinary token; attention is unmasked. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .core import AtpoError, MASK_ID, SequenceState

LN_EPS = 1e-5

PARAM_ORDER = (
    "tok_emb", "pos_emb",
    "ln1_g", "ln1_b", "wq", "wk", "wv", "wo",
    "ln2_g", "ln2_b", "w1", "b1", "w2", "b2",
    "lnf_g", "lnf_b", "w_out", "b_out",
)
_GAINS = ("ln1_g", "ln2_g", "lnf_g")
_ZERO_INIT = ("ln1_b", "ln2_b", "lnf_b", "b1", "b2", "b_out")


@dataclass(frozen=True)
class Dims:
    V: int = 14
    P: int = 8
    L: int = 16
    d: int = 32

    @property
    def S(self) -> int:
        return self.P + self.L


def param_shapes(dims: Dims) -> dict[str, tuple[int, ...]]:
    V, S, d = dims.V, dims.S, dims.d
    return {
        "tok_emb": (V, d), "pos_emb": (S, d),
        "ln1_g": (d,), "ln1_b": (d,),
        "wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
        "ln2_g": (d,), "ln2_b": (d,),
        "w1": (d, 4 * d), "b1": (4 * d,), "w2": (4 * d, d), "b2": (d,),
        "lnf_g": (d,), "lnf_b": (d,),
        "w_out": (d, V), "b_out": (V,),
    }


def param_count(dims: Dims) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(dims).values())


class ModelParams:
    """Named float64 arrays in ``PARAM_ORDER`` plus the dims they were built for."""

    def __init__(self, dims: Dims, arrays: dict[str, np.ndarray]):
        shapes = param_shapes(dims)
        if set(arrays) != set(shapes):
            raise AtpoError("SHAPE_MISMATCH", "parameter names differ from the layout")
        for k, s in shapes.items():
            if arrays[k].shape != s:
                raise AtpoError("SHAPE_MISMATCH", f"{k}: {arrays[k].shape} != {s}")
        self.dims = dims
        self.arrays = {k: np.asarray(arrays[k], dtype=np.float64) for k in PARAM_ORDER}

    def __getitem__(self, k):
        return self.arrays[k]

    def items(self):
        return ((k, self.arrays[k]) for k in PARAM_ORDER)

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.dims, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in PARAM_ORDER])

    @classmethod
    def from_flat(cls, dims: Dims, flat: np.ndarray) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != param_count(dims):
            raise AtpoError("SHAPE_MISMATCH", f"{flat.size} values for {param_count(dims)} parameters")
        out, i = {}, 0
        for k, s in param_shapes(dims).items():
            n = int(np.prod(s))
            out[k] = flat[i:i + n].reshape(s).copy()
            i += n
        return cls(dims, out)

    def equals(self, other: "ModelParams") -> bool:
        return self.dims == other.dims and all(
            np.array_equal(self.arrays[k], other.arrays[k]) for k in PARAM_ORDER)


@dataclass(frozen=True)
class ParamSnapshot:
    label: str
    params: ModelParams

    @classmethod
    def take(cls, params: ModelParams, label: str) -> "ParamSnapshot":
        p = params.copy()
        for a in p.arrays.values():
            a.setflags(write=False)
        return cls(label, p)


def _as_params(p) -> ModelParams:
    return p.params if isinstance(p, ParamSnapshot) else p


def init_params(seed: int, dims: Dims, scale: float = 0.02) -> ModelParams:
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    arrays = {}
    for k, s in param_shapes(dims).items():
        if k in _GAINS:
            arrays[k] = np.ones(s)
        elif k in _ZERO_INIT:
            arrays[k] = np.zeros(s)
        else:
            arrays[k] = rng.normal(0.0, scale, size=s)
    return ModelParams(dims, arrays)


def zero_params(dims: Dims) -> ModelParams:
    return ModelParams(dims, {k: np.zeros(s) for k, s in param_shapes(dims).items()})


# ------------------------------------------------------------------ kernels

def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _ln_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _ln_bwd(dy, g, cache):
    xhat, rstd = cache
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, (dy * xhat).sum(axis=(0, 1)), dy.sum(axis=(0, 1))


def _lin(x, w):
    # one 2-D GEMM instead of a stacked matmul over the batch axis
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(*x.shape[:-1], w.shape[-1])


def _forward(p: ModelParams, x: np.ndarray, keep: bool):
    x = np.asarray(x, dtype=np.int64)
    S = x.shape[1]
    d = p.dims.d
    h0 = p["tok_emb"][x] + p["pos_emb"][:S]
    a, ln1 = _ln_fwd(h0, p["ln1_g"], p["ln1_b"])
    q, k, v = _lin(a, p["wq"]), _lin(a, p["wk"]), _lin(a, p["wv"])
    att = softmax(q @ k.transpose(0, 2, 1) / np.sqrt(d))
    o = att @ v
    h1 = h0 + _lin(o, p["wo"])
    b_, ln2 = _ln_fwd(h1, p["ln2_g"], p["ln2_b"])
    u = np.tanh(_lin(b_, p["w1"]) + p["b1"])
    h2 = h1 + _lin(u, p["w2"]) + p["b2"]
    c, lnf = _ln_fwd(h2, p["lnf_g"], p["lnf_b"])
    logits = _lin(c, p["w_out"]) + p["b_out"]
    cache = (x, a, ln1, q, k, v, att, o, b_, ln2, u, c, lnf) if keep else None
    return logits, cache


def _backward(p: ModelParams, cache, dlogits: np.ndarray) -> ModelParams:
    x, a, ln1, q, k, v, att, o, b_, ln2, u, c, lnf = cache
    d = p.dims.d
    S = x.shape[1]
    g = {}

    def mm(lhs, rhs):
        # sum over batch of lhs^T @ rhs
        return lhs.reshape(-1, lhs.shape[-1]).T @ rhs.reshape(-1, rhs.shape[-1])

    g["w_out"] = mm(c, dlogits)
    g["b_out"] = dlogits.sum(axis=(0, 1))
    dh2, g["lnf_g"], g["lnf_b"] = _ln_bwd(_lin(dlogits, p["w_out"].T), p["lnf_g"], lnf)

    g["w2"] = mm(u, dh2)
    g["b2"] = dh2.sum(axis=(0, 1))
    dz = _lin(dh2, p["w2"].T) * (1.0 - u * u)
    g["w1"] = mm(b_, dz)
    g["b1"] = dz.sum(axis=(0, 1))
    dln2, g["ln2_g"], g["ln2_b"] = _ln_bwd(_lin(dz, p["w1"].T), p["ln2_g"], ln2)
    dh1 = dh2 + dln2

    g["wo"] = mm(o, dh1)
    do = _lin(dh1, p["wo"].T)
    datt = do @ v.transpose(0, 2, 1)
    dv = att.transpose(0, 2, 1) @ do
    ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) / np.sqrt(d)
    dq = ds @ k
    dk = ds.transpose(0, 2, 1) @ q
    g["wq"], g["wk"], g["wv"] = mm(a, dq), mm(a, dk), mm(a, dv)
    da = _lin(dq, p["wq"].T) + _lin(dk, p["wk"].T) + _lin(dv, p["wv"].T)
    dln1, g["ln1_g"], g["ln1_b"] = _ln_bwd(da, p["ln1_g"], ln1)
    dh0 = dh1 + dln1

    g["tok_emb"] = np.zeros_like(p["tok_emb"])
    np.add.at(g["tok_emb"], x.ravel(), dh0.reshape(-1, d))
    g["pos_emb"] = np.zeros_like(p["pos_emb"])
    g["pos_emb"][:S] = dh0.sum(axis=0)
    return ModelParams(p.dims, g)


# ---------------------------------------------------------------- public API

def batch_logits(params, tokens: np.ndarray) -> np.ndarray:
    """Logits for a (B, S) token batch -> (B, S, V)."""
    logits, _ = _forward(_as_params(params), np.atleast_2d(tokens), keep=False)
    return logits


def forward_logits(params, state: SequenceState) -> np.ndarray:
    p = _as_params(params)
    tokens = state.tokens
    if tokens.size != p.dims.S:
        raise AtpoError("BAD_SHAPE", f"state length {tokens.size} != P+L={p.dims.S}")
    return batch_logits(p, tokens[None])[0]


def _check_masked(state: SequenceState, positions: Iterable[int]):
    for pos in positions:
        if state.completion[pos] != MASK_ID:
            raise AtpoError("POSITION_NOT_MASKED", f"completion position {pos}")


def log_probs_at(params, state: SequenceState, positions, targets) -> dict[int, float]:
    positions = [int(x) for x in positions]
    _check_masked(state, positions)
    lp = log_softmax(forward_logits(params, state))
    P = state.prompt.size
    return {pos: float(lp[P + pos, int(tgt)]) for pos, tgt in zip(positions, targets)}


class TokenObjective(NamedTuple):
    state: SequenceState
    position: int  # completion index
    target: int
    weight: float


def batch_loss_and_grad(params, tokens: np.ndarray, rows, cols, targets, weights):
    """loss = sum_i w_i * -log p(target_i | tokens[rows_i]) at sequence index cols_i.

    ``weights`` may be a callable mapping the entries' log-probabilities to weights,
    so objectives that depend on the current policy need only one forward pass.
    Returns ``(loss, grad, logp)`` where ``logp`` holds the per-entry log-probabilities.
    """
    p = _as_params(params)
    rows, cols = np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    logits, cache = _forward(p, tokens, keep=True)
    lp = log_softmax(logits[rows, cols])
    logp = lp[np.arange(rows.size), targets]
    weights = np.asarray(weights(logp) if callable(weights) else weights, dtype=np.float64)
    loss = float(-(weights * logp).sum())
    dsel = np.exp(lp) * weights[:, None]
    dsel[np.arange(rows.size), targets] -= weights
    dlogits = np.zeros_like(logits)
    np.add.at(dlogits, (rows, cols), dsel)
    return loss, _backward(p, cache, dlogits), logp


def loss_and_grad(params, objectives: list[TokenObjective]) -> tuple[float, ModelParams]:
    """Weighted negative log-likelihood over token objectives and its exact gradient."""
    p = _as_params(params)
    if not objectives:
        return 0.0, p.zeros_like()
    keys: dict[bytes, int] = {}
    seqs, rows, cols, tg, w = [], [], [], [], []
    for ob in objectives:
        _check_masked(ob.state, [ob.position])
        tok = ob.state.tokens
        key = tok.tobytes()
        if key not in keys:
            keys[key] = len(seqs)
            seqs.append(tok)
        rows.append(keys[key])
        cols.append(ob.state.prompt.size + int(ob.position))
        tg.append(ob.target)
        w.append(ob.weight)
    loss, grad, _ = batch_loss_and_grad(p, np.stack(seqs), rows, cols, tg, w)
    return loss, grad
