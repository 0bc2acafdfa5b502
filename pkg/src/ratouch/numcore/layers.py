"""Parameter initialisers, affine maps and multi-head attention."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DimensionError
from . import autograd as ag


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_linear(store, name, n_in, n_out, rng, zero=False):
    """Register ``name.w`` (n_in x n_out) and ``name.b`` (n_out)."""
    if zero:
        w, b = np.zeros((n_in, n_out)), np.zeros(n_out)
    else:
        w, b = uniform_init(rng, n_in, (n_in, n_out)), uniform_init(rng, n_in, (n_out,))
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", b)


def linear(x, params, name):
    return ag.matmul(x, params[f"{name}.w"]) + params[f"{name}.b"]


def add_attention(store, name, dim, rng, zero_out=True):
    """Query/key/value/output projections for one attention block.

    The output projection starts at zero by default so a residual block
    built around it is the identity at initialisation.
    """
    for proj in ("q", "k", "v"):
        add_linear(store, f"{name}.{proj}", dim, dim, rng)
    add_linear(store, f"{name}.o", dim, dim, rng, zero=zero_out)


def multihead_attention(q, k, v, params, heads, name):
    """Scaled dot-product attention split over ``heads``.

    q: (..., Lq, D); k, v: (..., Lk, D). No positional encoding is applied,
    so the key/value tokens behave as an unordered set.
    """
    q, k, v = ag.tensor(q), ag.tensor(k), ag.tensor(v)
    dim = q.shape[-1]
    if k.shape[-1] != dim or v.shape[-1] != dim:
        raise DimensionError(f"q/k/v model dims differ: {q.shape}, {k.shape}, {v.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError("keys and values must have the same length")
    if heads < 1 or dim % heads:
        raise ConfigError(f"model dim {dim} is not divisible by {heads} heads")
    hd = dim // heads
    squeeze = q.ndim == 2
    if squeeze:
        q, k, v = (t.reshape((1,) + t.shape) for t in (q, k, v))
    batch = q.shape[0]
    lq, lk = q.shape[1], k.shape[1]

    def split(x, length):
        # (B, L, D) -> (B, H, L, hd)
        return x.reshape(batch, length, heads, hd).transpose(0, 2, 1, 3)

    qh = split(linear(q, params, f"{name}.q"), lq)
    kh = split(linear(k, params, f"{name}.k"), lk)
    vh = split(linear(v, params, f"{name}.v"), lk)
    scores = ag.matmul(qh, kh.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(hd))
    weights = ag.softmax(scores, axis=-1)
    ctx = ag.matmul(weights, vh).transpose(0, 2, 1, 3).reshape(batch, lq, dim)
    out = linear(ctx, params, f"{name}.o")
    if squeeze:
        out = out.reshape(lq, dim)
    return out


def attention_weights(q, k, params, heads, name):
    """Per-head attention weights (B, H, Lq, Lk) as plain arrays, for inspection."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.ndim == 2:
        q, k = q[None], k[None]
    dim = q.shape[-1]
    hd = dim // heads
    p = params

    def proj(x, n):
        y = x @ p[f"{name}.{n}.w"].data + p[f"{name}.{n}.b"].data
        return y.reshape(x.shape[0], x.shape[1], heads, hd).transpose(0, 2, 1, 3)

    s = proj(q, "q") @ proj(k, "k").transpose(0, 1, 3, 2) / math.sqrt(hd)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)
