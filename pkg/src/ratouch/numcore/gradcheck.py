from __future__ import annotations

import numpy as np

from .autograd import backward


def relative_error(analytic, numeric, floor=1e-5):
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps structurally-zero gradients (e.g. key biases, which
    softmax is invariant to) from dividing rounding noise by ~0.
    """
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def check_gradients(loss_fn, params, h=1e-5, max_entries=None, seed=0):
    """Compare analytic gradients of ``loss_fn()`` with central differences.

    ``params`` is a ParamStore or a sequence of them (e.g. model weights plus
    a store of input leaves). Every trainable tensor is probed; with ``max_entries`` set,
    only that many seeded-random coordinates per tensor. Returns the worst
    relative error and a per-parameter breakdown.
    """
    stores = list(params) if isinstance(params, (list, tuple)) else [params]
    tensors = [(f"{i}:{k}" if len(stores) > 1 else k, t) for i, st in enumerate(stores) for k, t in st.items()]
    for st in stores:
        st.zero_grad()
    backward(loss_fn())
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy() for k, t in tensors}
    rng = np.random.default_rng(seed)
    worst, report = 0.0, {}
    for name, p in tensors:
        if not p.requires_grad:
            continue
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric[j] = (up - down) / (2 * h)
        err = float(relative_error(analytic[name].reshape(-1)[idx], numeric).max(initial=0.0))
        report[name] = err
        worst = max(worst, err)
    for st in stores:
        st.zero_grad()
    return worst, report
