from __future__ import annotations

import hashlib

import numpy as np

from ..errors import ConfigError
from .autograd import Tensor


class ParamStore:
    """Named trainable tensors plus optimizer state.

    Single-writer: only one thread of control may step or mutate a store.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.step = 0
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def add(self, name, value, trainable=True):
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def arrays(self):
        return {k: t.data for k, t in self._params.items()}

    def grads(self):
        """Gradients keyed by name; untouched parameters report zeros of the same shape."""
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self._params.items()
        }

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def set_trainable(self, flag):
        for t in self._params.values():
            t.requires_grad = flag
            if not flag:
                t.grad = None

    def load(self, arrays):
        for name, arr in arrays.items():
            if name not in self._params:
                raise ConfigError(f"unknown parameter {name!r} in checkpoint")
            target = self._params[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != target.shape:
                raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {target.shape}")
            target.data = arr.copy()
        missing = set(self._params) - set(arrays)
        if missing:
            raise ConfigError(f"checkpoint missing parameters: {sorted(missing)}")

    def checksum(self):
        h = hashlib.sha256()
        for name in sorted(self._params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self._params[name].data).tobytes())
        return h.hexdigest()

    def copy(self):
        other = ParamStore()
        for name, t in self._params.items():
            other.add(name, t.data.copy(), trainable=t.requires_grad)
        return other
