from __future__ import annotations

import numpy as np


class Adam:
    """Adam over a dict of named arrays, updated in place.

    `rows` restricts an update to a subset of leading-axis rows, which is how
    embedding tables get touched only where a batch used them.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict, rows: dict | None = None):
        rows = rows or {}
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
                self.t[name] = np.zeros(p.shape[:1] if name in rows else (), dtype=np.int64)
            if self.lr == 0:
                continue
            idx = rows.get(name)
            if idx is None:
                self._update(p, g, self.m[name], self.v[name], name, Ellipsis)
            else:
                self._update(p, g[idx], self.m[name], self.v[name], name, idx)

    def _update(self, p, g, m, v, name, idx):
        t = self.t[name]
        if idx is Ellipsis:
            t += 1
            step = t
        else:
            t[idx] += 1
            step = t[idx].reshape((-1,) + (1,) * (p.ndim - 1))
        b1, b2 = self.beta1, self.beta2
        m[idx] = b1 * m[idx] + (1 - b1) * g
        v[idx] = b2 * v[idx] + (1 - b2) * g * g
        m_hat = m[idx] / (1 - b1 ** step)
        v_hat = v[idx] / (1 - b2 ** step)
        p[idx] -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)
