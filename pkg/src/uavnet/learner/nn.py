"""Minimal multilayer perceptron with hand-written backprop, and Adam."""
from __future__ import annotations

import numpy as np


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """Tanh MLP; parameters live in a flat dict ``{"W0", "b0", "W1", ...}``.

    Weights are stored as (fan_in, fan_out) so a batch ``x`` of shape (B, in)
    maps through ``x @ W + b``.
    """

    def __init__(self, sizes):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = list(sizes)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def init(self, rng, hidden_gain=np.sqrt(2.0), out_gain=0.01) -> dict:
        params = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = out_gain if i == self.n_layers - 1 else hidden_gain
            params[f"W{i}"] = orthogonal((fan_in, fan_out), gain, rng)
            params[f"b{i}"] = np.zeros(fan_out)
        return params

    def forward(self, params, x):
        x = np.atleast_2d(x)
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input dimension {x.shape[1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ params[f"W{i}"] + params[f"b{i}"]
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def backward(self, params, acts, grad_out) -> dict:
        grads = {}
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            grads[f"W{i}"] = acts[i].T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            if i > 0:
                g = g @ params[f"W{i}"].T
        return grads


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict, max_norm: float):
    norm = global_norm(grads)
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: dict, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / corr1
            v_hat = self.v[k] / corr2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": self.t}
        for k in self.m:
            out[f"m/{k}"] = self.m[k]
            out[f"v/{k}"] = self.v[k]
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k] = np.array(state[f"m/{k}"], dtype=float)
            self.v[k] = np.array(state[f"v/{k}"], dtype=float)
