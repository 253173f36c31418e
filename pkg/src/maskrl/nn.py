"""Tiny tanh MLP with hand-written backprop, plus Adam.

Networks here are 2x64; at that size numpy beats a deep-learning framework
on per-call overhead by a wide margin, and single-observation forward passes
dominate rollout time.
"""

from __future__ import annotations

import numpy as np


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """``x -> tanh(x W1 + b1) -> tanh(. W2 + b2) -> . W3 + b3``."""

    def __init__(self, sizes, rng: np.random.Generator, hidden_gain=np.sqrt(2.0), out_gain=1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.params: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = out_gain if k == n_layers - 1 else hidden_gain
            self.params.append(orthogonal((fan_in, fan_out), gain, rng))
            self.params.append(np.zeros(fan_out))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        h = x
        for k in range(0, len(p) - 2, 2):
            h = np.tanh(h @ p[k] + p[k + 1])
        return h @ p[-2] + p[-1]

    def forward(self, x: np.ndarray):
        """Batch forward keeping activations for :meth:`backward`."""
        p = self.params
        acts = [x]
        h = x
        for k in range(0, len(p) - 2, 2):
            h = np.tanh(h @ p[k] + p[k + 1])
            acts.append(h)
        return h @ p[-2] + p[-1], acts

    def backward(self, acts, dout: np.ndarray) -> list[np.ndarray]:
        p = self.params
        grads = [None] * len(p)
        delta = dout
        for k in range(len(p) - 2, -1, -2):
            a_in = acts[k // 2]
            grads[k] = a_in.T @ delta
            grads[k + 1] = delta.sum(axis=0)
            if k:
                delta = (delta @ p[k].T) * (1.0 - a_in * a_in)
        return grads

    def state(self) -> list[np.ndarray]:
        return [q.copy() for q in self.params]

    def load(self, params) -> None:
        if len(params) != len(self.params) or any(a.shape != b.shape for a, b in zip(params, self.params)):
            raise ValueError("parameter shapes do not match this network")
        for dst, src in zip(self.params, params):
            dst[...] = src


def clip_by_global_norm(grad: np.ndarray, max_norm: float | None) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(grad @ grad))
    if max_norm is not None and norm > max_norm:
        grad = grad * (max_norm / (norm + 1e-6))
    return grad, norm


def flatten_into(params: list[np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Copy ``params`` into one flat buffer; return it and reshaped views."""
    flat = np.concatenate([p.ravel() for p in params])
    views, offset = [], 0
    for p in params:
        views.append(flat[offset:offset + p.size].reshape(p.shape))
        offset += p.size
    return flat, views


class Adam:
    """Adam on a single flat parameter vector (updated in place)."""

    def __init__(self, size: int, lr=3e-4, betas=(0.9, 0.999), eps=1e-5):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        b1, b2 = self.betas
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * grad * grad
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        flat -= (self.lr / c1) * self.m / (np.sqrt(self.v / c2) + self.eps)
