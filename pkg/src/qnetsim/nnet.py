"""Minimal dense network with explicit backprop, plus Adam.

Everything works on flat parameter vectors so analytic gradients can be
checked coordinate-by-coordinate against finite differences.
"""

from __future__ import annotations

import math

import numpy as np


class MLP:
    """Fully-connected net, tanh hidden layers, linear output."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            scale = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = flat[pos : pos + b.size]
            pos += b.size

    def forward(self, x: np.ndarray):
        """Returns (output, cache) for a (batch, in) or (in,) input."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else np.tanh(z)
            activations.append(h)
        out = activations[-1]
        return (out[0] if squeeze else out), activations

    def backward(self, activations, d_out: np.ndarray) -> np.ndarray:
        """Gradient of sum(d_out * output) w.r.t. the flat parameter vector."""
        d_out = np.asarray(d_out, dtype=float)
        if d_out.ndim == 1:
            d_out = d_out[None, :]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = d_out
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = activations[k]
            grads_w[k] = h_in.T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                # activations[k] is tanh output of layer k-1's preactivation
                delta = (delta @ self.weights[k].T) * (1.0 - activations[k] ** 2)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts)


class Adam:
    """Adam on a flat parameter vector."""

    def __init__(self, dim: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float | None = None) -> np.ndarray:
        self.t += 1
        lr = self.lr if lr is None else lr
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def warmup_cosine_lr(step: int, total_steps: int, peak: float,
                     floor: float = 1e-5, warmup_frac: float = 0.03) -> float:
    """Linear warmup to ``peak`` then cosine decay to ``floor``."""
    if total_steps <= 1:
        return peak
    warmup = max(1, int(round(warmup_frac * total_steps)))
    if step < warmup:
        return peak * (step + 1) / warmup
    frac = (step - warmup) / max(1, total_steps - warmup)
    frac = min(max(frac, 0.0), 1.0)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * frac))
