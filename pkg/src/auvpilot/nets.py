"""Minimal fully-connected networks with hand-written backprop and Adam.

Everything is plain numpy so the whole training stack stays dependency-free
and deterministic. Parameters default to float32 (the checkpoint precision);
tests instantiate float64 copies when checking gradients against finite
differences.
"""

from __future__ import annotations

import numpy as np


def elu(z):
    # max(z, 0) + expm1(min(z, 0)); branch-free and overflow-safe
    return np.maximum(z, 0.0) + np.expm1(np.minimum(z, 0.0))


def elu_grad(z, activated):
    # derivative is 1 for z > 0 and elu(z) + 1 otherwise; elu(z) < 0 there
    return 1.0 + np.minimum(activated, 0.0)


class Mlp:
    """Feed-forward network with ELU hidden activations and a linear head."""

    def __init__(self, sizes, rng: np.random.Generator, dtype=np.float32):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)).astype(self.dtype))
            self.biases.append(rng.uniform(-lim, lim, fan_out).astype(self.dtype))

    def forward(self, x, cache=None):
        """Forward pass; pass a list as ``cache`` to record activations for backward."""
        h = x
        if cache is not None:
            cache.append(h)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < len(self.weights) - 1:
                h = elu(z)
                if cache is not None:
                    cache.append(z)
                    cache.append(h)
            else:
                h = z
        return h

    def backward(self, cache, dout):
        """Gradients of all weights/biases given d(loss)/d(output).

        ``cache`` must come from a forward call on the same inputs. Returns
        (weight_grads, bias_grads).
        """
        dw = [None] * len(self.weights)
        db = [None] * len(self.biases)
        d = dout
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[2 * i]
            dw[i] = h_in.T @ d
            db[i] = d.sum(axis=0)
            if i > 0:
                d = d @ self.weights[i].T
                z = cache[2 * i - 1]
                h_act = cache[2 * i]
                d = d * elu_grad(z, h_act)
        return dw, db


class ActorCritic:
    """Separate actor and critic MLPs plus a state-independent action log-std."""

    def __init__(self, obs_dim=16, act_dim=6, hidden=(128, 128), rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.dtype = np.dtype(dtype)
        self.actor = Mlp([obs_dim, *hidden, act_dim], rng, dtype)
        self.critic = Mlp([obs_dim, *hidden, 1], rng, dtype)
        self.log_std = np.zeros(act_dim, dtype=self.dtype)

    def named_parameters(self):
        out = []
        for tag, net in (("actor", self.actor), ("critic", self.critic)):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                out.append((f"{tag}.w{i}", w))
                out.append((f"{tag}.b{i}", b))
        out.append(("log_std", self.log_std))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def action_mean(self, obs):
        """Deterministic policy output: tanh-squashed actor head, in (-1, 1)."""
        return np.tanh(self.actor.forward(obs))

    def value(self, obs):
        return self.critic.forward(obs)[..., 0]


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale gradients in place to a maximum global L2 norm; returns the norm."""
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads:
            g *= scale
    return total
