"""Dense feed-forward networks with exact backprop, Adam and Polyak updates.

Weights are stored as (fan_in, fan_out) matrices so a batch of row vectors
maps as ``x @ W + b``.  Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1
ACTIVATIONS = ("sigmoid", "identity")


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Mlp:
    """ReLU hidden layers and a sigmoid or identity output layer."""

    def __init__(self, layer_sizes, output="identity", rng=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}")
        if output not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {output!r}")
        self.layer_sizes = sizes
        self.output = output
        self.weights = []
        self.biases = []
        n_layers = len(sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            elif k < n_layers - 1:
                lim = np.sqrt(6.0 / fan_in)  # He-uniform
                w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            else:
                lim = np.sqrt(6.0 / (fan_in + fan_out))  # Xavier-uniform
                w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self):
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are shared, not copied."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    def copy(self):
        net = Mlp.__new__(Mlp)
        net.layer_sizes = list(self.layer_sizes)
        net.output = self.output
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def same_architecture(self, other):
        return self.layer_sizes == other.layer_sizes and self.output == other.output

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.n_inputs}")
        return x

    def forward_cache(self, x):
        """Forward pass returning (output, pre-output logits, per-layer inputs)."""
        h = self._check(x)
        inputs = []
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            h = np.maximum(z, 0.0) if k < last else z
        y = _sigmoid(h) if self.output == "sigmoid" else h
        return y, h, inputs

    def forward(self, x):
        return self.forward_cache(x)[0]

    def logits(self, x):
        """Output layer pre-activation."""
        return self.forward_cache(x)[1]

    def backward(self, x, dy):
        """Gradients of sum(dy * forward(x)) w.r.t. parameters and input.

        Returns (grads aligned with ``params``, dL/dx).
        """
        y, _, inputs = self.forward_cache(x)
        dy = np.asarray(dy, dtype=float)
        if dy.shape != y.shape:
            raise ValueError(f"upstream gradient shape {dy.shape} != output shape {y.shape}")
        g = dy * y * (1.0 - y) if self.output == "sigmoid" else dy
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            h = inputs[k]
            if h.ndim == 1:
                grads[2 * k] = np.outer(h, g)
                grads[2 * k + 1] = g.copy()
            else:
                grads[2 * k] = h.T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g = g * (h > 0)  # h is the ReLU output of the layer below
        return grads, g


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state, lr):
    """One in-place Adam descent step on ``params``; returns (params, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def soft_update(target, source, tau):
    """target <- (1 - tau) * target + tau * source, in place."""
    if not target.same_architecture(source):
        raise ValueError("soft_update needs identical architectures")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    for pt, ps in zip(target.params, source.params):
        pt *= 1.0 - tau
        pt += tau * ps
    return target


@dataclass
class Bundle:
    """Named networks and optimizer states persisted together."""

    nets: dict = field(default_factory=dict)
    optims: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def save_bundle(path, bundle):
    arrays = {"__version__": np.array(CHECKPOINT_VERSION)}
    for name, net in bundle.nets.items():
        arrays[f"{name}/sizes"] = np.array(net.layer_sizes)
        arrays[f"{name}/output"] = np.array(net.output)
        for k, p in enumerate(net.params):
            arrays[f"{name}/p{k}"] = p
    for name, st in bundle.optims.items():
        arrays[f"{name}/adam"] = np.array([st.step, st.beta1, st.beta2, st.eps])
        for k, (m, v) in enumerate(zip(st.m, st.v)):
            arrays[f"{name}/m{k}"] = m
            arrays[f"{name}/v{k}"] = v
    for key, val in bundle.meta.items():
        arrays[f"meta/{key}"] = np.asarray(val)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bundle(path):
    with np.load(path) as z:
        data = {k: z[k] for k in z.files}
    version = int(data.pop("__version__"))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version {version} is not supported")
    bundle = Bundle()
    for key in [k for k in data if k.endswith("/sizes")]:
        name = key[: -len("/sizes")]
        net = Mlp(data[key].tolist(), str(data[f"{name}/output"]))
        for k, p in enumerate(net.params):
            p[...] = data[f"{name}/p{k}"]
        bundle.nets[name] = net
    for key in [k for k in data if k.endswith("/adam")]:
        name = key[: -len("/adam")]
        step, b1, b2, eps = data[key]
        n = sum(1 for k in data if k.startswith(f"{name}/m"))
        st = AdamState([data[f"{name}/m{k}"] for k in range(n)], [data[f"{name}/v{k}"] for k in range(n)], int(step), b1, b2, eps)
        bundle.optims[name] = st
    for key in [k for k in data if k.startswith("meta/")]:
        val = data[key]
        bundle.meta[key[5:]] = val.item() if val.ndim == 0 else val
    return bundle
