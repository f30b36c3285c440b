from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` and ``grads`` are dicts keyed by parameter name; parameters may
    be tensors or arrays. A missing or ``None`` gradient counts as zero.
    """
    for name, p in params.items():
        g = grads.get(name)
        data = getattr(p, "data", p)
        if g is not None and np.shape(g) != data.shape:
            raise DimensionError(f"adam_step: gradient for {name!r} has shape {np.shape(g)}, "
                                 f"parameter has {data.shape}")
        if name in state.m and state.m[name].shape != data.shape:
            raise DimensionError(f"adam_step: state for {name!r} has shape {state.m[name].shape}, "
                                 f"parameter has {data.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        data = getattr(p, "data", p)
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(data)
            state.v[name] = np.zeros_like(data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


class Adam:
    """Adam over a named parameter dict of leaf tensors."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], epsilon=eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(self.params, grads, self.state)

    def state_arrays(self, prefix):
        out = {f"{prefix}.t": np.array(self.state.t, dtype=np.float64),
               f"{prefix}.lr": np.array(self.state.lr)}
        for k in self.state.m:
            out[f"{prefix}.m.{k}"] = self.state.m[k]
            out[f"{prefix}.v.{k}"] = self.state.v[k]
        return out

    def load_state_arrays(self, arrays, prefix):
        self.state.t = int(arrays[f"{prefix}.t"])
        self.state.lr = float(arrays[f"{prefix}.lr"])
        for k in self.params:
            if f"{prefix}.m.{k}" in arrays:
                self.state.m[k] = np.array(arrays[f"{prefix}.m.{k}"])
                self.state.v[k] = np.array(arrays[f"{prefix}.v.{k}"])
