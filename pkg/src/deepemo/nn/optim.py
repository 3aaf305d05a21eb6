"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class AdamState:
    lr: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """Update ``params`` in place from ``grads``; returns ``(params, state)``.

    Moments are kept in float64 whatever the parameter dtype.
    """
    for name, p in params.items():
        if name not in grads or grads[name].shape != p.shape:
            got = grads[name].shape if name in grads else None
            raise ShapeMismatch(f"gradient for {name!r} has shape {got}, parameter {p.shape}")
        if name in state.m and state.m[name].shape != p.shape:
            raise ShapeMismatch(f"Adam state for {name!r} has shape {state.m[name].shape}, parameter {p.shape}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name].astype(np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= update.astype(p.dtype)
    return params, state


class Adam:
    """Binds an :class:`AdamState` to a fixed set of named parameters of a module."""

    def __init__(self, module, lr=3e-5, betas=(0.9, 0.999), eps=1e-8, names=None):
        self.module = module
        self.names = names
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def _select(self, pairs):
        return {k: v for k, v in pairs if self.names is None or k in self.names}

    def step(self):
        adam_step(self._select(self.module.named_parameters()),
                  self._select(self.module.named_grads()), self.state)

    def zero_grad(self):
        self.module.zero_grad()
