"""Plain SGD and Adam over Parameter lists."""

from __future__ import annotations

import numpy as np

from sketchsql.errors import ContractViolation
from sketchsql.autograd.tensor import Parameter


def _check(params):
    for p in params:
        if not p.requires_grad:
            raise ContractViolation("optimizer given a tensor that does not require grad")
        if p.grad is None:
            raise ContractViolation("optimizer given a parameter with no gradient buffer")


def sgd_step(params, lr: float):
    _check(params)
    for p in params:
        p.data -= lr * p.grad


class Adam:
    """Adam with bias correction; moment state keyed by parameter identity."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        _check(self.params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adam_step(params, state: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional Adam step; `state` is a dict carried between calls."""
    _check(params)
    opt = state.get("_opt")
    if opt is None:
        opt = Adam(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state["_opt"] = opt
    opt.lr = lr
    opt.step()
    return state


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    _check(params)
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm


__all__ = ["sgd_step", "Adam", "adam_step", "clip_gradients", "Parameter"]
