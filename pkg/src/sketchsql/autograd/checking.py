"""Finite-difference gradient verification."""

from __future__ import annotations

import numpy as np


def grad_check(fn, params, eps=1e-5) -> float:
    """Compare analytic gradients of fn() against central differences.

    fn must rebuild its graph from `params` on every call and return a scalar
    Tensor. Returns the maximum relative error over all parameter entries:
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    fn().backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.shape[0]):
            keep = flat[i]
            flat[i] = keep + eps
            f_plus = fn().item()
            flat[i] = keep - eps
            f_minus = fn().item()
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
