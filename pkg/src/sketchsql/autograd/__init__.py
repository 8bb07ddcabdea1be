"""Minimal reverse-mode autodiff used by the parser network."""

from sketchsql.autograd.tensor import Parameter, Tensor, as_tensor
from sketchsql.autograd import ops
from sketchsql.autograd.optim import Adam, adam_step, clip_gradients, sgd_step
from sketchsql.autograd.checking import grad_check

__all__ = [
    "Tensor",
    "Parameter",
    "as_tensor",
    "ops",
    "Adam",
    "adam_step",
    "sgd_step",
    "clip_gradients",
    "grad_check",
]
