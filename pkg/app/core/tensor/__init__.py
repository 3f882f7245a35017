"""
Minimal tensor core: reverse-mode autodiff, SGD and Adam
"""
from app.core.tensor.tensor import Function, Tensor, as_tensor, parameter
from app.core.tensor.optim import SGD, Adam, AdamState, OptimizerState, adam_step, cosine_lr, sgd_step
from app.core.tensor import ops

__all__ = [
    "Function",
    "Tensor",
    "as_tensor",
    "parameter",
    "SGD",
    "Adam",
    "AdamState",
    "adam_step",
    "OptimizerState",
    "cosine_lr",
    "sgd_step",
    "ops",
]
