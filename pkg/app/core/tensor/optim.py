"""
Momentum SGD with cosine learning-rate decay, and Adam for architecture logits
"""
import logging
import math
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.tensor.tensor import Tensor
from app.shared.exceptions import ShapeMismatchError, ValidationError


logger = logging.getLogger("macam_workbench")


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """0.5 * lr0 * (1 + cos(pi * epoch / total_epochs))"""
    if total_epochs <= 0:
        raise ValidationError(f"cosine_lr: total_epochs must be positive, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValidationError(f"cosine_lr: epoch {epoch} outside [0, {total_epochs}]")
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * epoch / total_epochs))


class OptimizerState(BaseModel):
    """Momentum buffers and schedule position of one optimizer"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    learning_rate_initial: float = Field(..., gt=0, description="lr at epoch 0")
    momentum: float = Field(0.9, ge=0, lt=1, description="Velocity decay factor")
    epoch_count: int = Field(..., ge=1, description="Total epochs of the cosine schedule")
    epoch: int = Field(0, ge=0, description="Current epoch")
    velocity: List[np.ndarray] = Field(default_factory=list, description="One buffer per parameter")

    @property
    def learning_rate(self) -> float:
        return cosine_lr(min(self.epoch, self.epoch_count), self.epoch_count, self.learning_rate_initial)


def sgd_step(params: Sequence[Tensor], state: OptimizerState) -> None:
    """
    One momentum-SGD update: v <- m*v + grad; p <- p - lr(epoch)*v; grads cleared.

    Raises:
        ValidationError: If any parameter has no populated gradient.
    """
    if not state.velocity:
        state.velocity = [np.zeros_like(p.data) for p in params]
    if len(state.velocity) != len(params):
        raise ValidationError(
            f"Optimizer tracks {len(state.velocity)} buffers but got {len(params)} parameters"
        )

    missing = [p.name or f"param[{i}]" for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise ValidationError(f"sgd_step: missing gradient for {', '.join(missing)}")

    lr = np.float32(state.learning_rate)
    momentum = np.float32(state.momentum)
    for p, v in zip(params, state.velocity):
        if v.shape != p.data.shape:
            raise ShapeMismatchError("sgd_step", v.shape, p.data.shape)
        v *= momentum
        v += p.grad
        p.data -= lr * v
        p.grad = None


class SGD:
    """Momentum SGD over a fixed parameter list with a cosine schedule"""

    def __init__(self, params: Sequence[Tensor], lr0: float, momentum: float, total_epochs: int):
        self.params = list(params)
        self.state = OptimizerState(
            learning_rate_initial=lr0,
            momentum=momentum,
            epoch_count=total_epochs,
        )

    @property
    def lr(self) -> float:
        return self.state.learning_rate

    def set_epoch(self, epoch: int) -> None:
        self.state.epoch = epoch

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        sgd_step(self.params, self.state)


class AdamState(BaseModel):
    """First/second moment buffers of one Adam optimizer"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    learning_rate: float = Field(..., gt=0)
    beta1: float = Field(0.5, ge=0, lt=1, description="First-moment decay")
    beta2: float = Field(0.999, ge=0, lt=1, description="Second-moment decay")
    eps: float = Field(1e-8, gt=0)
    step_count: int = Field(0, ge=0)
    first_moment: List[np.ndarray] = Field(default_factory=list)
    second_moment: List[np.ndarray] = Field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """
    One bias-corrected Adam update at a constant learning rate; grads cleared.

    A consistent gradient moves each parameter by about lr per step, independent of its scale.

    Raises:
        ValidationError: If any parameter has no populated gradient.
    """
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data, dtype=np.float64) for p in params]
        state.second_moment = [np.zeros_like(p.data, dtype=np.float64) for p in params]
    if len(state.first_moment) != len(params):
        raise ValidationError(
            f"Optimizer tracks {len(state.first_moment)} buffers but got {len(params)} parameters"
        )

    missing = [p.name or f"param[{i}]" for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise ValidationError(f"adam_step: missing gradient for {', '.join(missing)}")

    state.step_count += 1
    correction1 = 1.0 - state.beta1 ** state.step_count
    correction2 = 1.0 - state.beta2 ** state.step_count
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        if m.shape != p.data.shape:
            raise ShapeMismatchError("adam_step", m.shape, p.data.shape)
        g = p.grad.astype(np.float64)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data -= update.astype(np.float32)
        p.grad = None


class Adam:
    """Adam over a fixed parameter list; used for the assignment logits"""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.5, beta2: float = 0.999):
        self.params = list(params)
        self.state = AdamState(learning_rate=lr, beta1=beta1, beta2=beta2)

    @property
    def lr(self) -> float:
        return self.state.learning_rate

    def set_epoch(self, epoch: int) -> None:
        logger.debug(f"Adam keeps a constant lr={self.lr} (epoch {epoch})")

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, self.state)
