"""Activations Feature - Differentiable activation operators"""
from typing import Optional, Tuple, Union

import numpy as np

from app.core.tensor import Function, Tensor
from app.core.tensor.tensor import Cotangents, as_tensor, custom_op
from app.features.activations import kernels
from app.features.activations.models import AlphaMode, AlphaParam, AnalogActConfig, DigitalActConfig
from app.shared.exceptions import ShapeMismatchError, ValidationError


AlphaLike = Union[AlphaParam, Tensor]


def _alpha_tensor(alpha: AlphaLike) -> Tuple[Tensor, float]:
    tensor = alpha.tensor if isinstance(alpha, AlphaParam) else as_tensor(alpha)
    value = float(tensor.data.reshape(-1)[0])
    if value <= 0:
        raise ValidationError(f"alpha must be positive, got {value}")
    return tensor, value


def _alpha_cotangent(tensor: Tensor, grad_alpha: Optional[float]) -> Optional[np.ndarray]:
    if grad_alpha is None:
        return None
    return np.full(tensor.shape, grad_alpha, dtype=np.float32)


def analog_act_backward(
    x: Union[Tensor, np.ndarray],
    alpha: Union[AlphaLike, float],
    cfg: AnalogActConfig,
    cotangent: np.ndarray,
    alpha_mode: AlphaMode = AlphaMode.MACAM,
) -> Tuple[np.ndarray, Optional[float]]:
    """
    Gradients of the fused activation.

    Returns:
        (grad_x, grad_alpha); grad_x is straight-through on [0, alpha), grad_alpha
        is reduced over every element sharing alpha (None when alpha is fixed).
    """
    x_data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
    a = float(alpha) if isinstance(alpha, (int, float)) else _alpha_tensor(alpha)[1]
    grad_x, grad_alpha = kernels.analog_backward(x_data, a, cfg.codebook, cotangent)
    if alpha_mode is AlphaMode.PACT:
        grad_alpha = kernels.reduce_alpha_grad(cotangent, kernels.pact_alpha_partials(x_data, a))
    elif alpha_mode is AlphaMode.FIXED:
        grad_alpha = None
    return grad_x, grad_alpha


def analog_act_forward(
    x: Tensor,
    alpha: AlphaLike,
    cfg: AnalogActConfig,
    rng: Optional[np.random.Generator] = None,
    alpha_mode: AlphaMode = AlphaMode.MACAM,
) -> Tensor:
    """Fused MACAM ReLU-alpha; device noise (if configured) is drawn from rng in forward only."""
    alpha_t, a = _alpha_tensor(alpha)
    x_data = x.data

    def forward(x_arr: np.ndarray, _alpha_arr: np.ndarray) -> np.ndarray:
        return kernels.analog_forward(x_arr, a, cfg.codebook, cfg.variation, rng)

    def backward(grad: np.ndarray) -> Cotangents:
        grad_x, grad_alpha = analog_act_backward(x_data, a, cfg, grad, alpha_mode)
        return grad_x, _alpha_cotangent(alpha_t, grad_alpha)

    return custom_op(forward, backward, x, alpha_t)


def digital_act(x: Tensor, alpha: AlphaLike, cfg: DigitalActConfig, alpha_mode: AlphaMode = AlphaMode.MACAM) -> Tensor:
    """ADC-quantized ReLU-alpha with PACT gradients."""
    alpha_t, a = _alpha_tensor(alpha)
    x_data = x.data

    def forward(x_arr: np.ndarray, _alpha_arr: np.ndarray) -> np.ndarray:
        return kernels.digital_forward(x_arr, a, cfg.bits)

    def backward(grad: np.ndarray) -> Cotangents:
        grad_x, grad_alpha = kernels.digital_backward(x_data, a, grad)
        return grad_x, _alpha_cotangent(alpha_t, None if alpha_mode is AlphaMode.FIXED else grad_alpha)

    return custom_op(forward, backward, x, alpha_t)


def routed_act(
    x: Tensor,
    alpha: AlphaLike,
    analog_cfg: AnalogActConfig,
    digital_cfg: DigitalActConfig,
    paths: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    alpha_mode: AlphaMode = AlphaMode.MACAM,
) -> Tensor:
    """Hard-assigned activation: each channel (axis 1) runs exactly one datapath."""
    alpha_t, a = _alpha_tensor(alpha)
    if x.ndim < 2 or paths.shape != (x.shape[1],):
        raise ShapeMismatchError("routed_act", x.shape, paths.shape)
    analog = paths == 0
    x_data = x.data

    def forward(x_arr: np.ndarray, _alpha_arr: np.ndarray) -> np.ndarray:
        out = np.empty_like(x_arr)
        if analog.any():
            out[:, analog] = kernels.analog_forward(x_arr[:, analog], a, analog_cfg.codebook, analog_cfg.variation, rng)
        if (~analog).any():
            out[:, ~analog] = kernels.digital_forward(x_arr[:, ~analog], a, digital_cfg.bits)
        return out

    def backward(grad: np.ndarray) -> Cotangents:
        grad_x = np.zeros_like(x_data)
        grad_alpha = 0.0
        if analog.any():
            gx, ga = analog_act_backward(x_data[:, analog], a, analog_cfg, grad[:, analog], alpha_mode)
            grad_x[:, analog] = gx
            grad_alpha += ga or 0.0
        if (~analog).any():
            gx, ga = kernels.digital_backward(x_data[:, ~analog], a, grad[:, ~analog])
            grad_x[:, ~analog] = gx
            grad_alpha += ga
        if alpha_mode is AlphaMode.FIXED:
            return grad_x, None
        return grad_x, _alpha_cotangent(alpha_t, grad_alpha)

    return custom_op(forward, backward, x, alpha_t)


class GumbelSoftmax(Function):
    """Reparameterized relaxed categorical sample over the last axis."""

    def forward(
        self,
        theta: np.ndarray,
        tau: float = 1.0,
        rng: Optional[np.random.Generator] = None,
        noise: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        if noise is None:
            noise = kernels.gumbel_noise(theta.shape, rng if rng is not None else np.random.default_rng())
        self.noise = noise
        self.tau = float(tau)
        self.y = kernels.softmax((theta.astype(np.float64) + noise) / self.tau)
        return self.y.astype(np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        g = grad.astype(np.float64)
        inner = (self.y * g).sum(axis=-1, keepdims=True)
        return ((self.y * (g - inner) / self.tau).astype(np.float32),)


def gumbel_softmax(
    theta: Tensor,
    tau: float,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Soft path weights a = softmax((theta + g) / tau), g ~ Gumbel(0, 1).

    Raises:
        ValidationError: If tau <= 0.
    """
    if tau <= 0:
        raise ValidationError(f"gumbel_softmax: tau must be positive, got {tau}")
    if noise is not None and noise.shape != theta.shape:
        raise ShapeMismatchError("gumbel_softmax", theta.shape, noise.shape)
    return GumbelSoftmax.apply(theta, tau=tau, rng=rng, noise=noise)


class ChannelMix(Function):
    """out[:, c] = a[c, 0] * f1[:, c] + a[c, 1] * f2[:, c]"""

    def forward(self, f1: np.ndarray, f2: np.ndarray, a: np.ndarray) -> np.ndarray:
        if f1.shape != f2.shape:
            raise ShapeMismatchError("channel_mix", f1.shape, f2.shape)
        if f1.ndim < 2 or a.shape != (f1.shape[1], 2):
            raise ShapeMismatchError("channel_mix", f1.shape, a.shape)
        view = (1, -1) + (1,) * (f1.ndim - 2)
        self.w1 = a[:, 0].astype(np.float64).reshape(view)
        self.w2 = a[:, 1].astype(np.float64).reshape(view)
        self.f1, self.f2 = f1, f2
        self.reduce_axes = tuple(i for i in range(f1.ndim) if i != 1)
        return (self.w1 * f1 + self.w2 * f2).astype(np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        g = grad.astype(np.float64)
        grad_a = np.stack([
            (g * self.f1).sum(axis=self.reduce_axes),
            (g * self.f2).sum(axis=self.reduce_axes),
        ], axis=1)
        return (
            (g * self.w1).astype(np.float32),
            (g * self.w2).astype(np.float32),
            grad_a.astype(np.float32),
        )


def channel_mix(f1: Tensor, f2: Tensor, a: Union[Tensor, np.ndarray]) -> Tensor:
    return ChannelMix.apply(f1, f2, as_tensor(a))
