"""Activations Feature - Forward and gradient rules on raw arrays"""
import math
from typing import Optional, Tuple

import numpy as np

from app.features.macam.models import Codebook, VariationProfile
from app.features.macam.service import encode_array, project_array


def _scaled_input(x: np.ndarray, alpha: float, c: float) -> np.ndarray:
    """Clip(c*x/alpha, [0, c]) in float64"""
    return np.clip(c * x.astype(np.float64) / alpha, 0.0, c)


def analog_forward(
    x: np.ndarray,
    alpha: float,
    cb: Codebook,
    variation: Optional[VariationProfile] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Fused MACAM ReLU-alpha: (alpha/c) * Pi_Q(clip(c*x/alpha, [0, c])), zero for x < 0.

    With a variation profile and a random stream, per-interval Gaussian noise is
    added to the scaled input before projection.
    """
    c = cb.c
    scaled = _scaled_input(x, alpha, c)
    noisy = variation is not None and rng is not None and variation.sigma_rel > 0
    if noisy:
        sigma = np.asarray(variation.per_interval_input_sigma, dtype=np.float64)[encode_array(scaled, cb)]
        scaled = np.clip(scaled + rng.standard_normal(scaled.shape) * sigma, 0.0, c)

    out = alpha * project_array(scaled, cb) / c
    if not noisy:
        out = np.where(x >= alpha, alpha, out)
    return np.where(x < 0, 0.0, out).astype(np.float32)


def analog_alpha_partials(x: np.ndarray, alpha: float, cb: Codebook) -> np.ndarray:
    """
    Per-element d(out)/d(alpha) of the fused activation:
    0 for x < 0; Pi_Q(clip(c*x/alpha))/c - x/alpha for 0 <= x < alpha; 1 for x >= alpha.
    """
    c = cb.c
    x64 = x.astype(np.float64)
    middle = project_array(_scaled_input(x, alpha, c), cb) / c - x64 / alpha
    return np.where(x64 < 0, 0.0, np.where(x64 >= alpha, 1.0, middle))


def pact_alpha_partials(x: np.ndarray, alpha: float) -> np.ndarray:
    """PACT rule: only saturated elements (x >= alpha) contribute, with slope 1."""
    return (x.astype(np.float64) >= alpha).astype(np.float64)


def pass_through_mask(x: np.ndarray, alpha: float) -> np.ndarray:
    """Straight-through input gradient: 1 on [0, alpha), 0 elsewhere."""
    return ((x >= 0) & (x < alpha)).astype(np.float32)


def reduce_alpha_grad(cotangent: np.ndarray, partials: np.ndarray) -> float:
    """Exactly rounded sum of cotangent * partial over all elements sharing alpha."""
    products = cotangent.astype(np.float64).reshape(-1) * partials.reshape(-1)
    return math.fsum(products.tolist())


def analog_backward(
    x: np.ndarray,
    alpha: float,
    cb: Codebook,
    cotangent: np.ndarray,
) -> Tuple[np.ndarray, float]:
    """(grad_x, grad_alpha) of the fused activation."""
    grad_x = (cotangent * pass_through_mask(x, alpha)).astype(np.float32)
    return grad_x, reduce_alpha_grad(cotangent, analog_alpha_partials(x, alpha, cb))


def digital_forward(x: np.ndarray, alpha: float, bits: int) -> np.ndarray:
    """ReLU-alpha followed by a uniform 2^bits-level quantizer over [0, alpha]."""
    levels = 2 ** bits - 1
    codes = np.rint(np.clip(x.astype(np.float64), 0.0, alpha) * levels / alpha)
    return (alpha * codes / levels).astype(np.float32)


def digital_backward(x: np.ndarray, alpha: float, cotangent: np.ndarray) -> Tuple[np.ndarray, float]:
    """PACT-style (grad_x, grad_alpha) of the digital path."""
    grad_x = (cotangent * pass_through_mask(x, alpha)).astype(np.float32)
    return grad_x, reduce_alpha_grad(cotangent, pact_alpha_partials(x, alpha))


def gumbel_noise(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Gumbel(0, 1) samples"""
    u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=shape)
    return -np.log(-np.log(u))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits.astype(np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
