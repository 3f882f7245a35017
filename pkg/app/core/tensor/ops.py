"""
Built-in differentiable operations
"""
from typing import Any, Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.tensor.tensor import Cotangents, Function, Tensor, as_tensor
from app.shared.exceptions import ShapeMismatchError, ValidationError


def _require_same_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(op, a.shape, b.shape)


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _require_same_shape("add", a, b)
        return a + b

    def backward(self, grad: np.ndarray) -> Cotangents:
        return grad, grad


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _require_same_shape("sub", a, b)
        return a - b

    def backward(self, grad: np.ndarray) -> Cotangents:
        return grad, -grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _require_same_shape("mul", a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray) -> Cotangents:
        return grad * self.b, grad * self.a


class Scale(Function):
    def forward(self, a: np.ndarray, factor: float = 1.0) -> np.ndarray:
        self.factor = np.float32(factor)
        return a * self.factor

    def backward(self, grad: np.ndarray) -> Cotangents:
        return (grad * self.factor,)


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeMismatchError("matmul", a.shape, b.shape)
        self.a, self.b = a, b
        return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        g = grad.astype(np.float64)
        grad_a = (g @ self.b.astype(np.float64).T).astype(np.float32)
        grad_b = (self.a.astype(np.float64).T @ g).astype(np.float32)
        return grad_a, grad_b


class Conv2d(Function):
    """Stride-1 2-D convolution (cross-correlation) with symmetric zero padding."""

    def forward(self, x: np.ndarray, w: np.ndarray, padding: int = 0) -> np.ndarray:
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1] or w.shape[2] != w.shape[3]:
            raise ShapeMismatchError("conv2d", x.shape, w.shape)
        if padding < 0:
            raise ValidationError(f"conv2d: padding must be >= 0, got {padding}")
        batch, c_in, height, width = x.shape
        c_out, _, k, _ = w.shape
        h_out, w_out = height + 2 * padding - k + 1, width + 2 * padding - k + 1
        if h_out < 1 or w_out < 1:
            raise ShapeMismatchError("conv2d", x.shape, w.shape, detail=(
                f"conv2d: kernel {w.shape} larger than padded input {x.shape}"
            ))

        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        # (B, Ci, Ho, Wo, k, k) -> (B*Ho*Wo, Ci*k*k)
        windows = sliding_window_view(xp, (k, k), axis=(2, 3))
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * h_out * w_out, c_in * k * k)
        cols = cols.astype(np.float64)
        out = cols @ w.reshape(c_out, -1).astype(np.float64).T

        self.cols, self.w, self.padding = cols, w, padding
        self.x_shape, self.padded_shape = x.shape, xp.shape
        self.out_hw = (h_out, w_out)
        return out.reshape(batch, h_out, w_out, c_out).transpose(0, 3, 1, 2).astype(np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        batch, c_in, _, _ = self.x_shape
        c_out, _, k, _ = self.w.shape
        h_out, w_out = self.out_hw

        g = grad.transpose(0, 2, 3, 1).reshape(-1, c_out).astype(np.float64)
        grad_w = (g.T @ self.cols).reshape(self.w.shape).astype(np.float32)

        dcols = (g @ self.w.reshape(c_out, -1).astype(np.float64)).reshape(batch, h_out, w_out, c_in, k, k)
        grad_xp = np.zeros(self.padded_shape, dtype=np.float64)
        for i in range(k):
            for j in range(k):
                grad_xp[:, :, i:i + h_out, j:j + w_out] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        p = self.padding
        if p:
            grad_xp = grad_xp[:, :, p:-p, p:-p]
        return grad_xp.astype(np.float32), grad_w


class AvgPool2d(Function):
    """Non-overlapping average pooling (stride equals kernel)."""

    def forward(self, x: np.ndarray, kernel: int = 2) -> np.ndarray:
        if x.ndim != 4:
            raise ValidationError(f"avgpool2d expects (B, C, H, W), got {x.shape}")
        batch, channels, height, width = x.shape
        if kernel < 1 or height % kernel or width % kernel:
            raise ValidationError(f"avgpool2d: kernel {kernel} does not tile spatial dims {(height, width)}")
        self.kernel = kernel
        blocks = x.reshape(batch, channels, height // kernel, kernel, width // kernel, kernel)
        return blocks.mean(axis=(3, 5), dtype=np.float64).astype(np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        k = self.kernel
        spread = np.repeat(np.repeat(grad, k, axis=2), k, axis=3) / np.float32(k * k)
        return (spread.astype(np.float32),)


class BiasAdd(Function):
    """Add a per-channel bias along axis 1."""

    def forward(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        if b.ndim != 1 or x.ndim < 2 or x.shape[1] != b.shape[0]:
            raise ShapeMismatchError("bias_add", x.shape, b.shape)
        self.reduce_axes = tuple(i for i in range(x.ndim) if i != 1)
        view = (1, -1) + (1,) * (x.ndim - 2)
        return x + b.reshape(view)

    def backward(self, grad: np.ndarray) -> Cotangents:
        return grad, grad.sum(axis=self.reduce_axes, dtype=np.float64).astype(np.float32)


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: tuple = ()) -> np.ndarray:
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeMismatchError("reshape", x.shape, tuple(shape))

    def backward(self, grad: np.ndarray) -> Cotangents:
        return (grad.reshape(self.in_shape),)


class Sum(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.in_shape = x.shape
        return np.asarray(x.sum(dtype=np.float64), dtype=np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        return (np.full(self.in_shape, grad, dtype=np.float32),)


class SoftmaxCrossEntropy(Function):
    """Mean softmax cross-entropy over the batch; labels are class indices."""

    def forward(self, logits: np.ndarray, labels: Any = None) -> np.ndarray:
        squeeze = logits.ndim == 1
        z = logits.reshape(1, -1) if squeeze else logits
        if z.ndim != 2:
            raise ValidationError(f"softmax_cross_entropy expects (B, C) logits, got {logits.shape}")
        y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if y.shape != (z.shape[0],):
            raise ShapeMismatchError("softmax_cross_entropy", logits.shape, y.shape)
        if np.any(y < 0) or np.any(y >= z.shape[1]):
            raise ValidationError(f"softmax_cross_entropy: labels outside [0, {z.shape[1]})")

        z64 = z.astype(np.float64)
        shifted = z64 - z64.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        rows = np.arange(z.shape[0])

        self.probs, self.labels, self.in_shape = np.exp(log_probs), y, logits.shape
        return np.asarray(-log_probs[rows, y].mean(), dtype=np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        batch = self.probs.shape[0]
        d = self.probs.copy()
        d[np.arange(batch), self.labels] -= 1.0
        d *= float(np.asarray(grad).reshape(-1)[0]) / batch
        return (d.reshape(self.in_shape).astype(np.float32),)


TensorLike = Union[Tensor, np.ndarray, float, int]


def add(a: TensorLike, b: TensorLike) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def scale(a: TensorLike, factor: float) -> Tensor:
    return Scale.apply(as_tensor(a), factor=factor)


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    return MatMul.apply(as_tensor(a), as_tensor(b))


def conv2d(x: TensorLike, w: TensorLike, padding: int = 0) -> Tensor:
    return Conv2d.apply(as_tensor(x), as_tensor(w), padding=padding)


def avgpool2d(x: TensorLike, kernel: int = 2) -> Tensor:
    return AvgPool2d.apply(as_tensor(x), kernel=kernel)


def bias_add(x: TensorLike, b: TensorLike) -> Tensor:
    return BiasAdd.apply(as_tensor(x), as_tensor(b))


def reshape(x: TensorLike, shape: tuple) -> Tensor:
    return Reshape.apply(as_tensor(x), shape=tuple(shape))


def flatten(x: TensorLike) -> Tensor:
    """Collapse every axis after the batch axis."""
    x = as_tensor(x)
    return reshape(x, (x.shape[0], -1))


def tensor_sum(x: TensorLike) -> Tensor:
    return Sum.apply(as_tensor(x))


def softmax_cross_entropy(logits: TensorLike, labels: Optional[Any]) -> Tensor:
    return SoftmaxCrossEntropy.apply(as_tensor(logits), labels=labels)
