"""
Dense tensor with reverse-mode automatic differentiation
"""
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.shared.exceptions import GraphError, ValidationError


logger = logging.getLogger("macam_workbench")

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
Cotangents = Tuple[Optional[np.ndarray], ...]
BackwardHook = Callable[["Function", np.ndarray], Cotangents]


class Function:
    """
    Base class for differentiable operations.

    Every application of a Function creates one graph node. Subclasses implement
    `forward` (on raw arrays) and `backward` (output cotangent -> one cotangent per
    input, None for non-differentiable inputs). A backward hook registered on the
    node instance replaces `backward` for that node only.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.hook: Optional[BackwardHook] = None
        self.consumed = False

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Cotangents:
        raise NotImplementedError("Backward pass not implemented for this function")

    def register_hook(self, hook: BackwardHook) -> "Function":
        """Override the chain-rule segment of this node with a custom rule."""
        self.hook = hook
        return self

    def vjp(self, grad: np.ndarray) -> Cotangents:
        grads = self.hook(self, grad) if self.hook is not None else self.backward(grad)
        if not isinstance(grads, tuple):
            grads = (grads,)
        if len(grads) != len(self.inputs):
            raise GraphError(
                f"{type(self).__name__}.backward returned {len(grads)} cotangents "
                f"for {len(self.inputs)} inputs"
            )
        return grads

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """Run the forward pass and record the node when any input needs grads."""
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)


class Tensor:
    """
    Dense float32 array participating in reverse-mode differentiation.

    Leaf tensors (no creator) with requires_grad=True receive `.grad` after
    `backward`; intermediate tensors only when `retain_grad()` was called.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
    ):
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self.requires_grad = requires_grad
        self.creator = creator
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._retain = False

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat view of the dense values"""
        return self.data.reshape(-1)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValidationError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def retain_grad(self) -> "Tensor":
        self._retain = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = grad.astype(np.float32, copy=False)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def _topological_order(self) -> List["Tensor"]:
        """Reverse-postorder DFS; deterministic for a fixed graph."""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.creator is not None:
                for parent in reversed(tensor.creator.inputs):
                    if id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """
        Propagate cotangents from this tensor to every leaf that requires grads.

        Raises:
            ValidationError: If no seed is given for a non-scalar tensor.
            GraphError: If the graph was already consumed by an earlier backward.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValidationError(f"backward() needs a scalar loss, got shape {self.shape}")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=np.float32)
            if seed.shape != self.shape:
                raise ValidationError(f"Seed shape {seed.shape} does not match tensor shape {self.shape}")

        if not self.requires_grad:
            raise GraphError("backward() called on a tensor that does not require grad")

        order = self._topological_order()
        for tensor in order:
            if tensor.creator is not None and tensor.creator.consumed:
                raise GraphError("backward() called twice on the same graph; re-run forward first")

        pending: Dict[int, np.ndarray] = {id(self): seed}
        for tensor in reversed(order):
            g = pending.pop(id(tensor), None)
            if g is None:
                continue
            if tensor.creator is None:
                if tensor.requires_grad:
                    tensor._accumulate(g)
                continue
            if tensor._retain:
                tensor._accumulate(g)

            fn = tensor.creator
            for parent, parent_grad in zip(fn.inputs, fn.vjp(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise GraphError(
                        f"{type(fn).__name__} produced cotangent of shape {parent_grad.shape} "
                        f"for input of shape {parent.shape}"
                    )
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad
            fn.consumed = True


class CustomFunction(Function):
    """Node whose forward is a closure and whose backward is always a registered hook."""

    def forward(self, *arrays: np.ndarray, fn: Optional[Callable[..., np.ndarray]] = None) -> np.ndarray:
        return np.asarray(fn(*arrays), dtype=np.float32)

    def backward(self, grad: np.ndarray) -> Cotangents:
        raise GraphError("CustomFunction used without a registered backward hook")


def custom_op(
    forward_fn: Callable[..., np.ndarray],
    backward_fn: Callable[[np.ndarray], Cotangents],
    *inputs: "Tensor",
) -> "Tensor":
    """
    Apply `forward_fn` to the input arrays and attach `backward_fn` as this
    node's gradient rule. Each call creates an independent node, so different
    gradient rules can coexist in one graph.
    """
    out = CustomFunction.apply(*inputs, fn=forward_fn)
    if out.creator is not None:
        out.creator.register_hook(lambda node, grad: backward_fn(grad))
    return out


def as_tensor(value: Union["Tensor", ArrayLike], requires_grad: bool = False) -> Tensor:
    """Wrap raw data in a constant tensor (no-op for tensors)."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=requires_grad)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float32), requires_grad=True, name=name)
