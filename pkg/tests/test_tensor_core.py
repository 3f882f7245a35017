# tests/test_tensor_core.py
"""
Tests for the tensor core: forward ops, reverse-mode backward, SGD and the cosine schedule.

Gradients are checked against central finite differences (step 1e-3) of
float64 reference implementations of each operation.
"""
import warnings
from typing import Callable, List

import numpy as np
import pytest

from app.core.tensor import SGD, Adam, OptimizerState, Tensor, cosine_lr, ops, parameter, sgd_step
from app.core.tensor.tensor import custom_op
from app.shared.exceptions import GraphError, ShapeMismatchError, ValidationError

FD_STEP = 1e-3
FD_RTOL = 1e-4
FD_ATOL = 1e-5


# ---------------------------------------------------------------------------
# Finite-difference helpers
# ---------------------------------------------------------------------------

def numeric_grad(reference: Callable[..., float], arrays: List[np.ndarray], index: int) -> np.ndarray:
    """Central differences of a float64 scalar reference w.r.t. arrays[index]"""
    base = [a.astype(np.float64) for a in arrays]
    grad = np.zeros_like(base[index])
    flat = base[index].reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + FD_STEP
        up = reference(*base)
        flat[i] = saved - FD_STEP
        down = reference(*base)
        flat[i] = saved
        grad.reshape(-1)[i] = (up - down) / (2 * FD_STEP)
    return grad


def check_gradients(op: Callable[..., Tensor], reference: Callable[..., np.ndarray], arrays: List[np.ndarray], rng):
    """Compare autodiff grads of sum(op(*inputs) * R) against finite differences"""
    params = [parameter(a) for a in arrays]
    out = op(*params)
    weights = np.asarray(rng.uniform(-1, 1, out.shape))
    out.backward(weights.astype(np.float32))

    def scalar(*xs: np.ndarray) -> float:
        return float((reference(*xs) * weights).sum())

    for i, p in enumerate(params):
        expected = numeric_grad(scalar, [p.data for p in params], i)
        np.testing.assert_allclose(
            p.grad, expected, rtol=FD_RTOL, atol=FD_ATOL,
            err_msg=f"input {i} of {op.__name__}",
        )


def reference_conv2d(x: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    """Shift-and-add convolution in float64"""
    k = w.shape[2]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out, w_out = xp.shape[2] - k + 1, xp.shape[3] - k + 1
    out = np.zeros((x.shape[0], w.shape[0], h_out, w_out))
    for i in range(k):
        for j in range(k):
            out += np.einsum("bchw,oc->bohw", xp[:, :, i:i + h_out, j:j + w_out], w[:, :, i, j])
    return out


def reference_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return np.asarray(-log_probs[np.arange(len(labels)), labels].mean())


# ---------------------------------------------------------------------------
# Forward ops
# ---------------------------------------------------------------------------

@pytest.mark.unit
class TestForwardOps:
    """Tests for the built-in forward operations"""

    def test_add_elementwise(self):
        """add([1,2],[3,4]) -> [4,6]"""
        out = ops.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
        assert out.values.tolist() == [4.0, 6.0]

    def test_matmul_identity(self, rng):
        """matmul(I, A) returns A"""
        a = rng.uniform(-1, 1, (3, 3)).astype(np.float32)
        out = ops.matmul(Tensor(np.eye(3)), Tensor(a))
        np.testing.assert_allclose(out.data, a, rtol=0, atol=1e-7)

    def test_conv2d_ones(self):
        """3x3 ones convolved with a 2x2 ones kernel gives 2x2 of 4.0"""
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 2, 2)))
        out = ops.conv2d(x, w)
        assert out.shape == (1, 1, 2, 2)
        assert np.all(out.data == 4.0), f"Expected all 4.0, got {out.data}"

    def test_conv2d_same_padding_keeps_size(self, rng):
        x = Tensor(rng.uniform(-1, 1, (2, 3, 6, 6)))
        w = Tensor(rng.uniform(-1, 1, (4, 3, 3, 3)))
        assert ops.conv2d(x, w, padding=1).shape == (2, 4, 6, 6)

    def test_avgpool_means_blocks(self):
        x = Tensor(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
        out = ops.avgpool2d(x, kernel=2)
        assert out.data.reshape(-1).tolist() == [2.5, 4.5, 10.5, 12.5]

    def test_bias_add_per_channel(self):
        x = Tensor(np.zeros((2, 3, 2, 2)))
        out = ops.bias_add(x, Tensor([1.0, 2.0, 3.0]))
        assert np.all(out.data[:, 1] == 2.0)

    def test_values_match_shape(self, rng):
        t = Tensor(rng.uniform(size=(2, 3, 4)))
        assert t.values.size == int(np.prod(t.shape))

    def test_add_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeMismatchError) as exc:
            ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))
        assert "(2, 3)" in str(exc.value) and "(3, 2)" in str(exc.value)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_conv2d_channel_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ops.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))

    def test_avgpool_rejects_untiled_input(self):
        with pytest.raises(ValidationError):
            ops.avgpool2d(Tensor(np.zeros((1, 1, 5, 5))), kernel=2)

    def test_cross_entropy_rejects_bad_labels(self):
        with pytest.raises(ValidationError):
            ops.softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

@pytest.mark.unit
class TestBackward:
    """Tests for reverse-mode differentiation"""

    def test_square_gradient(self):
        """loss = x*x at x=3 -> grad 6 (both consumers accumulate)"""
        x = parameter([3.0])
        ops.tensor_sum(ops.mul(x, x)).backward()
        assert x.grad.tolist() == [6.0]

    def test_cross_entropy_uniform_logits(self):
        """softmax_cross_entropy([0,0], label 0) -> grad [-0.5, 0.5]"""
        logits = parameter([[0.0, 0.0]])
        ops.softmax_cross_entropy(logits, [0]).backward()
        np.testing.assert_allclose(logits.grad, [[-0.5, 0.5]], atol=1e-7)

    def test_cross_entropy_scaled_seed(self):
        """A scaled upstream cotangent reaches the logits without array-to-scalar warnings"""
        logits = parameter([[0.0, 0.0]])
        with warnings.catch_warnings():
            warnings.simplefilter("error", DeprecationWarning)
            ops.scale(ops.softmax_cross_entropy(logits, [0]), 2.0).backward()
        np.testing.assert_allclose(logits.grad, [[-1.0, 1.0]], atol=1e-7)

    def test_two_consumers_sum_cotangents(self):
        x = parameter([1.0, 2.0])
        y = ops.add(ops.scale(x, 2.0), ops.scale(x, 3.0))
        ops.tensor_sum(y).backward()
        assert x.grad.tolist() == [5.0, 5.0]

    def test_only_leaves_receive_grad(self):
        x = parameter([1.0, 2.0])
        hidden = ops.scale(x, 2.0)
        ops.tensor_sum(hidden).backward()
        assert hidden.grad is None
        assert x.grad is not None

    def test_retain_grad_on_intermediate(self):
        x = parameter([1.0, 2.0])
        hidden = ops.scale(x, 2.0).retain_grad()
        ops.tensor_sum(hidden).backward()
        assert hidden.grad.tolist() == [1.0, 1.0]

    def test_constant_inputs_get_no_grad(self):
        x = parameter([1.0])
        c = Tensor([2.0])
        ops.tensor_sum(ops.mul(x, c)).backward()
        assert c.grad is None
        assert x.grad.tolist() == [2.0]

    def test_backward_twice_rejected(self):
        x = parameter([1.0])
        loss = ops.tensor_sum(ops.mul(x, x))
        loss.backward()
        with pytest.raises(GraphError):
            loss.backward()

    def test_non_scalar_needs_seed(self):
        x = parameter([1.0, 2.0])
        with pytest.raises(ValidationError):
            ops.scale(x, 2.0).backward()

    def test_backward_without_grad_rejected(self):
        with pytest.raises(GraphError):
            ops.tensor_sum(Tensor([1.0])).backward()

    def test_deterministic_grads(self, rng):
        a = rng.uniform(-1, 1, (4, 4)).astype(np.float32)
        b = rng.uniform(-1, 1, (4, 4)).astype(np.float32)
        grads = []
        for _ in range(2):
            pa, pb = parameter(a), parameter(b)
            ops.softmax_cross_entropy(ops.matmul(pa, pb), [0, 1, 2, 3]).backward()
            grads.append((pa.grad.copy(), pb.grad.copy()))
        assert np.array_equal(grads[0][0], grads[1][0])
        assert np.array_equal(grads[0][1], grads[1][1])

    def test_custom_hooks_are_per_node(self):
        """Two custom ops in one graph keep their own gradient rules"""
        x = parameter([1.0, 1.0])
        doubled = custom_op(lambda a: a, lambda g: (2 * g,), x)
        tripled = custom_op(lambda a: a, lambda g: (3 * g,), x)
        ops.tensor_sum(ops.add(doubled, tripled)).backward()
        assert x.grad.tolist() == [5.0, 5.0]


@pytest.mark.unit
class TestFiniteDifferences:
    """Autodiff gradients match central finite differences on random inputs in [-1, 1]"""

    @pytest.mark.parametrize("seed", range(20))
    def test_elementwise_ops(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (2, 3))
        check_gradients(ops.add, lambda x, y: x + y, [a, b], rng)
        check_gradients(ops.sub, lambda x, y: x - y, [a, b], rng)
        check_gradients(ops.mul, lambda x, y: x * y, [a, b], rng)

    @pytest.mark.parametrize("seed", range(20))
    def test_matmul(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-1, 1, (4, 4)), rng.uniform(-1, 1, (4, 4))
        check_gradients(ops.matmul, lambda x, y: x @ y, [a, b], rng)

    @pytest.mark.parametrize("seed", range(20))
    def test_conv2d(self, seed):
        rng = np.random.default_rng(seed)
        x, w = rng.uniform(-1, 1, (1, 2, 4, 4)), rng.uniform(-1, 1, (2, 2, 3, 3))
        padding = seed % 2

        def conv(xt: Tensor, wt: Tensor) -> Tensor:
            return ops.conv2d(xt, wt, padding=padding)

        check_gradients(conv, lambda xa, wa: reference_conv2d(xa, wa, padding), [x, w], rng)

    @pytest.mark.parametrize("seed", range(20))
    def test_avgpool_and_bias(self, seed):
        rng = np.random.default_rng(seed)
        x, b = rng.uniform(-1, 1, (2, 3, 4, 4)), rng.uniform(-1, 1, 3)

        def pool(xt: Tensor) -> Tensor:
            return ops.avgpool2d(xt, kernel=2)

        check_gradients(pool, lambda xa: xa.reshape(2, 3, 2, 2, 2, 2).mean(axis=(3, 5)), [x], rng)
        check_gradients(ops.bias_add, lambda xa, ba: xa + ba.reshape(1, -1, 1, 1), [x, b], rng)

    @pytest.mark.parametrize("seed", range(20))
    def test_softmax_cross_entropy(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.uniform(-1, 1, (3, 4))
        labels = rng.integers(0, 4, 3)

        def loss(lt: Tensor) -> Tensor:
            return ops.softmax_cross_entropy(lt, labels)

        check_gradients(loss, lambda la: reference_cross_entropy(la, labels), [logits], rng)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@pytest.mark.unit
class TestSgdStep:
    """Tests for momentum SGD"""

    def _state(self, lr: float, momentum: float) -> OptimizerState:
        # a long schedule keeps the learning rate at lr0 for the first epoch
        return OptimizerState(learning_rate_initial=lr, momentum=momentum, epoch_count=100)

    def test_plain_step(self):
        p = parameter([1.0])
        p.grad = np.array([1.0], dtype=np.float32)
        sgd_step([p], self._state(0.1, 0.0))
        assert p.data[0] == pytest.approx(0.9)

    def test_momentum_two_steps(self):
        """v1 = 1, v2 = 1.9 -> p = 1 - 0.1 - 0.19 = 0.71"""
        p = parameter([1.0])
        state = self._state(0.1, 0.9)
        for _ in range(2):
            p.grad = np.array([1.0], dtype=np.float32)
            sgd_step([p], state)
        assert p.data[0] == pytest.approx(0.71, rel=1e-6)

    def test_zero_grad_is_fixed_point(self):
        p = parameter([0.5, -0.5])
        p.grad = np.zeros(2, dtype=np.float32)
        sgd_step([p], self._state(0.1, 0.9))
        assert p.data.tolist() == [0.5, -0.5]

    def test_velocity_matches_parameter_shape(self):
        p = parameter(np.ones((2, 3)))
        p.grad = np.ones((2, 3), dtype=np.float32)
        state = self._state(0.1, 0.9)
        sgd_step([p], state)
        assert state.velocity[0].shape == p.shape

    def test_step_clears_grads(self):
        p = parameter([1.0])
        p.grad = np.array([1.0], dtype=np.float32)
        sgd_step([p], self._state(0.1, 0.0))
        assert p.grad is None

    def test_missing_grad_rejected(self):
        p = parameter([1.0], name="w")
        with pytest.raises(ValidationError) as exc:
            sgd_step([p], self._state(0.1, 0.0))
        assert "w" in str(exc.value)

    def test_sgd_follows_cosine_schedule(self):
        opt = SGD([parameter([1.0])], lr0=0.02, momentum=0.9, total_epochs=10)
        opt.set_epoch(5)
        assert opt.lr == pytest.approx(0.01)


@pytest.mark.unit
class TestCosineLr:
    """Tests for cosine learning-rate decay"""

    def test_start(self):
        assert cosine_lr(0, 10, 0.02) == pytest.approx(0.02)

    def test_end(self):
        assert cosine_lr(10, 10, 0.02) == pytest.approx(0.0, abs=1e-12)

    def test_midpoint(self):
        assert cosine_lr(5, 10, 0.02) == pytest.approx(0.01)

    def test_zero_total_rejected(self):
        with pytest.raises(ValidationError):
            cosine_lr(0, 0, 0.02)


@pytest.mark.unit
class TestAdamStep:
    """Tests for the Adam optimizer used on assignment logits"""

    def test_first_step_is_lr_for_tiny_gradients(self):
        p = parameter([1.0, -1.0])
        opt = Adam([p], lr=0.05)
        p.grad = np.array([1e-4, -3e-5], dtype=np.float32)
        opt.step()
        np.testing.assert_allclose(p.data, [0.95, -0.95], rtol=1e-3)
        assert p.grad is None

    def test_consistent_gradient_keeps_step_size(self):
        p = parameter([0.0])
        opt = Adam([p], lr=0.1)
        for _ in range(10):
            p.grad = np.array([2.5e-3], dtype=np.float32)
            opt.step()
        assert p.data[0] == pytest.approx(-1.0, rel=1e-3)

    def test_missing_grad_rejected(self):
        opt = Adam([parameter([1.0], name="theta")], lr=0.1)
        with pytest.raises(ValidationError, match="theta"):
            opt.step()
