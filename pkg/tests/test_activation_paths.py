# tests/test_activation_paths.py
"""
Tests for the activation datapaths.

  analog:  fused MACAM ReLU-alpha, three-branch alpha gradient, straight-through input gradient
  digital: ADC-quantized ReLU-alpha with PACT gradients
  mixed:   Gumbel-Softmax path weights, channel mixing, routed final mode, finalization
"""
import math

import numpy as np
import pytest

from app.core.tensor import Tensor, ops, parameter
from app.features.activations import kernels
from app.features.activations.functions import (
    analog_act_backward,
    analog_act_forward,
    channel_mix,
    digital_act,
    gumbel_softmax,
    routed_act,
)
from app.features.activations.models import (
    ALPHA_FLOOR,
    AlphaMode,
    AlphaParam,
    AnalogActConfig,
    DigitalActConfig,
    FinalizeMode,
    MixedActivationState,
    PathChoice,
)
from app.features.activations.service import (
    MixedActivation,
    MixMode,
    assignment_from_paths,
    finalize_assignment,
    mixed_forward,
)
from app.features.macam.service import build_codebook, characterize_variation, project
from app.shared.exceptions import ValidationError


def analog_out(x, alpha, cfg) -> np.ndarray:
    return analog_act_forward(Tensor(np.asarray(x, dtype=np.float32)), Tensor([alpha]), cfg).data


# ---------------------------------------------------------------------------
# Analog path
# ---------------------------------------------------------------------------

@pytest.mark.unit
class TestAnalogForward:
    """Tests for the fused MACAM activation"""

    def test_negative_is_zero(self, analog_cfg):
        assert analog_out([-0.3], 8.0, analog_cfg).tolist() == [0.0]

    def test_midpoint_value(self, analog_cfg):
        """x=3, alpha=8, c=4: scaled 1.5 -> projected 1.5 -> 3.0"""
        assert analog_out([3.0], 8.0, analog_cfg).tolist() == [3.0]

    def test_saturation_returns_alpha(self, analog_cfg):
        assert analog_out([100.0, 8.0], 8.0, analog_cfg).tolist() == [8.0, 8.0]

    def test_output_range(self, analog_cfg):
        alpha = 6.0
        x = np.random.default_rng(0).uniform(-4, 10, 5000).astype(np.float32)
        reps = np.asarray(analog_cfg.codebook.representative_values)
        allowed = np.append((alpha * reps / analog_cfg.c).astype(np.float32), np.float32(0.0))
        assert np.all(np.isin(analog_out(x, alpha, analog_cfg), allowed))

    def test_scale_covariance(self, analog_cfg):
        x = np.random.default_rng(1).uniform(-2, 10, 1000).astype(np.float32)
        base = analog_out(x, 5.0, analog_cfg)
        scaled = analog_out(2 * x, 10.0, analog_cfg)
        assert np.array_equal(scaled, 2 * base)

    def test_variation_keeps_outputs_on_codebook(self, analog_cfg):
        profile = characterize_variation(analog_cfg.codebook, 0.128, 500, seed=0)
        noisy_cfg = analog_cfg.with_variation(profile)
        x = np.random.default_rng(2).uniform(0, 8, 2000).astype(np.float32)
        out = analog_act_forward(Tensor(x), Tensor([8.0]), noisy_cfg, rng=np.random.default_rng(3)).data
        reps = np.asarray(analog_cfg.codebook.representative_values)
        assert np.all(np.isin(out, (8.0 * reps / analog_cfg.c).astype(np.float32)))
        assert not np.array_equal(out, analog_out(x, 8.0, analog_cfg)), "Noise should move some outputs"

    def test_c_must_match_codebook(self, uniform_codebook):
        with pytest.raises(Exception):
            AnalogActConfig(codebook=uniform_codebook, c=3.0)


@pytest.mark.unit
class TestAnalogBackward:
    """Tests for the three-branch alpha gradient and the straight-through input gradient"""

    def test_saturated_branch_is_one(self, uniform_codebook):
        partial = kernels.analog_alpha_partials(np.array([9.0, 8.0]), 8.0, uniform_codebook)
        assert partial.tolist() == [1.0, 1.0]

    def test_negative_branch_is_zero(self, analog_cfg):
        grad_x, grad_alpha = analog_act_backward(np.array([-1.0]), 8.0, analog_cfg, np.ones(1, dtype=np.float32))
        assert grad_x.tolist() == [0.0]
        assert grad_alpha == 0.0

    def test_middle_branch(self, uniform_codebook):
        """x=4, alpha=8: cx/alpha = 2 -> Pi = 2.5 -> 2.5/4 - 4/8 = 0.125"""
        partial = kernels.analog_alpha_partials(np.array([4.0]), 8.0, uniform_codebook)
        assert partial[0] == pytest.approx(0.125, abs=1e-15)

    def test_straight_through_input_gradient(self, analog_cfg):
        x = np.array([-1.0, 0.0, 3.0, 7.9, 8.0, 20.0], dtype=np.float32)
        grad_x, _ = analog_act_backward(x, 8.0, analog_cfg, np.ones(6, dtype=np.float32))
        assert grad_x.tolist() == [0.0, 1.0, 1.0, 1.0, 0.0, 0.0]

    def test_matches_branch_formula_exactly(self):
        """1e3 random (x, alpha, codebook) elements against a per-element evaluation"""
        rng = np.random.default_rng(7)
        for _ in range(10):
            steps = rng.uniform(0.1, 1.5, rng.integers(1, 6))
            cb = build_codebook([0.0] + np.cumsum(steps).tolist())
            cfg = AnalogActConfig.from_codebook(cb)
            alpha = float(rng.uniform(0.5, 10.0))
            x = rng.uniform(-alpha, 2 * alpha, 100).astype(np.float32)
            cot = rng.uniform(-1, 1, 100).astype(np.float32)

            products = []
            for xi, gi in zip(x.astype(np.float64), cot.astype(np.float64)):
                if xi < 0:
                    branch = 0.0
                elif xi >= alpha:
                    branch = 1.0
                else:
                    scaled = min(max(cb.c * xi / alpha, 0.0), cb.c)
                    branch = project(scaled, cb) / cb.c - xi / alpha
                products.append(gi * branch)

            _, grad_alpha = analog_act_backward(x, alpha, cfg, cot)
            assert grad_alpha == math.fsum(products)

    def test_alpha_gradient_through_graph(self, analog_cfg):
        alpha = AlphaParam(8.0)
        x = Tensor(np.array([-1.0, 4.0, 9.0], dtype=np.float32))
        ops.tensor_sum(analog_act_forward(x, alpha, analog_cfg)).backward()
        assert alpha.tensor.grad[0] == pytest.approx(0.0 + 0.125 + 1.0)

    def test_pact_mode_counts_saturated_only(self, analog_cfg):
        x = np.array([-1.0, 4.0, 9.0], dtype=np.float32)
        _, grad_alpha = analog_act_backward(x, 8.0, analog_cfg, np.ones(3, dtype=np.float32), AlphaMode.PACT)
        assert grad_alpha == 1.0

    def test_fixed_mode_has_no_alpha_gradient(self, analog_cfg):
        x = np.array([4.0, 9.0], dtype=np.float32)
        _, grad_alpha = analog_act_backward(x, 8.0, analog_cfg, np.ones(2, dtype=np.float32), AlphaMode.FIXED)
        assert grad_alpha is None


# ---------------------------------------------------------------------------
# Digital path
# ---------------------------------------------------------------------------

@pytest.mark.unit
class TestDigitalAct:
    """Tests for the ADC + digital activation path"""

    def _run(self, values, alpha=8.0, bits=6) -> np.ndarray:
        return digital_act(Tensor(np.asarray(values, dtype=np.float32)), Tensor([alpha]), DigitalActConfig(bits=bits)).data

    def test_negative_is_zero(self):
        assert self._run([-1.0]).tolist() == [0.0]

    def test_clips_to_alpha(self):
        assert self._run([10.0]).tolist() == [8.0]

    def test_six_bit_quantization(self):
        """round(3 * 63 / 8) * 8 / 63 = 24 * 8 / 63"""
        assert self._run([3.0])[0] == pytest.approx(24 * 8 / 63, rel=1e-6)

    def test_output_levels(self):
        x = np.random.default_rng(0).uniform(-2, 10, 5000)
        out = self._run(x, alpha=8.0, bits=3)
        allowed = (8.0 * np.arange(8) / 7).astype(np.float32)
        assert np.all(np.isin(out, allowed))

    def test_pact_gradients(self):
        alpha = parameter([8.0])
        x = parameter([-1.0, 3.0, 9.0])
        ops.tensor_sum(digital_act(x, alpha, DigitalActConfig(bits=6))).backward()
        assert x.grad.tolist() == [0.0, 1.0, 0.0]
        assert alpha.grad.tolist() == [1.0]

    def test_bits_bounds(self):
        with pytest.raises(Exception):
            DigitalActConfig(bits=0)
        with pytest.raises(Exception):
            DigitalActConfig(bits=17)

    def test_nonpositive_alpha_rejected(self):
        with pytest.raises(ValidationError):
            self._run([1.0], alpha=0.0)


@pytest.mark.unit
class TestAlphaParam:
    """Tests for the learnable clipping threshold"""

    def test_projection_keeps_alpha_positive(self):
        alpha = AlphaParam(8.0)
        alpha.tensor.data[0] = -3.0
        alpha.project()
        assert alpha.value == pytest.approx(ALPHA_FLOOR)

    def test_invalid_initial_value(self):
        with pytest.raises(ValidationError):
            AlphaParam(0.0)


# ---------------------------------------------------------------------------
# Gumbel-Softmax and mixing
# ---------------------------------------------------------------------------

@pytest.mark.unit
class TestGumbelSoftmax:
    """Tests for the relaxed categorical sampler"""

    DRAWS = 40_000

    def _draws(self, theta, tau, seed=0) -> np.ndarray:
        logits = Tensor(np.tile(np.asarray(theta, dtype=np.float32), (self.DRAWS, 1)))
        return gumbel_softmax(logits, tau, rng=np.random.default_rng(seed)).data

    def test_symmetric_logits_average_half(self):
        a = self._draws([0.7, 0.7], tau=1.0)
        bound = 3 * a[:, 0].std() / math.sqrt(self.DRAWS)
        assert abs(a[:, 0].mean() - 0.5) < bound

    def test_low_temperature_is_nearly_one_hot(self):
        a = self._draws([5.0, 0.0], tau=0.01)
        assert np.mean(a[:, 0] > 0.5) >= 0.99

    def test_weights_on_simplex(self):
        a = self._draws([1.0, -2.0], tau=0.3)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(a >= 0)

    def test_argmax_frequencies_follow_softmax(self):
        rng = np.random.default_rng(11)
        deviation, variance = 0.0, 0.0
        for trial in range(10):
            theta = rng.uniform(-2, 2, 2)
            a = self._draws(theta, tau=0.1, seed=trial)
            p = kernels.softmax(theta)[0]
            freq = np.mean(a.argmax(axis=1) == 0)
            deviation += freq - p
            variance += p * (1 - p) / self.DRAWS
        # pooled over the trials
        assert abs(deviation) <= 3 * math.sqrt(variance)

    def test_gradient_with_shared_noise(self):
        rng = np.random.default_rng(5)
        theta0 = rng.uniform(-1, 1, (4, 2))
        noise = kernels.gumbel_noise((4, 2), rng)
        weights = rng.uniform(-1, 1, (4, 2))
        tau = 0.7

        theta = parameter(theta0)
        out = gumbel_softmax(theta, tau, noise=noise)
        out.backward(weights.astype(np.float32))

        def loss(t: np.ndarray) -> float:
            return float((kernels.softmax((t + noise) / tau) * weights).sum())

        base = theta.data.astype(np.float64)
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            up, down = base.copy(), base.copy()
            up[idx] += 1e-3
            down[idx] -= 1e-3
            numeric[idx] = (loss(up) - loss(down)) / 2e-3
        np.testing.assert_allclose(theta.grad, numeric, rtol=1e-3, atol=1e-5)

    def test_nonpositive_tau_rejected(self):
        with pytest.raises(ValidationError):
            gumbel_softmax(Tensor(np.zeros((2, 2))), 0.0)


@pytest.mark.unit
class TestMixedForward:
    """Tests for the stochastic mixed activation"""

    def _state(self, channels=3) -> MixedActivationState:
        return MixedActivationState.uniform(channels)

    def test_one_hot_analog_selects_analog(self, analog_cfg, digital_cfg):
        x = Tensor(np.random.default_rng(0).uniform(-1, 9, (2, 3, 2, 2)))
        alpha = AlphaParam(8.0)
        weights = np.tile([1.0, 0.0], (3, 1)).astype(np.float32)
        out = mixed_forward(x, self._state(), analog_cfg, digital_cfg, alpha, weights=weights)
        np.testing.assert_array_equal(out.data, analog_act_forward(x, alpha, analog_cfg).data)

    def test_one_hot_digital_selects_digital(self, analog_cfg, digital_cfg):
        x = Tensor(np.random.default_rng(1).uniform(-1, 9, (2, 3, 2, 2)))
        alpha = AlphaParam(8.0)
        weights = np.tile([0.0, 1.0], (3, 1)).astype(np.float32)
        out = mixed_forward(x, self._state(), analog_cfg, digital_cfg, alpha, weights=weights)
        np.testing.assert_array_equal(out.data, digital_act(x, alpha, digital_cfg).data)

    def test_half_mix_is_convex_combination(self):
        f1 = Tensor(np.full((1, 2), 2.0))
        f2 = Tensor(np.full((1, 2), 4.0))
        out = channel_mix(f1, f2, np.full((2, 2), 0.5, dtype=np.float32))
        assert out.data.tolist() == [[3.0, 3.0]]

    def test_final_mode_requires_assignment(self, analog_cfg, digital_cfg):
        x = Tensor(np.ones((1, 3)))
        with pytest.raises(ValidationError):
            mixed_forward(x, self._state(), analog_cfg, digital_cfg, AlphaParam(8.0), mode=MixMode.FINAL)

    def test_final_mode_routes_each_channel(self, analog_cfg, digital_cfg):
        x = Tensor(np.random.default_rng(2).uniform(-1, 9, (4, 2, 3, 3)))
        alpha = AlphaParam(8.0)
        out = routed_act(x, alpha, analog_cfg, digital_cfg, np.array([0, 1]))
        np.testing.assert_array_equal(out.data[:, 0], analog_act_forward(x, alpha, analog_cfg).data[:, 0])
        np.testing.assert_array_equal(out.data[:, 1], digital_act(x, alpha, digital_cfg).data[:, 1])

    def test_channel_mismatch_rejected(self, analog_cfg, digital_cfg):
        with pytest.raises(ValidationError):
            mixed_forward(Tensor(np.ones((1, 4))), self._state(3), analog_cfg, digital_cfg, AlphaParam(8.0))

    def test_theta_needs_two_logits(self):
        with pytest.raises(Exception):
            MixedActivationState(theta=parameter(np.zeros((3, 3))))

    def test_site_reuses_its_gumbel_draw(self, analog_cfg, digital_cfg):
        site = MixedActivation(3, analog_cfg, digital_cfg, alpha_init=8.0)
        site.mode = MixMode.SEARCH
        x = Tensor(np.random.default_rng(3).uniform(-1, 9, (2, 3)))
        out = site(x, np.random.default_rng(4))
        expected = channel_mix(
            analog_act_forward(x, site.alpha, analog_cfg),
            digital_act(x, site.alpha, digital_cfg),
            site.last_weights.data,
        )
        np.testing.assert_array_equal(out.data, expected.data)

    def test_site_final_weights_are_one_hot(self, analog_cfg, digital_cfg):
        site = MixedActivation(2, analog_cfg, digital_cfg)
        site.state.assignment = assignment_from_paths(np.array([1, 0]))
        site.mode = MixMode.FINAL
        site(Tensor(np.ones((1, 2))))
        assert site.last_weights.data.tolist() == [[0.0, 1.0], [1.0, 0.0]]


@pytest.mark.unit
class TestFinalizeAssignment:
    """Tests for fixing the hard assignment"""

    def _state(self, logits) -> MixedActivationState:
        return MixedActivationState(theta=parameter(np.asarray(logits, dtype=np.float32)))

    def test_larger_logit_wins(self):
        state = self._state([[3.0, -1.0]])
        finalize_assignment(state)
        assert state.path_indices().tolist() == [PathChoice.ANALOG]

    def test_tie_goes_digital(self):
        state = self._state([[0.0, 0.0]])
        finalize_assignment(state, FinalizeMode.ARGMAX)
        assert state.path_indices().tolist() == [PathChoice.DIGITAL]

    def test_sampling_symmetric_logits(self):
        n = 40_000
        state = self._state(np.zeros((n, 2)))
        finalize_assignment(state, FinalizeMode.SAMPLE, np.random.default_rng(0))
        analog_share = float(np.mean(state.path_indices() == PathChoice.ANALOG))
        assert abs(analog_share - 0.5) <= 3 * math.sqrt(0.25 / n)

    def test_assignment_is_one_hot(self):
        state = self._state(np.random.default_rng(0).normal(size=(16, 2)))
        a = finalize_assignment(state)
        assert np.all(a.sum(axis=1) == 1)
        assert state.is_finalized

    def test_sampling_needs_random_stream(self):
        with pytest.raises(ValidationError):
            finalize_assignment(self._state([[0.0, 0.0]]), FinalizeMode.SAMPLE)

    def test_unfinalized_state_has_no_paths(self):
        with pytest.raises(ValidationError):
            self._state([[0.0, 0.0]]).path_indices()
