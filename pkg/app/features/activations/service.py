"""Activations Feature - Mixed activation system"""
import logging
from enum import Enum
from typing import Optional, Union

import numpy as np

from app.core.tensor import Tensor
from app.core.tensor.tensor import as_tensor
from app.features.activations import kernels
from app.features.activations.functions import (
    analog_act_forward,
    channel_mix,
    digital_act,
    gumbel_softmax,
    routed_act,
)
from app.features.activations.models import (
    AlphaMode,
    AlphaParam,
    AnalogActConfig,
    DigitalActConfig,
    FinalizeMode,
    MixedActivationState,
    PathChoice,
)
from app.shared.exceptions import ValidationError


logger = logging.getLogger("macam_workbench")


class MixMode(str, Enum):
    """How a mixed activation site chooses its datapath"""
    UNIFORM = "uniform"      # frozen 0.5/0.5 soft blend
    SEARCH = "search"        # Gumbel-Softmax weights from theta
    FINAL = "final"          # hard finalized assignment


UNIFORM_WEIGHTS_VALUE = 0.5


def mixed_forward(
    x: Tensor,
    state: MixedActivationState,
    analog_cfg: AnalogActConfig,
    digital_cfg: DigitalActConfig,
    alpha: AlphaParam,
    mode: MixMode = MixMode.SEARCH,
    rng: Optional[np.random.Generator] = None,
    alpha_mode: AlphaMode = AlphaMode.MACAM,
    weights: Optional[Union[Tensor, np.ndarray]] = None,
) -> Tensor:
    """
    Stochastic mixed activation: out_b = sum_i a_{b,i} f_i(x_b).

    In search mode the weights are Gumbel-Softmax samples of theta (or the explicit
    `weights` when given); in final mode each channel runs only its assigned path.

    Raises:
        ValidationError: Final mode without a finalized assignment, or channel mismatch.
    """
    if x.ndim < 2 or x.shape[1] != state.channels:
        raise ValidationError(f"Activation input {x.shape} does not have {state.channels} channels on axis 1")

    if mode is MixMode.FINAL:
        if not state.is_finalized:
            raise ValidationError("Finalized mode requires a finalized assignment")
        return routed_act(x, alpha, analog_cfg, digital_cfg, state.path_indices(), rng=rng, alpha_mode=alpha_mode)

    if weights is None:
        if mode is MixMode.UNIFORM:
            weights = np.full(state.theta.shape, UNIFORM_WEIGHTS_VALUE, dtype=np.float32)
        else:
            weights = gumbel_softmax(state.theta, state.tau, rng=rng)

    f1 = analog_act_forward(x, alpha, analog_cfg, rng=rng, alpha_mode=alpha_mode)
    f2 = digital_act(x, alpha, digital_cfg, alpha_mode=alpha_mode)
    return channel_mix(f1, f2, as_tensor(weights))


def finalize_assignment(
    state: MixedActivationState,
    mode: FinalizeMode = FinalizeMode.ARGMAX,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Fix a hard per-channel assignment from the learned logits.

    Argmax picks the larger logit (ties go to the digital path); sample draws each
    channel from softmax(theta). The one-hot result is stored on the state.
    """
    theta = state.theta.data.astype(np.float64)
    if mode is FinalizeMode.ARGMAX:
        analog = theta[:, PathChoice.ANALOG] > theta[:, PathChoice.DIGITAL]
    else:
        if rng is None:
            raise ValidationError("Sampling an assignment requires a random stream")
        p_analog = kernels.softmax(theta)[:, PathChoice.ANALOG]
        analog = rng.random(theta.shape[0]) < p_analog

    assignment = np.zeros(theta.shape, dtype=np.int64)
    assignment[np.arange(theta.shape[0]), np.where(analog, int(PathChoice.ANALOG), int(PathChoice.DIGITAL))] = 1
    state.assignment = assignment
    return assignment


def assignment_from_paths(paths: np.ndarray) -> np.ndarray:
    """One-hot (C, 2) assignment from per-channel path indices"""
    paths = np.asarray(paths, dtype=np.int64)
    assignment = np.zeros((paths.size, 2), dtype=np.int64)
    assignment[np.arange(paths.size), paths] = 1
    return assignment


class MixedActivation:
    """One activation site: alpha, assignment state and both datapath configs"""

    def __init__(
        self,
        channels: int,
        analog_cfg: AnalogActConfig,
        digital_cfg: DigitalActConfig,
        alpha_init: float = 8.0,
        tau: float = 5.0,
        alpha_mode: AlphaMode = AlphaMode.MACAM,
        name: str = "act",
    ):
        self.name = name
        self.analog_cfg = analog_cfg
        self.digital_cfg = digital_cfg
        self.alpha_mode = alpha_mode
        self.alpha = AlphaParam(alpha_init, name=f"{name}.alpha")
        self.alpha.tensor.requires_grad = alpha_mode is not AlphaMode.FIXED
        self.state = MixedActivationState.uniform(channels, tau=tau, name=f"{name}.theta")
        self.mode = MixMode.UNIFORM
        self.last_weights: Optional[Tensor] = None

    @property
    def channels(self) -> int:
        return self.state.channels

    def __call__(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Activate x and remember the path weights of this pass; the energy
        estimate must see the same Gumbel draw as the forward pass.
        """
        if self.mode is MixMode.SEARCH:
            self.last_weights = gumbel_softmax(self.state.theta, self.state.tau, rng=rng)
        elif self.mode is MixMode.FINAL:
            if not self.state.is_finalized:
                raise ValidationError(f"{self.name}: finalized mode requires a finalized assignment")
            self.last_weights = as_tensor(self.state.assignment.astype(np.float32))
        else:
            self.last_weights = as_tensor(np.full(self.state.theta.shape, UNIFORM_WEIGHTS_VALUE, dtype=np.float32))

        return mixed_forward(
            x,
            self.state,
            self.analog_cfg,
            self.digital_cfg,
            self.alpha,
            mode=self.mode,
            rng=rng,
            alpha_mode=self.alpha_mode,
            weights=None if self.mode is MixMode.FINAL else self.last_weights,
        )
