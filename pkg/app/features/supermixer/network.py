"""Supermixer Feature - Network built from tensor-core layers and mixed activation sites"""
import copy
import logging
import math
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from app.core.tensor import Tensor, ops, parameter
from app.core.tensor.tensor import Cotangents, as_tensor, custom_op
from app.features.activations.models import AlphaMode, AnalogActConfig, DigitalActConfig
from app.features.activations.service import MixedActivation, MixMode, assignment_from_paths
from app.features.energy.models import LayerGeometry
from app.features.macam.models import VariationProfile
from app.features.supermixer.models import LayerSpec, ModelSpec
from app.shared.exceptions import ShapeMismatchError, ValidationError


logger = logging.getLogger("macam_workbench")


def fake_quantize(
    w: Tensor,
    bits: int,
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    Symmetric uniform weight quantization with a straight-through gradient.

    With noise_sigma > 0 each quantized weight is perturbed multiplicatively,
    w * (1 + eps) with eps ~ N(0, sigma^2), freshly on every call.
    """
    levels = 2 ** (bits - 1) - 1
    noisy = noise_sigma > 0 and rng is not None
    factor = (1.0 + noise_sigma * rng.standard_normal(w.shape)).astype(np.float32) if noisy else None

    def forward(w_arr: np.ndarray) -> np.ndarray:
        peak = float(np.abs(w_arr).max())
        if peak == 0:
            return w_arr.copy()
        step = peak / levels
        q = (np.rint(w_arr.astype(np.float64) / step) * step).astype(np.float32)
        return q * factor if noisy else q

    def backward(grad: np.ndarray) -> Cotangents:
        return (grad * factor if noisy else grad,)

    return custom_op(forward, backward, w)


class ConvLayer:
    def __init__(self, c_in: int, spec: LayerSpec, rng: np.random.Generator, name: str):
        k = spec.kernel
        std = math.sqrt(2.0 / (c_in * k * k))
        self.name = name
        self.padding = spec.padding
        self.weight = parameter(rng.standard_normal((spec.out_channels, c_in, k, k)) * std, name=f"{name}.weight")
        self.bias = parameter(np.zeros(spec.out_channels, dtype=np.float32), name=f"{name}.bias")

    def __call__(self, x: Tensor, w: Tensor) -> Tensor:
        return ops.bias_add(ops.conv2d(x, w, padding=self.padding), self.bias)


class LinearLayer:
    def __init__(self, c_in: int, spec: LayerSpec, rng: np.random.Generator, name: str):
        std = math.sqrt(2.0 / c_in)
        self.name = name
        self.weight = parameter(rng.standard_normal((c_in, spec.out_channels)) * std, name=f"{name}.weight")
        self.bias = parameter(np.zeros(spec.out_channels, dtype=np.float32), name=f"{name}.bias")

    def __call__(self, x: Tensor, w: Tensor) -> Tensor:
        return ops.bias_add(ops.matmul(x, w), self.bias)


class PoolLayer:
    def __init__(self, kernel: int):
        self.kernel = kernel

    def __call__(self, x: Tensor) -> Tensor:
        return ops.avgpool2d(x, kernel=self.kernel)


class FlattenLayer:
    def __call__(self, x: Tensor) -> Tensor:
        return ops.flatten(x)


TrainableLayer = Union[ConvLayer, LinearLayer]
Layer = Union[ConvLayer, LinearLayer, PoolLayer, FlattenLayer]


class SuperMixerNet:
    """
    CNN whose every non-final conv/linear layer feeds one mixed activation site.

    The final linear layer is the classifier and has no activation.
    """

    def __init__(
        self,
        spec: ModelSpec,
        analog_cfg: AnalogActConfig,
        digital_cfg: Optional[DigitalActConfig] = None,
        seed: int = 0,
        tau: float = 5.0,
    ):
        self.spec = spec
        self.analog_cfg = analog_cfg
        self.digital_cfg = digital_cfg or DigitalActConfig(bits=spec.adc_bits)
        self.weight_noise = 0.0

        rng = np.random.default_rng(seed)
        layers = spec.layer_list()
        self.layers: List[Layer] = []
        self.activations: Dict[int, MixedActivation] = {}
        self._geometries: List[LayerGeometry] = []

        channels, side, flat = spec.input_channels, spec.image_size, None
        last_trainable = max(i for i, layer in enumerate(layers) if layer.kind in ("conv", "linear"))
        for i, layer in enumerate(layers):
            name = f"layer{i}"
            if layer.kind == "conv":
                if flat is not None:
                    raise ValidationError(f"{name}: conv layer after flatten")
                conv = ConvLayer(channels, layer, rng, name)
                out_side = side + 2 * layer.padding - layer.kernel + 1
                if out_side < 1:
                    raise ValidationError(f"{name}: kernel {layer.kernel} larger than padded input {side}")
                geometry = LayerGeometry(
                    c_o=layer.out_channels, c_i=channels, k=layer.kernel,
                    h_out=out_side, w_out=out_side, n=spec.vdp_size,
                )
                self.layers.append(conv)
                channels, side = layer.out_channels, out_side
            elif layer.kind == "linear":
                if flat is None:
                    raise ValidationError(f"{name}: linear layer needs a flatten before it")
                self.layers.append(LinearLayer(flat, layer, rng, name))
                geometry = LayerGeometry(c_o=layer.out_channels, c_i=flat, k=1, n=spec.vdp_size)
                flat = layer.out_channels
            elif layer.kind == "avgpool":
                if flat is not None or side % layer.kernel:
                    raise ValidationError(f"{name}: pooling window {layer.kernel} does not tile {side}x{side}")
                self.layers.append(PoolLayer(layer.kernel))
                side //= layer.kernel
                continue
            else:
                self.layers.append(FlattenLayer())
                flat = channels * side * side
                continue

            if i != last_trainable:
                self.activations[i] = MixedActivation(
                    geometry.c_o,
                    self.analog_cfg,
                    self.digital_cfg,
                    alpha_init=spec.alpha_init,
                    tau=tau,
                    alpha_mode=spec.alpha_mode,
                    name=f"act{len(self._geometries)}",
                )
                self._geometries.append(geometry)

        logger.debug(f"Built network with {len(self.activations)} activation sites: {self.geometries()}")

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def __call__(self, images: Union[np.ndarray, Tensor], rng: Optional[np.random.Generator] = None) -> Tensor:
        x = as_tensor(images)
        if x.ndim != 4 or x.shape[1:] != (self.spec.input_channels, self.spec.image_size, self.spec.image_size):
            raise ShapeMismatchError(
                "network input", x.shape,
                (-1, self.spec.input_channels, self.spec.image_size, self.spec.image_size),
            )
        for i, layer in enumerate(self.layers):
            if isinstance(layer, (PoolLayer, FlattenLayer)):
                x = layer(x)
                continue
            w = fake_quantize(layer.weight, self.spec.weight_bits, self.weight_noise, rng)
            x = layer(x, w)
            if i in self.activations:
                x = self.activations[i](x, rng)
        return x

    # ------------------------------------------------------------------
    # Parameter groups
    # ------------------------------------------------------------------

    @property
    def sites(self) -> List[MixedActivation]:
        return list(self.activations.values())

    def trainable_layers(self) -> List[TrainableLayer]:
        return [layer for layer in self.layers if isinstance(layer, (ConvLayer, LinearLayer))]

    def weight_params(self) -> List[Tensor]:
        params = []
        for layer in self.trainable_layers():
            params.extend([layer.weight, layer.bias])
        return params

    def alpha_params(self) -> List[Tensor]:
        return [site.alpha.tensor for site in self.sites if site.alpha_mode is not AlphaMode.FIXED]

    def theta_params(self) -> List[Tensor]:
        return [site.state.theta for site in self.sites]

    def freeze(self, weights: bool = False, alphas: bool = False, thetas: bool = False) -> None:
        """Set which parameter groups are frozen; frozen tensors receive no gradient."""
        for p in self.weight_params():
            p.requires_grad = not weights
        for p in self.alpha_params():
            p.requires_grad = not alphas
        for p in self.theta_params():
            p.requires_grad = not thetas
        for p in self.weight_params() + self.alpha_params() + self.theta_params():
            p.grad = None

    @contextmanager
    def inference(self) -> Iterator["SuperMixerNet"]:
        """Run forward passes without recording a graph; restores grad flags on exit."""
        saved = [(p, p.requires_grad) for p in self.weight_params() + self.alpha_params() + self.theta_params()]
        for p, _ in saved:
            p.requires_grad = False
        try:
            yield self
        finally:
            for p, flag in saved:
                p.requires_grad = flag

    def project_alphas(self) -> None:
        for site in self.sites:
            site.alpha.project()

    # ------------------------------------------------------------------
    # Activation-site control
    # ------------------------------------------------------------------

    def set_mode(self, mode: MixMode) -> None:
        for site in self.sites:
            site.mode = mode

    def set_tau(self, tau: float) -> None:
        for site in self.sites:
            site.state.tau = tau

    def set_noise(self, weight_sigma: float = 0.0, variation: Optional[VariationProfile] = None) -> None:
        """Weight noise and MACAM variation applied by subsequent forward passes"""
        self.weight_noise = weight_sigma
        analog_cfg = self.analog_cfg.with_variation(variation)
        for site in self.sites:
            site.analog_cfg = analog_cfg

    def geometries(self) -> List[LayerGeometry]:
        """Geometry of every layer that owns an activation site, in forward order"""
        return list(self._geometries)

    def soft_weights(self) -> List[Tensor]:
        """Path weights each site used in the latest forward pass"""
        weights = [site.last_weights for site in self.sites]
        if any(w is None for w in weights):
            raise ValidationError("No forward pass has been run yet")
        return weights

    def assignment_paths(self) -> List[np.ndarray]:
        return [site.state.path_indices() for site in self.sites]

    def load_assignment(self, paths: List[np.ndarray]) -> None:
        """Install a finalized assignment given per-layer path indices."""
        if len(paths) != len(self.sites):
            raise ValidationError(f"Assignment has {len(paths)} layers, network has {len(self.sites)} activation sites")
        for site, p in zip(self.sites, paths):
            p = np.asarray(p, dtype=np.int64)
            if p.shape != (site.channels,):
                raise ShapeMismatchError(f"assignment for {site.name}", p.shape, (site.channels,))
            site.state.assignment = assignment_from_paths(p)

    def digital_ratios(self) -> List[float]:
        return [site.state.digital_ratio() for site in self.sites]

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {}
        for layer in self.trainable_layers():
            state[layer.weight.name] = layer.weight.data.copy()
            state[layer.bias.name] = layer.bias.data.copy()
        for site in self.sites:
            state[f"{site.name}.alpha"] = site.alpha.tensor.data.copy()
            state[f"{site.name}.theta"] = site.state.theta.data.copy()
            if site.state.is_finalized:
                state[f"{site.name}.assignment"] = site.state.assignment.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Restore parameters saved by `state_dict`.

        Raises:
            ValidationError: If a parameter is missing or has the wrong shape
        """
        targets: Dict[str, Tensor] = {}
        for layer in self.trainable_layers():
            targets[layer.weight.name] = layer.weight
            targets[layer.bias.name] = layer.bias
        for site in self.sites:
            targets[f"{site.name}.alpha"] = site.alpha.tensor
            targets[f"{site.name}.theta"] = site.state.theta

        for key, tensor in targets.items():
            if key not in state:
                raise ValidationError(f"Checkpoint is missing parameter '{key}'")
            value = np.asarray(state[key], dtype=np.float32)
            if value.shape != tensor.shape:
                raise ShapeMismatchError(f"checkpoint '{key}'", value.shape, tensor.shape)
            tensor.data = value.copy()

        for site in self.sites:
            key = f"{site.name}.assignment"
            site.state.assignment = np.asarray(state[key], dtype=np.int64) if key in state else None

    def clone(self) -> "SuperMixerNet":
        """Independent deep copy (used by concurrent evaluations); the copy drops the last mixing weights"""
        memo = {id(site.last_weights): None for site in self.sites if site.last_weights is not None}
        return copy.deepcopy(self, memo)
