"""Supermixer Feature - Models"""
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.features.activations.models import AlphaMode, FinalizeMode


LayerKind = Literal["conv", "avgpool", "flatten", "linear"]


class LayerSpec(BaseModel):
    """One layer of the network description"""
    model_config = ConfigDict(extra="forbid")

    kind: LayerKind = Field(..., description="conv, avgpool, flatten or linear")
    out_channels: Optional[int] = Field(None, ge=1, description="Filters (conv) or output features (linear)")
    kernel: int = Field(3, ge=1, description="Kernel size (conv) or pooling window (avgpool)")
    padding: int = Field(1, ge=0, description="Symmetric zero padding (conv)")

    @model_validator(mode="after")
    def check_channels(self) -> "LayerSpec":
        if self.kind in ("conv", "linear") and self.out_channels is None:
            raise ValueError(f"{self.kind} layer needs out_channels")
        return self


def desk_layers(channels: List[int], num_classes: int) -> List[LayerSpec]:
    """conv blocks (3x3, same padding), avgpool after every second block, linear classifier"""
    layers: List[LayerSpec] = []
    for i, c in enumerate(channels):
        layers.append(LayerSpec(kind="conv", out_channels=c, kernel=3, padding=1))
        if i % 2 == 1:
            layers.append(LayerSpec(kind="avgpool", kernel=2))
    layers.append(LayerSpec(kind="flatten"))
    layers.append(LayerSpec(kind="linear", out_channels=num_classes))
    return layers


class ModelSpec(BaseModel):
    """Network description: ordered layers plus the settings shared by every activation site"""
    model_config = ConfigDict(extra="forbid")

    input_channels: int = Field(1, ge=1)
    image_size: int = Field(16, ge=1, description="Square input side length")
    num_classes: int = Field(10, ge=2)
    channels: List[int] = Field(default_factory=lambda: [16, 32, 64, 64], description="Conv widths of the desk CNN")
    layers: Optional[List[LayerSpec]] = Field(None, description="Explicit layer list; overrides `channels`")
    weight_bits: int = Field(6, ge=2, le=16, description="Weight fake-quantization bit-width")
    vdp_size: int = Field(128, ge=1, description="VDP vector length N")
    alpha_init: float = Field(8.0, gt=0, description="Initial clipping threshold")
    alpha_mode: AlphaMode = Field(AlphaMode.MACAM, description="alpha gradient rule of the analog path")
    adc_bits: int = Field(6, ge=1, le=16, description="Digital datapath ADC resolution")

    @model_validator(mode="after")
    def check_layers(self) -> "ModelSpec":
        layers = self.layer_list()
        if layers[-1].kind != "linear":
            raise ValueError("the last layer must be the linear classifier")
        if layers[-1].out_channels != self.num_classes:
            raise ValueError(f"classifier has {layers[-1].out_channels} outputs for {self.num_classes} classes")
        return self

    def layer_list(self) -> List[LayerSpec]:
        return self.layers if self.layers is not None else desk_layers(self.channels, self.num_classes)


class PhaseSchedule(BaseModel):
    """Epoch counts, alternation ratio, temperature and optimizer settings of the three phases"""
    model_config = ConfigDict(extra="forbid")

    warmup_epochs: int = Field(10, ge=1)
    search_epochs: int = Field(80, ge=2)
    retrain_epochs: int = Field(200, ge=1)
    weight_epochs_per_cycle: int = Field(2, ge=1, description="Weight-epochs per alternation cycle")
    theta_epochs_per_cycle: int = Field(1, ge=1, description="theta-epochs per alternation cycle")
    tau_start: float = Field(5.0, gt=0)
    tau_end: float = Field(0.5, gt=0)
    lr0: float = Field(0.02, gt=0, description="Initial learning rate of W and alpha")
    theta_lr: float = Field(0.05, gt=0, description="Adam step size of the assignment logits")
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(64, ge=1)
    finalize: FinalizeMode = Field(FinalizeMode.ARGMAX, description="How the hard assignment is fixed")
    fit_to_band: bool = Field(True, description="Switch the least committed channels until the hard E_act lies in the band")

    @model_validator(mode="after")
    def check_tau(self) -> "PhaseSchedule":
        if not self.tau_start > self.tau_end:
            raise ValueError(f"tau_start ({self.tau_start}) must exceed tau_end ({self.tau_end})")
        return self

    def is_theta_epoch(self, epoch: int) -> bool:
        """Position of a search epoch inside its weight/theta cycle"""
        cycle = self.weight_epochs_per_cycle + self.theta_epochs_per_cycle
        return epoch % cycle >= self.weight_epochs_per_cycle


class NoiseSpec(BaseModel):
    """Device noise used by variation-aware retraining and noisy evaluation"""
    model_config = ConfigDict(extra="forbid")

    weight_sigma: float = Field(0.05, ge=0, description="Relative Gaussian noise on weights")
    macam_sigma: float = Field(0.128, ge=0, description="Relative MTJ boundary variation")
    mc_samples: int = Field(10_000, ge=1, description="Monte-Carlo draws characterizing the MACAM")

    @property
    def is_silent(self) -> bool:
        return self.weight_sigma == 0 and self.macam_sigma == 0


class AccuracyStats(BaseModel):
    """Accuracy over one or more evaluation runs"""
    mean: float = Field(..., ge=0, le=1)
    std: float = Field(..., ge=0)
    runs: int = Field(..., ge=1)
    accuracies: List[float]
