"""Activations Feature - Models"""
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.tensor import Tensor, parameter
from app.features.macam.models import Codebook, VariationProfile
from app.shared.exceptions import ValidationError


ALPHA_FLOOR = 1e-3


class PathChoice(int, Enum):
    """Activation datapath of one output channel"""
    ANALOG = 0
    DIGITAL = 1

    @property
    def label(self) -> str:
        return self.name.lower()


class AlphaMode(str, Enum):
    """How the clipping threshold is learned"""
    MACAM = "macam"   # three-branch gradient through the codebook projection
    PACT = "pact"     # saturated elements only
    FIXED = "fixed"   # not learned


class FinalizeMode(str, Enum):
    ARGMAX = "argmax"
    SAMPLE = "sample"


class AnalogActConfig(BaseModel):
    """Fused MACAM activation settings"""
    model_config = ConfigDict(frozen=True)

    codebook: Codebook = Field(..., description="Interval codebook of the MACAM array")
    c: float = Field(..., gt=0, description="Search-range upper bound (last boundary)")
    variation: Optional[VariationProfile] = Field(None, description="Device variation injected at the input")

    @model_validator(mode="after")
    def check_range(self) -> "AnalogActConfig":
        if self.c != self.codebook.c:
            raise ValueError(f"c={self.c} must equal the codebook's last boundary {self.codebook.c}")
        return self

    @classmethod
    def from_codebook(cls, codebook: Codebook, variation: Optional[VariationProfile] = None) -> "AnalogActConfig":
        return cls(codebook=codebook, c=codebook.c, variation=variation)

    def with_variation(self, variation: Optional[VariationProfile]) -> "AnalogActConfig":
        return AnalogActConfig(codebook=self.codebook, c=self.c, variation=variation)


class DigitalActConfig(BaseModel):
    """ADC + digital activation settings"""
    model_config = ConfigDict(frozen=True)

    bits: int = Field(6, ge=1, le=16, description="ADC resolution")


class AlphaParam:
    """Learnable positive clipping threshold shared by one activation site"""

    def __init__(self, initial: float = 8.0, name: str = "alpha"):
        if initial <= 0:
            raise ValidationError(f"alpha must be positive, got {initial}")
        self.initial = float(initial)
        self.tensor: Tensor = parameter([initial], name=name)

    @property
    def value(self) -> float:
        return float(self.tensor.data[0])

    def project(self) -> None:
        """Keep alpha positive after an optimizer step."""
        np.maximum(self.tensor.data, ALPHA_FLOOR, out=self.tensor.data)


class MixedActivationState(BaseModel):
    """Per-channel assignment logits, temperature and finalized assignment"""
    model_config = ConfigDict(arbitrary_types_allowed=True, validate_assignment=True)

    theta: Tensor = Field(..., description="(C, 2) logits: column 0 analog, column 1 digital")
    tau: float = Field(5.0, gt=0, description="Gumbel-Softmax temperature")
    assignment: Optional[np.ndarray] = Field(None, description="(C, 2) one-hot finalized assignment")

    @field_validator("theta")
    @classmethod
    def check_theta(cls, value: Tensor) -> Tensor:
        if value.ndim != 2 or value.shape[1] != 2:
            raise ValueError(f"theta must have exactly 2 logits per channel, got shape {value.shape}")
        return value

    @model_validator(mode="after")
    def check_assignment(self) -> "MixedActivationState":
        a = self.assignment
        if a is not None:
            if a.shape != self.theta.shape:
                raise ValueError(f"assignment shape {a.shape} does not match theta {self.theta.shape}")
            if not np.all((a == 0) | (a == 1)) or not np.all(a.sum(axis=1) == 1):
                raise ValueError("assignment rows must be one-hot")
        return self

    @classmethod
    def uniform(cls, channels: int, tau: float = 5.0, name: str = "theta") -> "MixedActivationState":
        return cls(theta=parameter(np.zeros((channels, 2), dtype=np.float32), name=name), tau=tau)

    @property
    def channels(self) -> int:
        return self.theta.shape[0]

    @property
    def is_finalized(self) -> bool:
        return self.assignment is not None

    def path_indices(self) -> np.ndarray:
        """Per-channel PathChoice values of the finalized assignment"""
        if self.assignment is None:
            raise ValidationError("assignment has not been finalized")
        return self.assignment.argmax(axis=1)

    def digital_ratio(self) -> float:
        return float(self.path_indices().mean())
