"""Workbench Feature - Run configuration, datasets and metrics records"""
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from app.features.energy.models import AdcSpec, EnergyConstraint, EnergyValue, HardwareEnergyConfig, energy_field
from app.features.energy.service import ADC_PRESETS, MACAM_ENERGY_PRESETS, build_hardware
from app.features.macam.models import MtjLevelTable
from app.features.macam.service import macam_service, make_level_table
from app.features.supermixer.models import AccuracyStats, ModelSpec, NoiseSpec, PhaseSchedule
from app.shared.exceptions import ValidationError


Phase = Literal["warmup", "search", "retrain", "eval"]


class MacamTable(BaseModel):
    """User-defined MACAM design: boundary voltages and analog activation energy"""
    model_config = ConfigDict(extra="forbid")

    boundaries: List[float] = Field(..., min_length=2, description="v_0 = 0 < v_1 < ... < v_{k-1}")
    e_anlg: float = Field(..., ge=0, description="Analog activation energy per output (J)")

    @field_validator("e_anlg", mode="before")
    @classmethod
    def parse_e_anlg(cls, value: EnergyValue) -> float:
        return energy_field(value)


class HardwareSection(BaseModel):
    """[hardware]: which ADC / MACAM designs to use plus summation-unit energies"""
    model_config = ConfigDict(extra="forbid")

    adc_name: str = Field("ADC-1", description="Preset or [hardware.adc.<name>] table")
    macam_name: str = Field("MACAM-1", description="Preset or [hardware.macam.<name>] table")
    adc: Dict[str, AdcSpec] = Field(default_factory=dict)
    macam: Dict[str, MacamTable] = Field(default_factory=dict)
    e_digi_act: float = Field(0.0, ge=0)
    e_vcsel: float = Field(0.0, ge=0)
    e_pd: float = Field(0.0, ge=0)
    e_sa: float = Field(0.0, ge=0)
    e_adc: Optional[float] = Field(None, ge=0, description="Partial-sum ADC energy; defaults to the ADC design")

    _energy: HardwareEnergyConfig = PrivateAttr()
    _levels: MtjLevelTable = PrivateAttr()

    @field_validator("e_digi_act", "e_vcsel", "e_pd", "e_sa", "e_adc", mode="before")
    @classmethod
    def parse_energies(cls, value: Optional[EnergyValue]) -> Optional[float]:
        return None if value is None else energy_field(value)

    @model_validator(mode="after")
    def resolve_designs(self) -> "HardwareSection":
        if self.adc_name in self.adc:
            adc = self.adc[self.adc_name]
        elif self.adc_name in ADC_PRESETS:
            adc = ADC_PRESETS[self.adc_name]
        else:
            raise ValueError(f"adc_name '{self.adc_name}' names no preset or [hardware.adc] table")

        try:
            custom = {name: make_level_table(name, table.boundaries) for name, table in self.macam.items()}
            levels = macam_service.resolve_levels(self.macam_name, custom)
        except ValidationError as e:
            raise ValueError(e.detail)
        if self.macam_name in self.macam:
            e_anlg = self.macam[self.macam_name].e_anlg
        else:
            e_anlg = MACAM_ENERGY_PRESETS[self.macam_name]

        overrides = {"e_digi_act": self.e_digi_act, "e_vcsel": self.e_vcsel, "e_pd": self.e_pd, "e_sa": self.e_sa}
        if self.e_adc is not None:
            overrides["e_adc"] = self.e_adc
        try:
            self._energy = build_hardware(adc, e_anlg, self.adc_name, self.macam_name, **overrides)
        except PydanticValidationError as e:
            raise ValueError(e.errors()[0]["msg"])
        self._levels = levels
        return self

    @property
    def energy(self) -> HardwareEnergyConfig:
        return self._energy

    @property
    def levels(self) -> MtjLevelTable:
        return self._levels


class DatasetSection(BaseModel):
    """[dataset]: synthetic blobs or IDX files"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["synthetic", "idx"] = "synthetic"
    classes: int = Field(10, ge=2)
    samples_per_class: int = Field(64, ge=1)
    image_size: int = Field(16, ge=1)
    noise: float = Field(0.3, ge=0, description="Pixel noise of the synthetic blobs")
    test_fraction: float = Field(0.25, gt=0, lt=1, description="Held-out share when no test files are given")
    train_images: Optional[Path] = None
    train_labels: Optional[Path] = None
    test_images: Optional[Path] = None
    test_labels: Optional[Path] = None

    @model_validator(mode="after")
    def check_paths(self) -> "DatasetSection":
        if self.kind == "idx" and (self.train_images is None or self.train_labels is None):
            raise ValueError("idx datasets need train_images and train_labels")
        if (self.test_images is None) != (self.test_labels is None):
            raise ValueError("test_images and test_labels must be given together")
        return self


def _default_constraint() -> EnergyConstraint:
    return EnergyConstraint(e_min=0.15, e_max=0.25)


class RunConfig(BaseModel):
    """Fully validated run configuration; named hardware tables are resolved on load"""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)
    hardware: HardwareSection = Field(default_factory=HardwareSection)
    model: ModelSpec = Field(default_factory=ModelSpec)
    schedule: PhaseSchedule = Field(default_factory=PhaseSchedule)
    constraint: EnergyConstraint = Field(default_factory=_default_constraint)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    dataset: DatasetSection = Field(default_factory=DatasetSection)

    @model_validator(mode="after")
    def check_cross_references(self) -> "RunConfig":
        if self.dataset.kind == "synthetic":
            if self.dataset.image_size != self.model.image_size:
                raise ValueError(
                    f"dataset.image_size ({self.dataset.image_size}) differs from model.image_size ({self.model.image_size})"
                )
            if self.dataset.classes != self.model.num_classes:
                raise ValueError(
                    f"dataset.classes ({self.dataset.classes}) differs from model.num_classes ({self.model.num_classes})"
                )
        if self.model.input_channels != 1:
            raise ValueError("model.input_channels must be 1 for grayscale datasets")
        return self

    @property
    def hw(self) -> HardwareEnergyConfig:
        return self.hardware.energy

    @property
    def levels(self) -> MtjLevelTable:
        return self.hardware.levels


class Dataset(BaseModel):
    """Images (N, 1, H, W) in [0, 1] with integer labels"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: np.ndarray
    labels: np.ndarray
    num_classes: int = Field(..., ge=1)

    @model_validator(mode="after")
    def check_arrays(self) -> "Dataset":
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(f"{self.images.shape[0]} images but labels of shape {self.labels.shape}")
        return self

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_size(self) -> int:
        return int(self.images.shape[-1])

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(images=self.images[index], labels=self.labels[index], num_classes=self.num_classes)

    def batches(
        self,
        batch_size: int,
        rng: Optional[np.random.Generator] = None,
    ) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Mini-batches in order, or shuffled when a random stream is given"""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            index = order[start:start + batch_size]
            yield self.images[index], self.labels[index]


class MetricsRecord(BaseModel):
    """One line of the metrics stream: a single epoch of a single phase"""
    phase: Phase
    epoch: int = Field(..., ge=0)
    step: Optional[Literal["weights", "theta"]] = Field(None, description="Search epoch kind")
    task_loss: Optional[float] = None
    penalty: float = 0.0
    normalized_energy: Optional[float] = Field(None, description="Expected E_act(A) under softmax(theta) / E_act(all-digital)")
    soft_energy: Optional[float] = Field(None, description="Mean normalized energy of the relaxed path weights (theta-epochs)")
    tau: Optional[float] = None
    learning_rate: Optional[float] = None
    accuracy: Optional[float] = None
    digital_ratio: List[float] = Field(default_factory=list)


class PhaseSummary(BaseModel):
    """Final summary of one command"""
    phase: str
    seed: int
    epochs: int = 0
    final_task_loss: Optional[float] = None
    accuracy: Optional[AccuracyStats] = None
    noisy_accuracy: Optional[AccuracyStats] = None
    normalized_energy: Optional[float] = Field(None, description="Normalized E_act of the hard assignment")
    digital_ratio: List[float] = Field(default_factory=list)
    alphas: List[float] = Field(default_factory=list)
    workbench_version: str = ""


class VariantResult(BaseModel):
    alpha_mode: str
    accuracy: AccuracyStats
    alphas: List[float]
