"""Energy Feature - Pydantic Models"""
import math
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.shared.exceptions import ValidationError
from app.shared.utils.unit_utils import parse_energy


EnergyValue = Union[str, float, int]


def energy_field(value: EnergyValue) -> float:
    """Field-validator form of parse_energy; failures surface under the field's key path."""
    try:
        return parse_energy(value)
    except ValidationError as e:
        raise ValueError(e.detail)


class AdcSpec(BaseModel):
    """One ADC design; per-sample energy is power x latency unless given directly"""
    model_config = ConfigDict(frozen=True, extra="forbid", json_schema_extra={
        "example": {"bits": 6, "sample_rate_gsps": 1.0, "power_mw": 1.26, "latency_ns": 8.0}
    })

    bits: int = Field(6, ge=1, le=16, description="Resolution")
    sample_rate_gsps: Optional[float] = Field(None, gt=0, description="Sampling rate (GS/s), informational")
    power_mw: Optional[float] = Field(None, ge=0, description="Power (mW)")
    latency_ns: Optional[float] = Field(None, ge=0, description="Conversion latency (ns)")
    energy: Optional[float] = Field(None, ge=0, description="Per-sample energy override (J)")

    @field_validator("energy", mode="before")
    @classmethod
    def parse_energy_field(cls, value: Optional[EnergyValue]) -> Optional[float]:
        return None if value is None else energy_field(value)

    @model_validator(mode="after")
    def check_source(self) -> "AdcSpec":
        if self.energy is None and (self.power_mw is None or self.latency_ns is None):
            raise ValueError("either energy or both power_mw and latency_ns are required")
        return self

    @property
    def energy_per_sample(self) -> float:
        if self.energy is not None:
            return self.energy
        return self.power_mw * 1e-3 * self.latency_ns * 1e-9


class HardwareEnergyConfig(BaseModel):
    """Per-event energies (J) of both activation datapaths and the summation unit"""
    model_config = ConfigDict(frozen=True, extra="forbid", json_schema_extra={
        "example": {
            "e_anlg": "3.6fJ",
            "e_digi_adc": "10.08pJ",
            "e_digi_act": 0.0,
            "e_vcsel": 0.0,
            "e_pd": 0.0,
            "e_adc": "10.08pJ",
            "e_sa": 0.0,
            "adc_name": "ADC-1",
            "macam_name": "MACAM-1"
        }
    })

    e_anlg: float = Field(..., ge=0, description="MACAM analog activation energy per output")
    e_digi_adc: float = Field(..., ge=0, description="ADC energy of the digital datapath per output")
    e_digi_act: float = Field(0.0, ge=0, description="Digital activation unit energy per output")
    e_vcsel: float = Field(0.0, ge=0, description="VCSEL energy per partial sum")
    e_pd: float = Field(0.0, ge=0, description="Photodetector energy per output")
    e_adc: float = Field(..., ge=0, description="ADC energy per partial sum (conventional system)")
    e_sa: float = Field(0.0, ge=0, description="Sample-and-hold energy per partial sum")
    adc_name: str = Field("ADC-1", description="ADC design the energies came from")
    macam_name: str = Field("MACAM-1", description="MACAM design the energies came from")

    @field_validator("e_anlg", "e_digi_adc", "e_digi_act", "e_vcsel", "e_pd", "e_adc", "e_sa", mode="before")
    @classmethod
    def parse_energies(cls, value: EnergyValue) -> float:
        return energy_field(value)

    @model_validator(mode="after")
    def check_premise(self) -> "HardwareEnergyConfig":
        if not self.e_anlg < self.e_digi_adc:
            raise ValueError(
                f"analog activation energy ({self.e_anlg:g} J) must be below the ADC energy ({self.e_digi_adc:g} J)"
            )
        return self

    @property
    def e_digi_search(self) -> float:
        """Digital datapath energy used while searching (ADC cost only)"""
        return self.e_digi_adc


class LayerGeometry(BaseModel):
    """Shape of one conv/FC layer as seen by the VDP engine"""
    model_config = ConfigDict(frozen=True)

    c_o: int = Field(..., ge=1, description="Output channels (filters)")
    c_i: int = Field(..., ge=1, description="Input channels")
    k: int = Field(1, ge=1, description="Kernel size (1 for FC)")
    h_out: int = Field(1, ge=1, description="Output height H'")
    w_out: int = Field(1, ge=1, description="Output width W'")
    n: int = Field(128, ge=1, description="VDP vector length N")

    @property
    def spatial(self) -> int:
        """H' * W'"""
        return self.h_out * self.w_out

    @property
    def vdp_count(self) -> int:
        """ceil(C_i k^2 / N) partial sums per output"""
        return math.ceil(self.c_i * self.k * self.k / self.n)


class EnergyConstraint(BaseModel):
    """Normalized activation-energy band and penalty parameters"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    e_min: float = Field(..., ge=0, description="Lower bound of the normalized band")
    e_max: float = Field(..., gt=0, description="Upper bound of the normalized band")
    beta: float = Field(0.6, ge=0, description="Penalty strength")
    gamma: float = Field(0.05, ge=0, lt=1, description="Margin tightening the band")

    @model_validator(mode="after")
    def check_band(self) -> "EnergyConstraint":
        if not self.e_min < self.e_max:
            raise ValueError(f"e_min ({self.e_min}) must be below e_max ({self.e_max})")
        return self

    @property
    def lower_edge(self) -> float:
        return (1 + self.gamma) * self.e_min

    @property
    def upper_edge(self) -> float:
        return (1 - self.gamma) * self.e_max


class LayerEnergyTerms(BaseModel):
    """Per-layer terms of the mixed and conventional A/D + activation energy"""
    layer: int
    c_o: int
    c_o_anlg: int
    c_o_digi: int
    spatial: int
    vdp_count: int
    act_energy: float = Field(..., description="(C_anlg E_anlg + C_digi (E_adc + E_act)) H'W'")
    vcsel_energy: float = Field(..., description="E_VCSEL C_o H'W' ceil(C_i k^2/N)")
    pd_energy: float = Field(..., description="C_o H'W' E_PD")
    mixed_total: float
    conventional_act_energy: float = Field(..., description="C_o H'W' E_act")
    conventional_ad_energy: float = Field(..., description="(E_ADC + E_S+A + E_PD) C_o H'W' ceil(C_i k^2/N)")
    conventional_total: float


class EnergySummary(BaseModel):
    """Totals of one energy report"""
    adc_name: str
    macam_name: str
    act_energy: float = Field(..., description="Search-time activation energy of the assignment (J)")
    act_energy_all_digital: float
    normalized_act_energy: float
    mixed_total: float
    conventional_total: float
    saving: float = Field(..., description="1 - mixed/conventional")
    digital_ratio: list[float]
