"""MACAM Feature - Pydantic Models"""
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class MtjLevelTable(BaseModel):
    """Match-interval boundary voltages of one MACAM design (normalized frame, v_0 = 0)"""
    model_config = ConfigDict(frozen=True, json_schema_extra={
        "example": {
            "name": "MACAM-1",
            "boundary_voltages": [0.0, 1.0, 2.0, 3.0, 4.0]
        }
    })

    name: str = Field(..., description="Design name, e.g. MACAM-1")
    boundary_voltages: Tuple[float, ...] = Field(..., description="Strictly increasing boundaries v_0..v_{k-1} (volts)")

    @field_validator("boundary_voltages")
    @classmethod
    def check_boundaries(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(value) < 2:
            raise ValueError("at least 2 boundaries are required (one finite interval)")
        if value[0] != 0.0:
            raise ValueError(f"v_0 must be 0 in the biased frame, got {value[0]}")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"boundaries must be strictly increasing, got {list(value)}")
        return value

    @property
    def interval_count(self) -> int:
        """Finite intervals plus the overflow interval"""
        return len(self.boundary_voltages)


class Codebook(BaseModel):
    """Interval boundaries and per-interval representative values"""
    model_config = ConfigDict(frozen=True)

    boundaries: Tuple[float, ...] = Field(..., description="v_0..v_{k-1}")
    representative_values: Tuple[float, ...] = Field(..., description="q_1..q_k; overflow maps to v_{k-1}")

    @model_validator(mode="after")
    def check_consistency(self) -> "Codebook":
        if len(self.representative_values) != len(self.boundaries):
            raise ValueError("one representative per finite interval plus one for overflow is required")
        q = self.representative_values
        if any(b <= a for a, b in zip(q, q[1:])):
            raise ValueError("representative values must be strictly increasing")
        for j in range(len(self.boundaries) - 1):
            if not self.boundaries[j] < q[j] < self.boundaries[j + 1]:
                raise ValueError(f"representative {q[j]} lies outside interval {j}")
        return self

    @property
    def c(self) -> float:
        """Search-range upper bound (last boundary)"""
        return self.boundaries[-1]

    @property
    def size(self) -> int:
        return len(self.representative_values)


class VariationProfile(BaseModel):
    """Monte-Carlo characterization of device-to-device boundary variation"""
    model_config = ConfigDict(frozen=True)

    sigma_rel: float = Field(..., ge=0, description="Relative std of boundary perturbation")
    n_samples: int = Field(..., ge=1, description="Monte-Carlo draws per boundary")
    seed: int = Field(..., description="Seed of the random stream")
    boundary_sigma: Tuple[float, ...] = Field(..., description="Empirical std per boundary (v_0 fixed at 0)")
    per_interval_input_sigma: Tuple[float, ...] = Field(..., description="Equivalent additive input noise per interval (volts)")

    @model_validator(mode="after")
    def check_zero_noise(self) -> "VariationProfile":
        if self.sigma_rel == 0 and any(s != 0 for s in self.per_interval_input_sigma):
            raise ValueError("sigma_rel = 0 requires all per-interval sigmas to be zero")
        return self


class DeviceReport(BaseModel):
    """Report emitted by the device Monte-Carlo command"""
    design: str
    boundaries: List[float]
    representative_values: List[float]
    sigma_rel: float
    n_samples: int
    seed: int
    boundary_sigma: List[float]
    per_interval_input_sigma: List[float]
