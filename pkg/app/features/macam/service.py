"""MACAM Feature - Device model: codebook, analog search, priority encoder, variation"""
import logging
from typing import Dict, Sequence, Union

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from app.features.macam.models import Codebook, DeviceReport, MtjLevelTable, VariationProfile
from app.shared.exceptions import ValidationError


logger = logging.getLogger("macam_workbench")

# Uniformly spaced stand-ins for the measured DW-MTJ levels
LEVEL_PRESETS: Dict[str, MtjLevelTable] = {
    "MACAM-1": MtjLevelTable(name="MACAM-1", boundary_voltages=(0.0, 1.0, 2.0, 3.0, 4.0)),
    "MACAM-2": MtjLevelTable(name="MACAM-2", boundary_voltages=(0.0, 2.0, 4.0)),
}


def make_level_table(name: str, boundaries: Sequence[float]) -> MtjLevelTable:
    """Build a level table, converting validation failures to workbench errors."""
    try:
        return MtjLevelTable(name=name, boundary_voltages=tuple(float(b) for b in boundaries))
    except PydanticValidationError as e:
        raise ValidationError(f"Invalid level table '{name}': {e.errors()[0]['msg']}")


def build_codebook(levels: Union[MtjLevelTable, Sequence[float]]) -> Codebook:
    """
    Compile boundary voltages into the interval codebook.

    Finite intervals [v_{j-1}, v_j) map to their midpoint; the overflow
    interval [v_{k-1}, inf) maps to v_{k-1}.
    """
    if not isinstance(levels, MtjLevelTable):
        levels = make_level_table("custom", levels)
    v = np.asarray(levels.boundary_voltages, dtype=np.float64)
    midpoints = (v[:-1] + v[1:]) / 2.0
    representatives = tuple(float(q) for q in midpoints) + (float(v[-1]),)
    return Codebook(boundaries=tuple(float(b) for b in v), representative_values=representatives)


def encode_array(x: np.ndarray, cb: Codebook) -> np.ndarray:
    """Vectorized priority encoder; exact boundaries resolve to the upper interval."""
    x = np.asarray(x)
    if np.any(x < 0):
        raise ValidationError("encode: inputs must be >= 0 (negative inputs are clipped upstream)")
    bounds = np.asarray(cb.boundaries, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    return np.searchsorted(bounds, x, side="right") - 1


def project_array(x: np.ndarray, cb: Codebook) -> np.ndarray:
    """Vectorized analog search projection Pi_Q."""
    x = np.asarray(x)
    q = np.asarray(cb.representative_values, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    return q[encode_array(x, cb)]


def encode(x: float, cb: Codebook) -> int:
    """0-based index of the interval containing x."""
    if x < 0:
        raise ValidationError(f"encode: input {x} is negative")
    return int(encode_array(np.asarray(x, dtype=np.float64), cb))


def project(x: float, cb: Codebook) -> float:
    """Representative value of the interval containing x."""
    if x < 0:
        raise ValidationError(f"project: input {x} is negative")
    return cb.representative_values[encode(x, cb)]


def characterize_variation(cb: Codebook, sigma_rel: float, n_samples: int, seed: int) -> VariationProfile:
    """
    Monte-Carlo estimate of interval-boundary spread under relative device variation.

    Each interior boundary v_j (j >= 1) is drawn n_samples times as v_j * (1 + eps),
    eps ~ N(0, sigma_rel^2). A finite interval takes the mean std of its perturbed
    bounds (v_0 is the bias reference and does not move); the overflow interval
    takes the std of v_{k-1}.
    """
    if sigma_rel < 0:
        raise ValidationError(f"sigma_rel must be >= 0, got {sigma_rel}")
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")

    rng = np.random.default_rng(seed)
    v = np.asarray(cb.boundaries, dtype=np.float64)
    boundary_sigma = np.zeros_like(v)
    if sigma_rel > 0:
        eps = rng.normal(0.0, sigma_rel, size=(n_samples, v.size - 1))
        samples = v[1:] * (1.0 + eps)
        boundary_sigma[1:] = samples.std(axis=0)

    per_interval = []
    for i in range(v.size - 1):
        adjacent = [boundary_sigma[j] for j in (i, i + 1) if j >= 1]
        per_interval.append(float(np.mean(adjacent)))
    per_interval.append(float(boundary_sigma[-1]))

    logger.debug(f"Variation sigma_rel={sigma_rel} n={n_samples}: per-interval {per_interval}")
    return VariationProfile(
        sigma_rel=sigma_rel,
        n_samples=n_samples,
        seed=seed,
        boundary_sigma=tuple(float(s) for s in boundary_sigma),
        per_interval_input_sigma=tuple(per_interval),
    )


class MacamService:
    """Service for device-level characterization runs"""

    def resolve_levels(self, name: str, tables: Dict[str, MtjLevelTable]) -> MtjLevelTable:
        if name in tables:
            return tables[name]
        if name in LEVEL_PRESETS:
            return LEVEL_PRESETS[name]
        raise ValidationError(f"Unknown MACAM design '{name}'")

    def device_report(self, levels: MtjLevelTable, sigma_rel: float, n_samples: int, seed: int) -> DeviceReport:
        """
        Build the codebook of a design and characterize its variation.

        Args:
            levels: Level table of the design
            sigma_rel: Relative device-to-device variation
            n_samples: Monte-Carlo draws
            seed: Random seed

        Returns:
            Device report ready to be serialized
        """
        logger.info(f"Characterizing {levels.name}: sigma_rel={sigma_rel}, n_samples={n_samples}")
        cb = build_codebook(levels)
        profile = characterize_variation(cb, sigma_rel, n_samples, seed)
        return DeviceReport(
            design=levels.name,
            boundaries=list(cb.boundaries),
            representative_values=list(cb.representative_values),
            sigma_rel=sigma_rel,
            n_samples=n_samples,
            seed=seed,
            boundary_sigma=list(profile.boundary_sigma),
            per_interval_input_sigma=list(profile.per_interval_input_sigma),
        )


# Global service instance
macam_service = MacamService()
