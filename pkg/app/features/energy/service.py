"""Energy Feature - Activation and A/D energy accounting"""
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.tensor import Tensor, ops
from app.features.activations.models import PathChoice
from app.features.energy.models import (
    AdcSpec,
    EnergyConstraint,
    EnergySummary,
    HardwareEnergyConfig,
    LayerEnergyTerms,
    LayerGeometry,
)
from app.shared.exceptions import InfeasibleConstraintError, ShapeMismatchError, ValidationError


logger = logging.getLogger("macam_workbench")

ADC_PRESETS = {
    "ADC-1": AdcSpec(bits=6, power_mw=1.26, latency_ns=8.0),
    "ADC-2": AdcSpec(bits=6, power_mw=14.0, latency_ns=1.33),
}

# Back-fitted against the ADC-1 all-digital baseline
MACAM_ENERGY_PRESETS = {
    "MACAM-1": 3.6e-15,
    "MACAM-2": 2.2e-15,
}

ROW_SUM_TOLERANCE = 1e-6

ChannelCounts = Tuple[int, int]


def build_hardware(
    adc: AdcSpec,
    e_anlg: float,
    adc_name: str = "ADC-1",
    macam_name: str = "MACAM-1",
    **overrides: Union[str, float],
) -> HardwareEnergyConfig:
    """
    Assemble a hardware energy config from an ADC design and a MACAM energy.

    The ADC energy feeds both the digital datapath (E_digi,adc) and the
    conventional partial-sum conversion (E_ADC) unless overridden.
    """
    values = {
        "e_anlg": e_anlg,
        "e_digi_adc": adc.energy_per_sample,
        "e_adc": adc.energy_per_sample,
        "adc_name": adc_name,
        "macam_name": macam_name,
    }
    values.update(overrides)
    return HardwareEnergyConfig(**values)


def default_hardware(adc_name: str = "ADC-1", macam_name: str = "MACAM-1") -> HardwareEnergyConfig:
    if adc_name not in ADC_PRESETS:
        raise ValidationError(f"Unknown ADC design '{adc_name}'")
    if macam_name not in MACAM_ENERGY_PRESETS:
        raise ValidationError(f"Unknown MACAM design '{macam_name}'")
    return build_hardware(ADC_PRESETS[adc_name], MACAM_ENERGY_PRESETS[macam_name], adc_name, macam_name)


def _check_layer_count(count: int, geoms: Sequence[LayerGeometry]) -> None:
    if count != len(geoms):
        raise ValidationError(f"Got {count} assignment layers for {len(geoms)} geometries")


def _check_weights(layer: int, a: np.ndarray, geom: LayerGeometry) -> None:
    if a.shape != (geom.c_o, 2):
        raise ShapeMismatchError(f"act_energy layer {layer}", a.shape, (geom.c_o, 2))
    if not np.allclose(a.sum(axis=1), 1.0, rtol=0.0, atol=ROW_SUM_TOLERANCE):
        raise ValidationError(f"act_energy layer {layer}: path weights must sum to 1 per channel")


def act_energy(
    assignments: Sequence[Union[np.ndarray, Tensor]],
    geoms: Sequence[LayerGeometry],
    hw: HardwareEnergyConfig,
    e_digi: Optional[float] = None,
) -> float:
    """
    Activation energy of an assignment: sum_l sum_b (a_b0 E_anlg + a_b1 E_digi) H'W'.

    Args:
        assignments: Per-layer (C_o, 2) path weights, hard (one-hot) or soft
        geoms: Per-layer geometry
        hw: Hardware energies
        e_digi: Digital datapath energy; defaults to the ADC cost used during search

    Returns:
        Energy in joules

    Raises:
        ValidationError: On a layer count mismatch or rows not summing to 1
    """
    _check_layer_count(len(assignments), geoms)
    e_digi = hw.e_digi_search if e_digi is None else e_digi

    total = 0.0
    for layer, (weights, geom) in enumerate(zip(assignments, geoms)):
        a = (weights.data if isinstance(weights, Tensor) else np.asarray(weights)).astype(np.float64)
        _check_weights(layer, a, geom)
        total += (a[:, 0].sum() * hw.e_anlg + a[:, 1].sum() * e_digi) * geom.spatial
    return float(total)


def all_digital_energy(geoms: Sequence[LayerGeometry], hw: HardwareEnergyConfig) -> float:
    """Activation energy of the fully digital assignment (normalization baseline)"""
    return float(sum(g.c_o * g.spatial for g in geoms) * hw.e_digi_search)


def normalize(energy: float, geoms: Sequence[LayerGeometry], hw: HardwareEnergyConfig) -> float:
    """Express an activation energy relative to the fully digital assignment."""
    baseline = all_digital_energy(geoms, hw)
    if baseline <= 0:
        raise ValidationError("Cannot normalize against a zero all-digital energy")
    return energy / baseline


def act_energy_tensor(
    weights: Sequence[Tensor],
    geoms: Sequence[LayerGeometry],
    hw: HardwareEnergyConfig,
    normalized: bool = True,
) -> Tensor:
    """
    Differentiable activation energy of soft path weights.

    Gradients flow back into each layer's Gumbel-Softmax weights. When
    `normalized` the result is divided by the all-digital baseline so it lives
    on the same scale as the energy constraint.
    """
    _check_layer_count(len(weights), geoms)
    unit = all_digital_energy(geoms, hw) if normalized else 1.0
    if unit <= 0:
        raise ValidationError("Cannot normalize against a zero all-digital energy")

    total: Optional[Tensor] = None
    for layer, (w, geom) in enumerate(zip(weights, geoms)):
        if w.shape != (geom.c_o, 2):
            raise ShapeMismatchError(f"act_energy layer {layer}", w.shape, (geom.c_o, 2))
        per_channel = np.array([hw.e_anlg, hw.e_digi_search], dtype=np.float64) * geom.spatial / unit
        coeff = np.broadcast_to(per_channel.astype(np.float32), (geom.c_o, 2)).copy()
        term = ops.tensor_sum(ops.mul(w, coeff))
        total = term if total is None else ops.add(total, term)
    return total


def _penalty_slope(energy: float, c: EnergyConstraint) -> float:
    if energy > c.upper_edge:
        return c.beta / c.upper_edge
    if energy < c.lower_edge:
        return -c.beta / c.lower_edge
    return 0.0


def energy_penalty(energy: float, c: EnergyConstraint) -> float:
    """
    Signed penalty keeping E inside [(1+gamma) E_min, (1-gamma) E_max].

    Above the band it is beta E / ((1-gamma) E_max), below it is
    -beta E / ((1+gamma) E_min), and zero on the closed band.
    """
    return _penalty_slope(energy, c) * energy


def energy_penalty_tensor(energy: Tensor, c: EnergyConstraint, reference: Optional[float] = None) -> Tensor:
    """
    Penalty on a differentiable (normalized) energy.

    The branch (above, inside or below the band) is picked by `reference`, or by
    the energy's own value when no reference is given.
    """
    return ops.scale(energy, _penalty_slope(energy.item() if reference is None else reference, c))


def check_feasible(c: EnergyConstraint, hw: HardwareEnergyConfig) -> None:
    """
    Reject bands no assignment can reach.

    Raises:
        InfeasibleConstraintError: If E_min lies above the all-digital energy or
            E_max below the all-analog energy (both normalized).
    """
    all_analog = hw.e_anlg / hw.e_digi_search
    if c.e_min > 1.0:
        raise InfeasibleConstraintError(
            f"E_min={c.e_min} lies above the all-digital activation energy (1.0 normalized)"
        )
    if c.e_max < all_analog:
        raise InfeasibleConstraintError(
            f"E_max={c.e_max} lies below the all-analog activation energy ({all_analog:.3g} normalized)"
        )


def channel_counts(paths: Sequence[np.ndarray]) -> List[ChannelCounts]:
    """(analog, digital) channel counts per layer from per-channel path indices"""
    counts = []
    for p in paths:
        p = np.asarray(p)
        digital = int(np.count_nonzero(p == PathChoice.DIGITAL))
        counts.append((int(p.size) - digital, digital))
    return counts


def layer_terms(
    geoms: Sequence[LayerGeometry],
    counts: Sequence[ChannelCounts],
    hw: HardwareEnergyConfig,
) -> List[LayerEnergyTerms]:
    """
    Per-layer mixed and conventional A/D + activation energy terms.

    Raises:
        ValidationError: If a layer's counts do not add up to C_o
    """
    _check_layer_count(len(counts), geoms)
    rows = []
    for layer, (geom, (n_anlg, n_digi)) in enumerate(zip(geoms, counts)):
        if n_anlg < 0 or n_digi < 0 or n_anlg + n_digi != geom.c_o:
            raise ValidationError(
                f"Layer {layer}: analog ({n_anlg}) + digital ({n_digi}) channels must equal C_o={geom.c_o}"
            )
        outputs = geom.c_o * geom.spatial
        act = (n_anlg * hw.e_anlg + n_digi * (hw.e_digi_adc + hw.e_digi_act)) * geom.spatial
        vcsel = hw.e_vcsel * outputs * geom.vdp_count
        pd = outputs * hw.e_pd
        conv_act = outputs * hw.e_digi_act
        conv_ad = (hw.e_adc + hw.e_sa + hw.e_pd) * outputs * geom.vdp_count
        rows.append(LayerEnergyTerms(
            layer=layer,
            c_o=geom.c_o,
            c_o_anlg=n_anlg,
            c_o_digi=n_digi,
            spatial=geom.spatial,
            vdp_count=geom.vdp_count,
            act_energy=act,
            vcsel_energy=vcsel,
            pd_energy=pd,
            mixed_total=act + vcsel + pd,
            conventional_act_energy=conv_act,
            conventional_ad_energy=conv_ad,
            conventional_total=conv_act + conv_ad,
        ))
    return rows


def system_energy_mixed(
    geoms: Sequence[LayerGeometry],
    counts: Sequence[ChannelCounts],
    hw: HardwareEnergyConfig,
) -> float:
    """A/D + activation energy of the mixed system, including summation-unit overhead (J)."""
    return float(sum(row.mixed_total for row in layer_terms(geoms, counts, hw)))


def system_energy_conventional(geoms: Sequence[LayerGeometry], hw: HardwareEnergyConfig) -> float:
    """A/D + activation energy when every partial sum is converted and activated digitally (J)."""
    total = 0.0
    for geom in geoms:
        outputs = geom.c_o * geom.spatial
        total += outputs * hw.e_digi_act + (hw.e_adc + hw.e_sa + hw.e_pd) * outputs * geom.vdp_count
    return float(total)


class EnergyService:
    """Service for energy reports over a finalized assignment"""

    def report(
        self,
        geoms: Sequence[LayerGeometry],
        paths: Sequence[np.ndarray],
        hw: HardwareEnergyConfig,
    ) -> Tuple[List[LayerEnergyTerms], EnergySummary]:
        """
        Evaluate every energy view of one assignment.

        Args:
            geoms: Per-layer geometry
            paths: Per-layer per-channel path indices (0 analog, 1 digital)
            hw: Hardware energies

        Returns:
            Per-layer terms (CSV rows) and the summary totals
        """
        _check_layer_count(len(paths), geoms)
        one_hot = []
        for layer, (p, geom) in enumerate(zip(paths, geoms)):
            p = np.asarray(p, dtype=np.int64)
            if p.shape != (geom.c_o,):
                raise ShapeMismatchError(f"energy report layer {layer}", p.shape, (geom.c_o,))
            one_hot.append(np.eye(2, dtype=np.float64)[p])

        counts = channel_counts(paths)
        rows = layer_terms(geoms, counts, hw)
        e_act = act_energy(one_hot, geoms, hw)
        mixed = float(sum(row.mixed_total for row in rows))
        conventional = system_energy_conventional(geoms, hw)
        summary = EnergySummary(
            adc_name=hw.adc_name,
            macam_name=hw.macam_name,
            act_energy=e_act,
            act_energy_all_digital=all_digital_energy(geoms, hw),
            normalized_act_energy=normalize(e_act, geoms, hw),
            mixed_total=mixed,
            conventional_total=conventional,
            saving=1.0 - mixed / conventional if conventional > 0 else 0.0,
            digital_ratio=[n_digi / (n_anlg + n_digi) for n_anlg, n_digi in counts],
        )
        logger.info(
            f"Energy report ({hw.adc_name}/{hw.macam_name}): normalized E_act={summary.normalized_act_energy:.5g}, "
            f"mixed={mixed:.4g} J, conventional={conventional:.4g} J"
        )
        return rows, summary


energy_service = EnergyService()
