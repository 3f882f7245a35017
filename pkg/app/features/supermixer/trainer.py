"""Supermixer Feature - Warmup, search and variation-aware retraining"""
import asyncio
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.tensor import SGD, Adam, ops
from app.features.activations import kernels
from app.features.activations.models import PathChoice
from app.features.activations.service import MixMode, finalize_assignment
from app.features.energy.models import EnergyConstraint, HardwareEnergyConfig
from app.features.energy.service import (
    act_energy,
    act_energy_tensor,
    check_feasible,
    energy_penalty_tensor,
    normalize,
)
from app.features.macam.models import VariationProfile
from app.features.macam.service import characterize_variation
from app.features.supermixer.models import AccuracyStats, NoiseSpec, PhaseSchedule
from app.features.supermixer.network import SuperMixerNet
from app.features.workbench.models import Dataset, MetricsRecord
from app.shared.exceptions import ValidationError


logger = logging.getLogger("macam_workbench")

MetricsSink = Callable[[MetricsRecord], None]
EVAL_BATCH_SIZE = 256


def tau_schedule(epoch: int, schedule: PhaseSchedule) -> float:
    """
    Geometric temperature decay from tau_start (first epoch) to tau_end (last epoch).

    Raises:
        ValidationError: If search_epochs < 2 or the epoch is out of range
    """
    total = schedule.search_epochs
    if total < 2:
        raise ValidationError(f"tau schedule needs at least 2 search epochs, got {total}")
    if not 0 <= epoch < total:
        raise ValidationError(f"epoch {epoch} outside [0, {total})")
    if epoch == total - 1:
        return schedule.tau_end
    return schedule.tau_start * (schedule.tau_end / schedule.tau_start) ** (epoch / (total - 1))


def _emit(sink: Optional[MetricsSink], record: MetricsRecord) -> None:
    logger.info(
        f"[{record.phase}] epoch {record.epoch}"
        f"{f' ({record.step})' if record.step else ''}: loss={record.task_loss:.4f}"
        f"{f' L_E={record.penalty:.4f}' if record.penalty else ''}"
        f"{f' E_act={record.normalized_energy:.4f}' if record.normalized_energy is not None else ''}"
        f"{f' tau={record.tau:.3f}' if record.tau is not None else ''}"
    )
    if sink is not None:
        sink(record)


def _check_data(data: Dataset, model: SuperMixerNet) -> None:
    if len(data) == 0:
        raise ValidationError("Dataset is empty")
    if data.image_size != model.spec.image_size:
        raise ValidationError(f"Dataset images are {data.image_size}px, model expects {model.spec.image_size}px")


def train_epoch(
    model: SuperMixerNet,
    data: Dataset,
    optimizer: SGD,
    rng: np.random.Generator,
    batch_size: int,
    energy: Optional[Tuple[EnergyConstraint, HardwareEnergyConfig]] = None,
) -> Tuple[float, float, float]:
    """
    One pass over the data updating the optimizer's parameters.

    With `energy`, the loss is L + L_E where L_E penalizes the normalized soft
    activation energy of the Gumbel weights drawn in the same forward pass. The
    penalty branch follows the expected energy of the assignment distribution,
    and L_E is applied once per searchable channel so every logit feels a force
    of order beta / edge whatever the network width.

    Returns:
        (mean task loss, mean penalty, mean normalized soft activation energy)
    """
    geoms = model.geometries()
    channels = sum(site.channels for site in model.sites)
    losses, penalties, energies = [], [], []
    for images, labels in data.batches(batch_size, rng):
        logits = model(images, rng)
        loss = ops.softmax_cross_entropy(logits, labels)
        total = loss
        if energy is not None:
            constraint, hw = energy
            e_act = act_energy_tensor(model.soft_weights(), geoms, hw)
            penalty = energy_penalty_tensor(e_act, constraint, reference=expected_energy(model, hw))
            total = ops.add(loss, ops.scale(penalty, float(channels)))
            penalties.append(penalty.item())
            energies.append(e_act.item())

        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        model.project_alphas()
        losses.append(loss.item())
        logger.debug(f"batch loss={losses[-1]:.4f}")

    mean_energy = float(np.mean(energies)) if energies else float("nan")
    return float(np.mean(losses)), float(np.mean(penalties)) if penalties else 0.0, mean_energy


def expected_energy(model: SuperMixerNet, hw: HardwareEnergyConfig) -> float:
    """Normalized E_act of an assignment drawn from softmax(theta), in expectation"""
    geoms = model.geometries()
    probs = [kernels.softmax(site.state.theta.data.astype(np.float64)) for site in model.sites]
    return normalize(act_energy(probs, geoms, hw), geoms, hw)


def _digital_share(model: SuperMixerNet) -> List[float]:
    """Per-layer expected share of digital channels under softmax(theta)"""
    return [float(kernels.softmax(site.state.theta.data)[:, 1].mean()) for site in model.sites]


def hard_energy(model: SuperMixerNet, hw: HardwareEnergyConfig) -> float:
    """Normalized E_act of the finalized assignment"""
    geoms = model.geometries()
    one_hot = [site.state.assignment for site in model.sites]
    return normalize(act_energy(one_hot, geoms, hw), geoms, hw)


def _band(constraint: EnergyConstraint) -> Tuple[float, float]:
    """Margin-tightened band, or the plain band when the margins cross"""
    if constraint.lower_edge <= constraint.upper_edge:
        return constraint.lower_edge, constraint.upper_edge
    return constraint.e_min, constraint.e_max


def fit_assignment_to_band(model: SuperMixerNet, constraint: EnergyConstraint, hw: HardwareEnergyConfig) -> int:
    """
    Switch channels of a finalized assignment until its energy lies in the band.

    Channels are ranked by theta_digital - theta_analog. Below the band the most
    digital-leaning analog channels move to the digital path; above it the most
    analog-leaning digital channels move to the analog path. A switch that would
    jump past the opposite edge is skipped. An assignment already in the band is
    left unchanged.

    Returns:
        Number of channels switched
    """
    lower, upper = _band(constraint)
    energy = hard_energy(model, hw)
    if lower <= energy <= upper:
        return 0

    geoms = model.geometries()
    unit = normalize(1.0, geoms, hw)
    to_digital = energy < lower
    source = PathChoice.ANALOG if to_digital else PathChoice.DIGITAL
    paths = model.assignment_paths()

    candidates = []
    for layer, (site, geom) in enumerate(zip(model.sites, geoms)):
        theta = site.state.theta.data.astype(np.float64)
        lean = theta[:, PathChoice.DIGITAL] - theta[:, PathChoice.ANALOG]
        step = (hw.e_digi_search - hw.e_anlg) * geom.spatial * unit
        for channel in np.flatnonzero(paths[layer] == source):
            candidates.append((-lean[channel] if to_digital else lean[channel], layer, int(channel), step))
    candidates.sort(key=lambda item: item[:3])

    switched = 0
    for _, layer, channel, step in candidates:
        if lower <= energy <= upper:
            break
        if to_digital and energy + step > upper:
            continue
        if not to_digital and energy - step < lower:
            continue
        paths[layer][channel] = PathChoice.DIGITAL if to_digital else PathChoice.ANALOG
        energy += step if to_digital else -step
        switched += 1

    model.load_assignment(paths)
    energy = hard_energy(model, hw)
    if lower <= energy <= upper:
        logger.info(f"Switched {switched} channels to bring E_act into [{lower:.4f}, {upper:.4f}]: {energy:.4f}")
    else:
        logger.warning(f"Assignment energy {energy:.4f} stays outside [{lower:.4f}, {upper:.4f}] after {switched} switches")
    return switched


def run_warmup(
    model: SuperMixerNet,
    data: Dataset,
    schedule: PhaseSchedule,
    rng: np.random.Generator,
    sink: Optional[MetricsSink] = None,
) -> SuperMixerNet:
    """
    Train W and alpha on the task loss with frozen uniform 0.5/0.5 path mixing.

    theta is frozen and left untouched.
    """
    _check_data(data, model)
    model.set_mode(MixMode.UNIFORM)
    model.freeze(thetas=True)
    optimizer = SGD(model.weight_params() + model.alpha_params(), schedule.lr0, schedule.momentum, schedule.warmup_epochs)

    for epoch in range(schedule.warmup_epochs):
        optimizer.set_epoch(epoch)
        lr = optimizer.lr
        loss, _, _ = train_epoch(model, data, optimizer, rng, schedule.batch_size)
        _emit(sink, MetricsRecord(phase="warmup", epoch=epoch, task_loss=loss, learning_rate=lr))
    return model


def run_search(
    model: SuperMixerNet,
    data: Dataset,
    schedule: PhaseSchedule,
    constraint: EnergyConstraint,
    hw: HardwareEnergyConfig,
    rng: np.random.Generator,
    sink: Optional[MetricsSink] = None,
) -> SuperMixerNet:
    """
    Alternate weight-epochs (W, alpha on L) and theta-epochs (theta on L + L_E),
    decaying tau geometrically, then finalize the hard assignment.

    Raises:
        InfeasibleConstraintError: If no assignment can satisfy the energy band
    """
    _check_data(data, model)
    check_feasible(constraint, hw)
    model.set_mode(MixMode.SEARCH)
    total = schedule.search_epochs
    weight_opt = SGD(model.weight_params() + model.alpha_params(), schedule.lr0, schedule.momentum, total)
    theta_opt = Adam(model.theta_params(), schedule.theta_lr)

    for epoch in range(total):
        tau = tau_schedule(epoch, schedule)
        model.set_tau(tau)
        soft_energy = None
        if schedule.is_theta_epoch(epoch):
            model.freeze(weights=True, alphas=True)
            theta_opt.set_epoch(epoch)
            lr = theta_opt.lr
            loss, penalty, soft_energy = train_epoch(
                model, data, theta_opt, rng, schedule.batch_size, energy=(constraint, hw)
            )
            step = "theta"
        else:
            model.freeze(thetas=True)
            weight_opt.set_epoch(epoch)
            lr = weight_opt.lr
            loss, penalty, _ = train_epoch(model, data, weight_opt, rng, schedule.batch_size)
            step = "weights"
        _emit(sink, MetricsRecord(
            phase="search",
            epoch=epoch,
            step=step,
            task_loss=loss,
            penalty=penalty,
            normalized_energy=expected_energy(model, hw),
            soft_energy=soft_energy,
            tau=tau,
            learning_rate=lr,
            digital_ratio=_digital_share(model),
        ))

    for site in model.sites:
        finalize_assignment(site.state, schedule.finalize, rng)
    model.set_mode(MixMode.FINAL)
    model.freeze(thetas=True)
    if schedule.fit_to_band:
        fit_assignment_to_band(model, constraint, hw)
    logger.info(
        f"Finalized assignment: normalized E_act={hard_energy(model, hw):.4f}, "
        f"digital ratio per layer {[round(r, 3) for r in model.digital_ratios()]}"
    )
    return model


def _variation(model: SuperMixerNet, noise: NoiseSpec, seed: int) -> Optional[VariationProfile]:
    if noise.macam_sigma <= 0:
        return None
    return characterize_variation(model.analog_cfg.codebook, noise.macam_sigma, noise.mc_samples, seed)


def run_retrain(
    model: SuperMixerNet,
    data: Dataset,
    schedule: PhaseSchedule,
    noise: NoiseSpec,
    rng: np.random.Generator,
    seed: int = 0,
    sink: Optional[MetricsSink] = None,
) -> SuperMixerNet:
    """
    Variation-aware retraining of W and alpha on the finalized assignment.

    Every forward pass draws fresh multiplicative weight noise and MACAM
    per-interval input noise; theta is untouched.

    Raises:
        ValidationError: If any activation site has no finalized assignment
    """
    _check_data(data, model)
    if not all(site.state.is_finalized for site in model.sites):
        raise ValidationError("Retraining requires a finalized assignment")

    model.set_mode(MixMode.FINAL)
    model.set_noise(noise.weight_sigma, _variation(model, noise, seed))
    model.freeze(thetas=True)
    optimizer = SGD(model.weight_params() + model.alpha_params(), schedule.lr0, schedule.momentum, schedule.retrain_epochs)
    digital_ratio = model.digital_ratios()

    try:
        for epoch in range(schedule.retrain_epochs):
            optimizer.set_epoch(epoch)
            lr = optimizer.lr
            loss, _, _ = train_epoch(model, data, optimizer, rng, schedule.batch_size)
            _emit(sink, MetricsRecord(
                phase="retrain", epoch=epoch, task_loss=loss, learning_rate=lr, digital_ratio=digital_ratio,
            ))
    finally:
        model.set_noise(0.0, None)
    return model


def _accuracy(model: SuperMixerNet, data: Dataset, rng: np.random.Generator) -> float:
    correct = 0
    with model.inference():
        for images, labels in data.batches(EVAL_BATCH_SIZE):
            logits = model(images, rng)
            correct += int(np.count_nonzero(logits.data.argmax(axis=1) == labels))
    return correct / len(data)


def run_seeds(seed: int, runs: int) -> List[int]:
    """Independent per-run seeds derived from the master seed"""
    children = np.random.SeedSequence(seed).spawn(runs)
    return [int(child.generate_state(1)[0]) for child in children]


def _noisy_run(
    model: SuperMixerNet,
    data: Dataset,
    noise: NoiseSpec,
    variation: Optional[VariationProfile],
    run_seed: int,
) -> float:
    model.set_noise(noise.weight_sigma, variation)
    return _accuracy(model, data, np.random.default_rng(run_seed))


def _stats(accuracies: Sequence[float]) -> AccuracyStats:
    values = np.asarray(accuracies, dtype=np.float64)
    return AccuracyStats(mean=float(values.mean()), std=float(values.std()), runs=len(values), accuracies=list(accuracies))


def evaluate(
    model: SuperMixerNet,
    data: Dataset,
    noise: Optional[NoiseSpec] = None,
    runs: int = 1,
    seed: int = 0,
) -> AccuracyStats:
    """
    Classification accuracy.

    Without noise a single deterministic pass is made. With noise, `runs`
    evaluations each draw device noise from their own derived seed.

    Raises:
        ValidationError: On an empty dataset or runs < 1
    """
    _check_data(data, model)
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs}")
    if noise is None:
        return _stats([_accuracy(model, data, np.random.default_rng(seed))])

    variation = _variation(model, noise, seed)
    accuracies = [_noisy_run(model.clone(), data, noise, variation, s) for s in run_seeds(seed, runs)]
    stats = _stats(accuracies)
    logger.info(f"Noisy evaluation over {runs} runs: {stats.mean:.4f} +/- {stats.std:.4f}")
    return stats


async def evaluate_async(
    model: SuperMixerNet,
    data: Dataset,
    noise: NoiseSpec,
    runs: int,
    seed: int = 0,
    workers: int = 4,
) -> AccuracyStats:
    """
    Noisy evaluation with runs fanned out to worker threads.

    Each run owns a cloned network and its derived seed, so results match
    `evaluate` and are returned in run order.
    """
    _check_data(data, model)
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs}")
    variation = _variation(model, noise, seed)
    semaphore = asyncio.Semaphore(max(1, workers))

    async def one_run(run_seed: int) -> float:
        async with semaphore:
            return await asyncio.to_thread(_noisy_run, model.clone(), data, noise, variation, run_seed)

    accuracies = await asyncio.gather(*(one_run(s) for s in run_seeds(seed, runs)))
    stats = _stats(accuracies)
    logger.info(f"Noisy evaluation over {runs} runs ({workers} workers): {stats.mean:.4f} +/- {stats.std:.4f}")
    return stats
