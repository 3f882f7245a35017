"""Workbench Feature - Experiment orchestration"""
import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from app.core.config import settings
from app.features.activations.models import AlphaMode, AnalogActConfig, PathChoice
from app.features.activations.service import MixMode
from app.features.energy.models import EnergySummary
from app.features.energy.service import energy_service
from app.features.macam.models import DeviceReport
from app.features.macam.service import build_codebook, macam_service
from app.features.supermixer.models import AccuracyStats, NoiseSpec
from app.features.supermixer.network import SuperMixerNet
from app.features.supermixer.trainer import (
    evaluate,
    evaluate_async,
    run_retrain,
    run_search,
    run_warmup,
)
from app.features.workbench.artifacts import RunArtifacts, read_assignment
from app.features.workbench.datasets import load_datasets
from app.features.workbench.models import Dataset, MetricsRecord, PhaseSummary, RunConfig, VariantResult
from app.shared.exceptions import ValidationError


logger = logging.getLogger("macam_workbench")

BASELINE_ASSIGNMENTS = {"all-analog": PathChoice.ANALOG, "all-digital": PathChoice.DIGITAL}

# Independent random streams per phase, all derived from the run seed
PHASE_STREAMS = {"warmup": 1, "search": 2, "retrain": 3, "eval": 4, "variants": 5}

AssignmentSource = Optional[Union[str, Path]]


def phase_rng(seed: int, phase: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, PHASE_STREAMS[phase]]))


class WorkbenchService:
    """Runs the warmup -> search -> retrain workflow and its reports"""

    def build_model(self, config: RunConfig, seed: int) -> SuperMixerNet:
        analog_cfg = AnalogActConfig.from_codebook(build_codebook(config.levels))
        return SuperMixerNet(config.model, analog_cfg, seed=seed, tau=config.schedule.tau_start)

    def datasets(self, config: RunConfig, seed: int) -> Tuple[Dataset, Dataset]:
        return load_datasets(config.dataset, seed)

    def baseline_paths(self, model: SuperMixerNet, name: str) -> List[np.ndarray]:
        choice = BASELINE_ASSIGNMENTS[name]
        return [np.full(site.channels, int(choice), dtype=np.int64) for site in model.sites]

    def resolve_assignment(self, model: SuperMixerNet, source: AssignmentSource, artifacts: RunArtifacts) -> List[np.ndarray]:
        """
        Per-layer path indices from `all-analog`, `all-digital` or an assignment file.

        Raises:
            ArtifactNotFoundError: If the assignment file does not exist
        """
        if source is not None and str(source) in BASELINE_ASSIGNMENTS:
            return self.baseline_paths(model, str(source))
        return read_assignment(source if source is not None else artifacts.assignment_path)

    def _restore(self, model: SuperMixerNet, artifacts: RunArtifacts, phase: str, required: bool = True) -> bool:
        if not required and not artifacts.checkpoint_path(phase).is_file():
            logger.warning(f"No {phase} checkpoint in {artifacts.out_dir}; starting from fresh weights")
            return False
        model.load_state_dict(artifacts.load_checkpoint(phase))
        if all(site.state.is_finalized for site in model.sites):
            model.set_mode(MixMode.FINAL)
        return True

    def _summary(
        self,
        phase: str,
        seed: int,
        model: SuperMixerNet,
        config: RunConfig,
        epochs: int = 0,
        artifacts: Optional[RunArtifacts] = None,
        accuracy: Optional[AccuracyStats] = None,
        noisy_accuracy: Optional[AccuracyStats] = None,
    ) -> PhaseSummary:
        records = artifacts.read_metrics() if artifacts is not None else []
        finalized = all(site.state.is_finalized for site in model.sites)
        energy = None
        if finalized:
            _, report = energy_service.report(model.geometries(), model.assignment_paths(), config.hw)
            energy = report.normalized_act_energy
        return PhaseSummary(
            phase=phase,
            seed=seed,
            epochs=epochs,
            final_task_loss=records[-1].task_loss if records else None,
            accuracy=accuracy,
            noisy_accuracy=noisy_accuracy,
            normalized_energy=energy,
            digital_ratio=model.digital_ratios() if finalized else [],
            alphas=[site.alpha.value for site in model.sites],
            workbench_version=settings.workbench_version,
        )

    # ------------------------------------------------------------------
    # Phases
    # ------------------------------------------------------------------

    def warmup(self, config: RunConfig, out_dir: Path, seed: int) -> PhaseSummary:
        artifacts = RunArtifacts(out_dir, stream="warmup")
        artifacts.reset_metrics()
        train, test = self.datasets(config, seed)
        model = self.build_model(config, seed)
        run_warmup(model, train, config.schedule, phase_rng(seed, "warmup"), sink=artifacts.append_metrics)
        artifacts.save_checkpoint("warmup", model.state_dict())
        summary = self._summary(
            "warmup", seed, model, config, config.schedule.warmup_epochs, artifacts,
            accuracy=evaluate(model, test, seed=seed),
        )
        artifacts.write_summary("warmup", summary)
        return summary

    def search(self, config: RunConfig, out_dir: Path, seed: int) -> PhaseSummary:
        artifacts = RunArtifacts(out_dir, stream="search")
        artifacts.reset_metrics()
        train, test = self.datasets(config, seed)
        model = self.build_model(config, seed)
        self._restore(model, artifacts, "warmup")
        run_search(
            model, train, config.schedule, config.constraint, config.hw,
            phase_rng(seed, "search"), sink=artifacts.append_metrics,
        )
        artifacts.save_checkpoint("search", model.state_dict())
        artifacts.write_assignment(model.assignment_paths())
        summary = self._summary(
            "search", seed, model, config, config.schedule.search_epochs, artifacts,
            accuracy=evaluate(model, test, seed=seed),
        )
        artifacts.write_summary("search", summary)
        return summary

    def retrain(
        self,
        config: RunConfig,
        out_dir: Path,
        seed: int,
        assignment: AssignmentSource = None,
    ) -> PhaseSummary:
        """
        Variation-aware retraining on a finalized assignment.

        Raises:
            ArtifactNotFoundError: Without an assignment file (unless a baseline
                assignment is requested) or, for file assignments, without a checkpoint
        """
        artifacts = RunArtifacts(out_dir, stream="retrain")
        train, test = self.datasets(config, seed)
        model = self.build_model(config, seed)
        baseline = assignment is not None and str(assignment) in BASELINE_ASSIGNMENTS
        paths = self.resolve_assignment(model, assignment, artifacts)
        self._restore(model, artifacts, "warmup" if baseline else "search", required=not baseline)
        model.load_assignment(paths)

        artifacts.reset_metrics()
        run_retrain(
            model, train, config.schedule, config.noise, phase_rng(seed, "retrain"),
            seed=seed, sink=artifacts.append_metrics,
        )
        artifacts.save_checkpoint("retrain", model.state_dict())
        if baseline:
            artifacts.write_assignment(paths)
        summary = self._summary(
            "retrain", seed, model, config, config.schedule.retrain_epochs, artifacts,
            accuracy=evaluate(model, test, seed=seed),
        )
        artifacts.write_summary("retrain", summary)
        return summary

    def evaluate(
        self,
        config: RunConfig,
        out_dir: Path,
        seed: int,
        runs: int = 20,
        noisy: bool = True,
        workers: Optional[int] = None,
    ) -> PhaseSummary:
        """Clean accuracy plus, when `noisy`, mean/std over `runs` noisy evaluations."""
        artifacts = RunArtifacts(out_dir, stream="eval")
        artifacts.reset_metrics()
        _, test = self.datasets(config, seed)
        model = self.build_model(config, seed)
        self._restore(model, artifacts, "retrain")

        clean = evaluate(model, test, seed=seed)
        artifacts.append_metrics(MetricsRecord(
            phase="eval", epoch=0, accuracy=clean.mean, digital_ratio=model.digital_ratios(),
        ))
        noisy_stats = None
        if noisy:
            noisy_stats = asyncio.run(evaluate_async(
                model, test, config.noise, runs, seed=seed,
                workers=workers if workers is not None else settings.eval_workers,
            ))
        summary = self._summary("eval", seed, model, config, accuracy=clean, noisy_accuracy=noisy_stats)
        artifacts.write_summary("eval", summary)
        return summary

    # ------------------------------------------------------------------
    # Reports
    # ------------------------------------------------------------------

    def energy_report(
        self,
        config: RunConfig,
        out_dir: Path,
        seed: int,
        assignment: AssignmentSource = None,
    ) -> EnergySummary:
        artifacts = RunArtifacts(out_dir, stream="energy")
        model = self.build_model(config, seed)
        paths = self.resolve_assignment(model, assignment, artifacts)
        rows, summary = energy_service.report(model.geometries(), paths, config.hw)
        artifacts.write_energy_report(rows)
        artifacts.write_summary("energy", summary)
        return summary

    def device_mc(
        self,
        config: RunConfig,
        out_dir: Path,
        seed: int,
        sigma: Optional[float] = None,
        samples: Optional[int] = None,
    ) -> DeviceReport:
        artifacts = RunArtifacts(out_dir, stream="device")
        report = macam_service.device_report(
            config.levels,
            config.noise.macam_sigma if sigma is None else sigma,
            config.noise.mc_samples if samples is None else samples,
            seed,
        )
        artifacts.write_summary("device", report)
        return report

    # ------------------------------------------------------------------
    # Composite runs
    # ------------------------------------------------------------------

    def pipeline(self, config: RunConfig, out_dir: Path, seed: int, runs: int = 20) -> Dict[str, PhaseSummary]:
        """warmup -> search -> retrain -> noisy eval, then the energy report"""
        summaries = {
            "warmup": self.warmup(config, out_dir, seed),
            "search": self.search(config, out_dir, seed),
            "retrain": self.retrain(config, out_dir, seed),
            "eval": self.evaluate(config, out_dir, seed, runs=runs),
        }
        self.energy_report(config, out_dir, seed)
        logger.info(
            f"Pipeline done: clean accuracy {summaries['eval'].accuracy.mean:.4f}, "
            f"noisy {summaries['eval'].noisy_accuracy.mean:.4f} +/- {summaries['eval'].noisy_accuracy.std:.4f}"
        )
        return summaries

    def relu_variants(
        self,
        config: RunConfig,
        out_dir: Path,
        seed: int,
        modes: Optional[List[AlphaMode]] = None,
    ) -> List[VariantResult]:
        """
        Train a fully analog model once per alpha rule and report test accuracy.

        Each variant trains for warmup_epochs + retrain_epochs on the clean
        analog path from the same initialization.
        """
        artifacts = RunArtifacts(out_dir, stream="variants")
        train, test = self.datasets(config, seed)
        epochs = config.schedule.warmup_epochs + config.schedule.retrain_epochs
        schedule = config.schedule.model_copy(update={"retrain_epochs": epochs})
        silent = NoiseSpec(weight_sigma=0.0, macam_sigma=0.0)

        results = []
        for mode in modes or list(AlphaMode):
            variant = config.model_copy(update={"model": config.model.model_copy(update={"alpha_mode": mode})})
            model = self.build_model(variant, seed)
            model.load_assignment(self.baseline_paths(model, "all-analog"))
            run_retrain(model, train, schedule, silent, phase_rng(seed, "variants"), seed=seed)
            result = VariantResult(
                alpha_mode=mode.value,
                accuracy=evaluate(model, test, seed=seed),
                alphas=[site.alpha.value for site in model.sites],
            )
            logger.info(f"alpha_mode={mode.value}: test accuracy {result.accuracy.mean:.4f}")
            results.append(result)

        artifacts.write_summary("variants", {"results": [r.model_dump(mode="json") for r in results]})
        return results

    def out_dir(self, config_path: Union[str, Path], out: Optional[str]) -> Path:
        if out:
            return Path(out)
        return Path(settings.output_dir) / Path(config_path).stem

    def seed(self, config: RunConfig, override: Optional[int]) -> int:
        if override is not None and override < 0:
            raise ValidationError(f"--seed must be >= 0, got {override}")
        return config.seed if override is None else override


workbench_service = WorkbenchService()
