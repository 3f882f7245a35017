"""Workbench Feature - CLI commands"""
import argparse
import logging

from app.core.commands import CommandRouter, arg
from app.features.workbench.config_loader import load_config
from app.features.workbench.service import workbench_service
from app.shared.utils.unit_utils import format_energy


logger = logging.getLogger("macam_workbench")

router = CommandRouter(tags=["Workbench"])

ASSIGNMENT_ARGUMENT = arg(
    "--assignment",
    default=None,
    help="Assignment file, or `all-analog` / `all-digital` (default: <out>/assignment.json)",
)


def _context(args: argparse.Namespace):
    config = load_config(args.config)
    seed = workbench_service.seed(config, args.seed)
    out_dir = workbench_service.out_dir(args.config, args.out)
    logger.info(f"Run directory {out_dir}, seed {seed}")
    return config, out_dir, seed


@router.command("warmup", help="Train weights with uniformly mixed activations")
def warmup(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    summary = workbench_service.warmup(config, out_dir, seed)
    logger.info(f"Warmup done: accuracy {summary.accuracy.mean:.4f}")
    return 0


@router.command("search", help="Alternate weight and assignment updates under the energy band")
def search(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    summary = workbench_service.search(config, out_dir, seed)
    logger.info(
        f"Search done: normalized E_act {summary.normalized_energy:.4g}, "
        f"digital ratio per layer {[round(r, 3) for r in summary.digital_ratio]}"
    )
    return 0


@router.command(
    "retrain",
    help="Variation-aware retraining on a finalized assignment",
    arguments=[ASSIGNMENT_ARGUMENT],
)
def retrain(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    summary = workbench_service.retrain(config, out_dir, seed, assignment=args.assignment)
    logger.info(f"Retrain done: accuracy {summary.accuracy.mean:.4f}")
    return 0


@router.command(
    "eval",
    help="Clean accuracy and repeated noisy evaluation of the retrained model",
    arguments=[
        arg("--runs", type=int, default=20, help="Noisy evaluation runs"),
        arg("--no-noise", action="store_true", help="Skip the noisy evaluation"),
        arg("--workers", type=int, default=None, help="Concurrent evaluation workers"),
    ],
)
def evaluate(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    summary = workbench_service.evaluate(
        config, out_dir, seed, runs=args.runs, noisy=not args.no_noise, workers=args.workers,
    )
    message = f"Eval done: clean accuracy {summary.accuracy.mean:.4f}"
    if summary.noisy_accuracy is not None:
        message += f", noisy {summary.noisy_accuracy.mean:.4f} +/- {summary.noisy_accuracy.std:.4f}"
    logger.info(message)
    return 0


@router.command(
    "energy-report",
    help="Per-layer activation and system energy of an assignment (CSV)",
    arguments=[ASSIGNMENT_ARGUMENT],
)
def energy_report(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    summary = workbench_service.energy_report(config, out_dir, seed, assignment=args.assignment)
    logger.info(
        f"Normalized E_act {summary.normalized_act_energy:.4g}, "
        f"mixed A/D + activation {format_energy(summary.mixed_total)} vs conventional "
        f"{format_energy(summary.conventional_total)} (saving {summary.saving:.2%})"
    )
    return 0


@router.command(
    "pipeline",
    help="warmup -> search -> retrain -> eval -> energy-report in one run",
    arguments=[arg("--runs", type=int, default=20, help="Noisy evaluation runs")],
)
def pipeline(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    workbench_service.pipeline(config, out_dir, seed, runs=args.runs)
    return 0


@router.command("relu-variants", help="Compare alpha gradient rules on a fully analog model")
def relu_variants(args: argparse.Namespace) -> int:
    config, out_dir, seed = _context(args)
    workbench_service.relu_variants(config, out_dir, seed)
    return 0
