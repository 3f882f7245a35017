"""MACAM Feature - CLI commands"""
import argparse
import logging

from app.core.commands import CommandRouter, arg
from app.features.workbench.config_loader import load_config
from app.features.workbench.service import workbench_service


logger = logging.getLogger("macam_workbench")

router = CommandRouter(tags=["MACAM"])


@router.command(
    "device-mc",
    help="Monte-Carlo characterization of the configured MACAM design",
    arguments=[
        arg("--sigma", type=float, default=None, help="Relative device variation (default: noise.macam_sigma)"),
        arg("--samples", type=int, default=None, help="Monte-Carlo draws (default: noise.mc_samples)"),
    ],
)
def device_mc(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    seed = workbench_service.seed(config, args.seed)
    out_dir = workbench_service.out_dir(args.config, args.out)
    report = workbench_service.device_mc(config, out_dir, seed, sigma=args.sigma, samples=args.samples)
    logger.info(f"{report.design}: per-interval input sigma {[round(s, 4) for s in report.per_interval_input_sigma]}")
    return 0
