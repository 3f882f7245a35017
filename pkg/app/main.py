"""
MACAM workbench CLI with vertical slicing architecture and dynamic command discovery
"""
import argparse
import inspect
import logging
import sys
import traceback
from importlib import import_module
from pathlib import Path
from typing import List, Optional, Sequence

from app.core.commands import CommandRouter
from app.core.config import settings
from app.shared.exceptions import WorkbenchException

# Configure logging
Path(settings.log_dir).mkdir(parents=True, exist_ok=True)

# Configure both file AND console logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[
        logging.FileHandler(settings.log_file),
        logging.StreamHandler(sys.stdout)
    ]
)
logger = logging.getLogger("macam_workbench")

# Debug log all settings
logger.debug("=" * 50)
logger.debug("Loaded Settings:")
for key, value in settings.model_dump().items():
    logger.debug(f"  {key}: {value}")
logger.debug(f"  log_file: {settings.log_file}")
logger.debug("=" * 50)


def discover_routers() -> List[CommandRouter]:
    """
    Dynamically discover all CommandRouter instances from feature `commands.py` modules.
    """
    routers: List[CommandRouter] = []

    app_dir = Path(__file__).parent
    features_path = app_dir / "features"

    if not features_path.exists():
        logger.warning(f"Features directory not found: {features_path}")
        return routers

    logger.debug(f"Scanning for commands in: {features_path.absolute()}")

    for file in sorted(features_path.rglob("commands.py")):
        if "__pycache__" in str(file):
            continue

        rel_path = file.relative_to(app_dir)
        module_name = "app." + ".".join(rel_path.with_suffix("").parts)

        try:
            module = import_module(module_name)
        except Exception as e:
            logger.error(f"✗ Failed to import {module_name}: {type(e).__name__}: {e}")
            logger.error(traceback.format_exc())
            continue

        for _, obj in inspect.getmembers(module):
            if isinstance(obj, CommandRouter) and obj not in routers:
                routers.append(obj)
                tags = ", ".join(obj.tags) if obj.tags else "no tags"
                names = ", ".join(command.name for command in obj.commands)
                logger.debug(f"✓ Discovered commands [{names}] ({tags}) from {module_name}")

    logger.debug(f"Command discovery complete. Found {len(routers)} routers.")
    return routers


def build_parser(routers: Optional[List[CommandRouter]] = None) -> argparse.ArgumentParser:
    """Argument parser with one subcommand per discovered command"""
    parser = argparse.ArgumentParser(
        prog="macam-workbench",
        description="Mixed analog/digital activation workbench for MACAM-based accelerators",
    )
    parser.add_argument("--version", action="version", version=settings.workbench_version)
    subparsers = parser.add_subparsers(dest="command", metavar="<command>")
    subparsers.required = True

    for router in routers if routers is not None else discover_routers():
        router.mount(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and run one command.

    Returns:
        Process exit code: 0 on success, the exception's code for workbench
        errors, 1 for anything unexpected
    """
    args = build_parser().parse_args(argv)
    logger.info(f"Running `{args.command}` (workbench {settings.workbench_version})")
    try:
        return args.handler(args)
    except WorkbenchException as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in `{args.command}`: {type(e).__name__}: {e}")
        logger.error(traceback.format_exc())
        return 1


if __name__ == "__main__":
    sys.exit(main())
