"""
Command routing for the workbench CLI
"""
import argparse
import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from app.core.config import settings


logger = logging.getLogger("macam_workbench")

Handler = Callable[[argparse.Namespace], int]
Argument = Tuple[Tuple[str, ...], Dict[str, Any]]


def arg(*flags: str, **options: Any) -> Argument:
    """Declare one argparse argument of a command."""
    return flags, options


# Shared by every run command
RUN_ARGUMENTS: List[Argument] = [
    arg("--config", default=settings.default_config, help="TOML run configuration"),
    arg("--seed", type=int, default=None, help="Override the config seed"),
    arg("--out", default=None, help="Run directory (default: <output_dir>/<config stem>)"),
]


class Command:
    def __init__(self, name: str, handler: Handler, help: str, arguments: Sequence[Argument], run_arguments: bool):
        self.name = name
        self.handler = handler
        self.help = help
        self.arguments = list(arguments)
        self.run_arguments = run_arguments


class CommandRouter:
    """
    Collects the commands of one feature slice.

    Feature modules create a module-level router and decorate handlers with
    `router.command(...)`; the entry point discovers routers and mounts them.
    """

    def __init__(self, tags: Optional[List[str]] = None):
        self.tags = tags or []
        self.commands: List[Command] = []

    def command(
        self,
        name: str,
        help: str = "",
        arguments: Sequence[Argument] = (),
        run_arguments: bool = True,
    ) -> Callable[[Handler], Handler]:
        def decorator(handler: Handler) -> Handler:
            self.commands.append(Command(name, handler, help, arguments, run_arguments))
            return handler
        return decorator

    def mount(self, subparsers: "argparse._SubParsersAction") -> None:
        for command in self.commands:
            parser = subparsers.add_parser(command.name, help=command.help, description=command.help)
            for flags, options in (RUN_ARGUMENTS if command.run_arguments else []) + command.arguments:
                parser.add_argument(*flags, **options)
            parser.set_defaults(handler=command.handler)
            logger.debug(f"Mounted command '{command.name}' ({', '.join(self.tags) or 'no tags'})")
