import argparse
import glob
import importlib.util
import inspect
import logging
import os
import typing

import config
from core.errors import LabError

logger = logging.getLogger(__name__)


def on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("on", "true", "yes", "1"):
        return True
    if lowered in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on or off, got '{value}'")


def _base_type(annotation):
    """Unwrap Optional[X] to X."""
    if typing.get_origin(annotation) is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return annotation


class CommandRegistry:
    """Commands contributed by plugin modules, exposed as argparse subcommands."""

    def __init__(self):
        self.commands = {}
        self.descriptions = []

    def register(self, name, func, description):
        self.commands[name] = {"func": func, "description": description}
        try:
            args_desc = ", ".join(inspect.signature(func).parameters)
        except (TypeError, ValueError):
            args_desc = "..."
        self.descriptions.append(f"- {name}({args_desc}): {description}")

    def load_modules(self, modules_dir=config.MODULES_DIR):
        """Import every modules/*.py and let it register its commands."""
        for filepath in sorted(glob.glob(os.path.join(modules_dir, "*.py"))):
            module_name = os.path.basename(filepath)[:-3]
            if module_name == "__init__":
                continue
            spec = importlib.util.spec_from_file_location(f"lab_modules.{module_name}", filepath)
            if spec is None or spec.loader is None:
                continue
            try:
                module = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(module)
                if hasattr(module, "register_commands"):
                    module.register_commands(self)
                    logger.debug("Loaded module: %s", module_name)
            except Exception:
                logger.exception("Error loading module %s from %s", module_name, filepath)

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="lab", description="Relaxation-limit simulator and analysis lab")
        parser.add_argument("--verbose", action="store_true", help="debug-level logging")
        sub = parser.add_subparsers(dest="command", required=True)
        for name in sorted(self.commands):
            info = self.commands[name]
            cmd = sub.add_parser(name, help=info["description"], description=info["description"])
            for param in inspect.signature(info["func"]).parameters.values():
                self._add_argument(cmd, param)
        return parser

    @staticmethod
    def _add_argument(cmd: argparse.ArgumentParser, param: inspect.Parameter):
        flag = "--" + param.name.replace("_", "-")
        kind = _base_type(param.annotation)
        kwargs = {"dest": param.name}
        if param.default is inspect.Parameter.empty:
            kwargs["required"] = True
        else:
            kwargs["default"] = param.default
        if kind is bool:
            kwargs.update(type=on_off, metavar="on|off")
        elif kind in (int, float, str):
            kwargs["type"] = kind
        cmd.add_argument(flag, **kwargs)

    def execute(self, name, **kwargs) -> int:
        """Run a command and turn its outcome into a process exit status."""
        if name not in self.commands:
            logger.error("Unknown command '%s'", name)
            return 2
        try:
            status = self.commands[name]["func"](**kwargs)
        except LabError as e:
            logger.error("%s: %s", type(e).__name__, e)
            return e.exit_code
        except Exception:
            logger.exception("Command '%s' crashed", name)
            return 1
        return 0 if status is None else int(status)

    def get_descriptions(self):
        return "\n".join(self.descriptions)
