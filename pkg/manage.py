#!/usr/bin/env python
"""
Командная строка timecourse.
Команды собираются из модулей <app>/management/commands/*.py: каждый
модуль объявляет click-команду `command`.
Коды возврата: 0 успех, 2 ошибка использования, 1 ошибка выполнения.
"""
import importlib
import logging
import logging.config
import pkgutil
import sys
from pathlib import Path
from typing import Any

import click
from dotenv import dotenv_values

from config import settings
from config.exceptions import TimecourseError

logger = logging.getLogger("timecourse")

APPS = ("simulation", "studies")


def load_commands() -> dict[str, click.Command]:
    """Команды приложений; модули с "_" в начале имени пропускаются."""
    commands: dict[str, click.Command] = {}
    for app in APPS:
        package = importlib.import_module(f"{app}.management.commands")
        for module_info in pkgutil.iter_modules(package.__path__):
            if module_info.name.startswith("_"):
                continue
            module = importlib.import_module(f"{package.__name__}.{module_info.name}")
            command = getattr(module, "command", None)
            if isinstance(command, click.Command) and command.name:
                commands[command.name] = command
    return commands


def config_defaults(path: Path, command: click.Command) -> dict[str, Any]:
    """
    Файл key=value (ключи: имена флагов без "--") -> default_map команды.
    Неизвестный ключ: ошибка использования.
    """
    flags: dict[str, str] = {}
    for param in command.params:
        if isinstance(param, click.Option) and param.name:
            for opt in param.opts:
                flags[opt.lstrip("-")] = param.name
    defaults: dict[str, Any] = {}
    for key, value in dotenv_values(path).items():
        if key not in flags:
            raise click.UsageError(f"Неизвестный параметр в файле конфигурации: {key}.")
        defaults[flags[key]] = value
    return defaults


class TimecourseCLI(click.Group):
    def list_commands(self, ctx: click.Context) -> list[str]:
        return sorted(load_commands())

    def get_command(self, ctx: click.Context, cmd_name: str) -> click.Command | None:
        command = load_commands().get(cmd_name)
        config = ctx.params.get("config")
        if command is not None and config is not None:
            ctx.default_map = {cmd_name: config_defaults(config, command)}
        return command


@click.group(cls=TimecourseCLI)
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Файл key=value с флагами команды; флаги командной строки важнее.",
)
def cli(config: Path | None) -> None:
    """Штрафованные сплайны в смешанных моделях: симуляции и исследования."""


def main(argv: list[str] | None = None) -> int:
    logging.config.dictConfig(settings.LOGGING)
    try:
        cli.main(args=argv, prog_name="manage.py", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        click.echo("Прервано.", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (TimecourseError, OSError) as exc:
        logger.debug("Command failed", exc_info=True)
        click.echo(f"Ошибка: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
