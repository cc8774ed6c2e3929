"""
Общие элементы командной строки: вывод результатов и опции
параметров генераторов, разделяемые командами simulate, power и type1.
"""

from pathlib import Path
from typing import Any, Callable

import click

from config import settings
from simulation.models import SimParams

# Опции генератора: (флаг, имя поля SimParams, тип, подсказка)
GENERATOR_OPTIONS: tuple[tuple[str, str, Any, str], ...] = (
    ("--subjects", "n_subjects", int, "Число субъектов."),
    ("--trials", "n_trials", int, "Число проб на субъекта."),
    ("--design", "design", click.Choice(["blocked", "randomized"]), "План F_w."),
    ("--beta", "beta", float, "Интерсепт β."),
    ("--beta-w", "beta_w", float, "Эффект F_w."),
    ("--beta-b", "beta_b", float, "Эффект F_b."),
    ("--beta-bw", "beta_bw", float, "Взаимодействие F_w:F_b."),
    ("--sigma", "sigma", float, "sd остатка."),
    ("--sigma-b", "sigma_b", float, "sd случайного интерсепта."),
    ("--sigma-bw", "sigma_bw", float, "sd случайного наклона по F_w."),
    ("--alpha", "alpha", float, "Фиксированная амплитуда."),
    ("--sigma-alpha", "sigma_alpha", float, "sd амплитуды."),
    ("--sigma-phi", "sigma_phi", float, "sd фазы."),
    ("--sigma-tprs", "sigma_tprs", float, "sd весов базиса случайных кривых."),
    ("--k-gen", "k_gen", int, "Число базисных функций случайных кривых."),
)


def generator_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """
    Декоратор: все параметры SimParams как опции со значением None
    по умолчанию (None = взять из набора параметров или SimParams).
    """
    for flag, field_name, option_type, help_text in reversed(GENERATOR_OPTIONS):
        command = click.option(flag, field_name, type=option_type, default=None, help=help_text)(
            command
        )
    command = click.option(
        "--counterbalanced/--no-counterbalanced",
        "counterbalanced",
        default=None,
        help="Чередовать порядок блоков AB/BA.",
    )(command)
    return command


def seed_option(flag: str = "--seed", help_text: str = "Seed генератора.") -> Callable[..., Any]:
    return click.option(
        flag,
        type=click.IntRange(0, 2**64 - 1),
        default=settings.DEFAULT_SEED,
        show_default=True,
        help=help_text,
    )


def param_overrides(options: dict[str, Any]) -> dict[str, Any]:
    """Явно заданные параметры генератора (без None)."""
    names = [field_name for _, field_name, _, _ in GENERATOR_OPTIONS] + ["counterbalanced"]
    return {name: options[name] for name in names if options.get(name) is not None}


def build_params(base: SimParams, options: dict[str, Any], seed: int) -> SimParams:
    return base.replace(seed=seed, **param_overrides(options))


def seed_header(seed: int | str) -> str:
    return f"# seed={seed}\n"


def emit(text: str, out: Path | None, seed: int | str | None = None) -> None:
    """Результат в файл --out или в stdout; при seed добавляется заголовок."""
    if seed is not None:
        text = seed_header(seed) + text
    if out is None:
        click.echo(text, nl=False)
        return
    Path(out).write_text(text, encoding="utf-8")
