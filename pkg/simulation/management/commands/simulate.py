"""Команда simulate: генерация набора данных в CSV."""

import logging
from pathlib import Path
from typing import Any

import click

from config.cli import build_params, emit, generator_options, seed_option
from simulation.models import SimParams
from simulation.services.confound import latent_confound
from simulation.services.generators import GENERATORS, generate
from simulation.services.io import dataset_to_csv
from simulation.services.presets import PRESETS, preset_params

logger = logging.getLogger(__name__)


@click.command(name="simulate", help="Сгенерировать набор данных (CSV).")
@click.option("--generator", type=click.Choice(GENERATORS), default="amp", show_default=True)
@click.option(
    "--preset",
    type=click.Choice(sorted(PRESETS)),
    default=None,
    help="Именованный набор параметров; явные флаги его переопределяют.",
)
@generator_options
@seed_option()
@click.option("--with-latent", is_flag=True, help="Добавить столбцы латентной истины.")
@click.option(
    "--report-confound",
    is_flag=True,
    help="Сообщить смешение латентной кривой с F_w (в stderr).",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def command(
    generator: str,
    preset: str | None,
    seed: int,
    with_latent: bool,
    report_confound: bool,
    out: Path | None,
    **options: Any,
) -> None:
    base = SimParams()
    if preset is not None:
        generator, base = preset_params(preset)
    params = build_params(base, options, seed)
    dataset = generate(generator, params)
    emit(dataset_to_csv(dataset, with_latent=with_latent), out)
    if report_confound:
        click.echo(latent_confound(dataset).format(), err=True, nl=False)
