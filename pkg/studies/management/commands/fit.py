"""Команда fit: подгонка одной модели к набору данных из CSV."""

from pathlib import Path

import click

from config import settings
from config.cli import emit
from mixed.services.summary import format_fit
from simulation.services.io import parse_dataset, read_seed
from studies.models import MODEL_NAMES
from studies.services.variants import VariantOptions, fit_variant, fit_with_bug


@click.command(name="fit", help="Подогнать модель к набору данных.")
@click.option("--model", "variant", type=click.Choice(MODEL_NAMES), required=True)
@click.option(
    "--data",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--interaction", is_flag=True, help="Фиксированное взаимодействие F_w:F_b.")
@click.option("--random-slope", is_flag=True, help="Случайный наклон по F_w.")
@click.option(
    "--k", type=click.IntRange(min=4), default=settings.DEFAULT_BASIS_K, show_default=True
)
@click.option("--m", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--with-bug", is_flag=True, help="GAMMfs без ортогонализации к интерсепту.")
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def command(
    variant: str,
    data: Path,
    interaction: bool,
    random_slope: bool,
    k: int,
    m: int,
    with_bug: bool,
    fmt: str,
    out: Path | None,
) -> None:
    if with_bug and variant != "GAMMfs":
        raise click.UsageError("--with-bug допустим только для --model GAMMfs.")
    text = data.read_text(encoding="utf-8")
    frame = parse_dataset(text)
    options = VariantOptions(interaction=interaction, random_slope=random_slope, k=k, m=m)
    if with_bug:
        fit = fit_with_bug(frame, options, compute_ci=True)
    else:
        fit = fit_variant(variant, frame, options, compute_ci=True)
    seed = read_seed(text)
    emit(format_fit(fit, fmt), out, seed=seed if seed is not None else "unknown")
