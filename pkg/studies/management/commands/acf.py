"""Команда acf: автокорреляции отклика или остатков (CSV lag,acf)."""

from pathlib import Path

import click

from config.cli import emit
from simulation.services.io import parse_dataset, read_seed
from studies.models import MODEL_NAMES
from studies.services.acf import residual_acf


@click.command(name="acf", help="Автокорреляционная функция по пробам.")
@click.option(
    "--data",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--column", default="response", show_default=True)
@click.option("--subject", type=int, default=None, help="Один субъект (иначе среднее).")
@click.option("--model", type=click.Choice(MODEL_NAMES), default=None, help="ACF остатков.")
@click.option("--max-lag", type=click.IntRange(min=1), default=40, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def command(
    data: Path,
    column: str,
    subject: int | None,
    model: str | None,
    max_lag: int,
    out: Path | None,
) -> None:
    text = data.read_text(encoding="utf-8")
    result = residual_acf(
        parse_dataset(text), max_lag=max_lag, column=column, subject=subject, model=model
    )
    seed = read_seed(text)
    emit(result.to_csv(index=False), out, seed=seed if seed is not None else "unknown")
