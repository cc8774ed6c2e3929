"""Команда appendix-demo: смещение sd при неортогональных интерсепте и наклоне."""

from pathlib import Path

import click

from config.cli import emit
from studies.services.appendix import appendix_demo, format_appendix


@click.command(name="appendix-demo", help="Демонстрация смещения оценок sd.")
@click.option("--n", type=click.IntRange(min=2), default=20000, show_default=True)
@click.option("--groups", type=click.IntRange(min=2), default=2000, show_default=True)
@click.option("--sigma-a", type=click.FloatRange(min=0), default=1.0, show_default=True)
@click.option("--sigma-b", type=click.FloatRange(min=0), default=0.1, show_default=True)
@click.option("--sigma-eps", type=click.FloatRange(min=0, min_open=True), default=0.1)
@click.option("--shift", type=float, default=4.0, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=98, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def command(
    n: int,
    groups: int,
    sigma_a: float,
    sigma_b: float,
    sigma_eps: float,
    shift: float,
    seed: int,
    out: Path | None,
) -> None:
    if n % groups:
        raise click.UsageError(f"--n ({n}) должно делиться на --groups ({groups}).")
    report = appendix_demo(
        n=n,
        groups=groups,
        sigma_a=sigma_a,
        sigma_b=sigma_b,
        sigma_eps=sigma_eps,
        shift=shift,
        seed=seed,
    )
    emit(format_appendix(report), out, seed=seed)
