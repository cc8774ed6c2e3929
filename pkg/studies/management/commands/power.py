"""Команды power и type1: симуляционные исследования мощности и ошибки I рода."""

from pathlib import Path
from typing import Any

import click

from config import settings
from config.cli import build_params, emit, generator_options, seed_option
from simulation.services.presets import PRESETS, preset_params
from studies.models import MODEL_NAMES, StudyConfig
from studies.services.power import BACKENDS, default_study, run_study
from studies.services.report import format_summary
from studies.validators import STUDY_GENERATORS


def _models(raw: str | None) -> tuple[str, ...] | None:
    if raw is None:
        return None
    models = tuple(name.strip() for name in raw.split(",") if name.strip())
    unknown = [name for name in models if name not in MODEL_NAMES]
    if unknown or not models:
        raise click.BadParameter(
            f"допустимы {', '.join(MODEL_NAMES)}; получено {raw}", param_hint="--models"
        )
    return models


def build_study_command(name: str, null_mode: bool) -> click.Command:
    """Команда исследования; null_mode обнуляет эффекты обработок."""
    help_text = "Исследование ошибки I рода." if null_mode else "Исследование мощности."

    @click.command(name=name, help=help_text)
    @click.option(
        "--generator", type=click.Choice(STUDY_GENERATORS), default="amp_abs", show_default=True
    )
    @click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
    @generator_options
    @click.option("--models", default=None, help="Список моделей через запятую.")
    @click.option("--reps", type=click.IntRange(min=1), default=None)
    @click.option("--full-scale", is_flag=True, help="Полный масштаб (число реплик из настроек).")
    @seed_option("--base-seed", "Базовый seed реплик.")
    @click.option("--threads", type=click.IntRange(min=1), default=settings.THREADS)
    @click.option("--backend", type=click.Choice(BACKENDS), default="joblib", show_default=True)
    @click.option("--k", type=click.IntRange(min=4), default=settings.DEFAULT_BASIS_K)
    @click.option("--m", type=click.IntRange(1, 2), default=1)
    @click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table")
    @click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
    def study(
        generator: str,
        preset: str | None,
        models: str | None,
        reps: int | None,
        full_scale: bool,
        base_seed: int,
        threads: int,
        backend: str,
        k: int,
        m: int,
        fmt: str,
        out: Path | None,
        **options: Any,
    ) -> None:
        cfg = default_study(generator)
        if preset is not None:
            preset_generator, base = preset_params(preset)
            cfg = cfg.replace(generator=preset_generator, params=base)
        if reps is None:
            reps = settings.FULL_SCALE_REPLICATES if full_scale else settings.STUDY_REPLICATES
        cfg = StudyConfig(
            generator=cfg.generator,
            params=build_params(cfg.params, options, base_seed),
            n_reps=reps,
            models=_models(models) or cfg.models,
            null_mode=null_mode,
            base_seed=base_seed,
            k=k,
            m=m,
        )
        summary = run_study(cfg, threads=threads, backend=backend)
        emit(format_summary(summary, fmt), out, seed=base_seed)

    return study


command = build_study_command("power", null_mode=False)
