"""
Прогон симуляционных исследований: реплики, сведение итогов,
сетка размеров эффекта.
Каждая реплика получает свой seed из (base_seed, номер реплики), поэтому
результат не зависит от порядка и способа выполнения реплик.
"""

import hashlib
import logging
from typing import Any, Iterable

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import settings
from config.exceptions import ConvergenceError, NumericalError, ParameterError, StudyError
from simulation.services.generators import generate
from simulation.services.presets import preset_params

from ..models import MODEL_NAMES, StudyConfig, StudySummary
from ..validators import validate_study_config
from .variants import VariantOptions, fit_variant

logger = logging.getLogger(__name__)

BACKENDS = ("joblib", "celery")

# Генераторы со случайным наклоном по F_w и взаимодействием в исследованиях
SLOPE_GENERATORS = ("phase", "wiggly")

# Набор параметров и модели по умолчанию для исследования каждого генератора
STUDY_PRESETS = {
    "amp": "amp",
    "amp_abs": "ampabs_power",
    "phase": "phase_power",
    "wiggly": "wiggly_power",
}
SLOPE_MODELS = ("LMMmax", "GAMMfs", "GAMMby")


def derive_seed(base_seed: int, replicate: int) -> int:
    """Первые 8 байт SHA-256 от "base_seed:replicate"."""
    digest = hashlib.sha256(f"{base_seed}:{replicate}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def default_study(generator: str) -> StudyConfig:
    """Исследование генератора с параметрами и моделями по умолчанию."""
    if generator not in STUDY_PRESETS:
        raise ParameterError(f"Неизвестный генератор: {generator}.")
    name, params = preset_params(STUDY_PRESETS[generator])
    models = SLOPE_MODELS if generator in SLOPE_GENERATORS else MODEL_NAMES
    return StudyConfig(generator=name, params=params, models=models)


def study_options(cfg: StudyConfig) -> VariantOptions:
    with_slope = cfg.generator in SLOPE_GENERATORS
    return VariantOptions(
        interaction=with_slope or cfg.params.beta_bw != 0.0,
        random_slope=with_slope,
        k=cfg.k,
        m=cfg.m,
    )


def run_replicate(cfg: StudyConfig, replicate: int) -> dict[str, Any]:
    """
    Одна реплика: генерация данных и подгонка всех моделей к одному и
    тому же набору. Результат JSON-совместим (передаётся через Celery).
    """
    seed = derive_seed(cfg.base_seed, replicate)
    dataset = generate(cfg.generator, cfg.effective_params.replace(seed=seed))
    fingerprint = dataset.fingerprint()
    options = study_options(cfg)

    models: dict[str, dict[str, Any]] = {}
    for name in cfg.models:
        # Все модели реплики должны видеть один и тот же набор данных
        consumed = dataset.fingerprint()
        if consumed != fingerprint:
            raise StudyError(f"Данные реплики {replicate} изменились при подгонке.", name)
        try:
            fit = fit_variant(name, dataset, options)
        except (ConvergenceError, NumericalError) as exc:
            logger.warning("Replicate %s: %s failed: %s", replicate, name, exc)
            models[name] = {"ok": False, "error": str(exc), "fingerprint": consumed}
            continue
        models[name] = {
            "ok": True,
            "fingerprint": consumed,
            "coefficients": {
                coef: [float(v) for v in fit.coefficient(coef)] for coef in fit.fixed_names
            },
            "sd": {
                component.role: float(component.estimate)
                for component in fit.varcomp
                if component.kind == "sd"
            },
            "converged": bool(fit.converged),
        }
    logger.debug("Replicate %s finished (seed=%s)", replicate, seed)
    return {"replicate": replicate, "seed": seed, "fingerprint": fingerprint, "models": models}


def _variance(values: np.ndarray) -> float:
    return float(np.var(values, ddof=1)) if values.size >= 2 else 0.0


def summarize(cfg: StudyConfig, records: Iterable[dict[str, Any]]) -> StudySummary:
    """
    Сведение реплик в порядке номеров: средние оценки, дисперсии по
    репликам (ddof=1), число значимых при каждом alpha, средние sd.
    Несошедшиеся и нестационарные (converged=False) подгонки
    исключаются из средних и считаются отказами.
    """
    ordered = tuple(sorted(records, key=lambda record: record["replicate"]))
    rows: list[dict[str, Any]] = []
    sd_rows: dict[str, dict[str, float]] = {}
    failures: dict[str, int] = {}

    for model in cfg.models:
        entries = [record["models"][model] for record in ordered]
        fits = [entry for entry in entries if entry["ok"] and entry["converged"]]
        failures[model] = len(ordered) - len(fits)
        if not fits:
            raise StudyError(f"Все реплики провалились для модели {model}.", model)

        for coef in fits[0]["coefficients"]:
            table = np.array([fit["coefficients"][coef] for fit in fits])
            row: dict[str, Any] = {
                "model": model,
                "coefficient": coef,
                "mean": float(table[:, 0].mean()),
                "var": _variance(table[:, 0]),
                "mean_se": float(table[:, 1].mean()),
                "n_ok": len(fits),
            }
            for alpha in cfg.alphas:
                row[f"n_sig_{alpha:g}"] = int((table[:, 2] < alpha).sum())
            rows.append(row)

        roles = list(fits[0]["sd"])
        sd_rows[model] = {
            role: float(np.mean([fit["sd"][role] for fit in fits])) for role in roles
        }

    frame = pd.DataFrame(rows).set_index(["model", "coefficient"])
    sd_means = pd.DataFrame.from_dict(sd_rows, orient="index")
    sd_means.index.name = "model"
    for model, count in failures.items():
        if count:
            logger.warning("%s: %s of %s replicates failed", model, count, len(ordered))
    return StudySummary(
        config=cfg, rows=frame, sd_means=sd_means, failures=failures, records=ordered
    )


def _run_celery(cfg: StudyConfig) -> list[dict[str, Any]]:
    from celery import group

    from ..tasks import run_replicate_task

    payload = cfg.to_payload()
    job = group(run_replicate_task.s(payload, r) for r in range(cfg.n_reps))
    return list(job.apply_async().get())


def run_study(
    cfg: StudyConfig, threads: int | None = None, backend: str = "joblib"
) -> StudySummary:
    """
    Исследование целиком. threads: число процессов joblib (по умолчанию
    из настроек); backend="celery" раздаёт реплики воркерам.
    """
    validate_study_config(cfg)
    if backend not in BACKENDS:
        raise ParameterError(f"Неизвестный способ выполнения: {backend}.")
    logger.info(
        "Study %s: models=%s reps=%s null=%s backend=%s",
        cfg.generator,
        ",".join(cfg.models),
        cfg.n_reps,
        cfg.null_mode,
        backend,
    )
    if backend == "celery":
        records = _run_celery(cfg)
    else:
        n_jobs = threads or settings.THREADS
        records = Parallel(n_jobs=n_jobs)(
            delayed(run_replicate)(cfg, r) for r in range(cfg.n_reps)
        )
    return summarize(cfg, records)


def power_grid(
    cfg: StudyConfig,
    parameter: str,
    values: Iterable[float],
    coefficient: str,
    alpha: float = 0.01,
    threads: int | None = None,
    backend: str = "joblib",
) -> pd.DataFrame:
    """
    Мощность для сетки истинных значений параметра генератора.
    Строки: значения параметра; столбцы: модели.
    """
    table: dict[float, dict[str, float]] = {}
    for value in values:
        summary = run_study(
            cfg.replace(params=cfg.params.replace(**{parameter: value})),
            threads=threads,
            backend=backend,
        )
        table[float(value)] = {
            model: summary.power(model, coefficient, alpha) for model in cfg.models
        }
    grid = pd.DataFrame.from_dict(table, orient="index")
    grid.index.name = parameter
    return grid
