"""
Пять сравниваемых моделей:
- LMMsine: случайный интерсепт и случайный коэффициент при sin(t);
- LMMmin: только случайный интерсепт (время игнорируется);
- LMMmax: коррелированные интерсепт и наклон по F_w;
- GAMMfs: факторное сглаживание по субъектам (k, m);
- GAMMby: случайный интерсепт и by-сглаживания с общим lambda.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Any

from config import settings
from config.exceptions import ParameterError
from mixed.expressions import indicator, sine
from mixed.models import FitResult, ModelSpec, RandomTermSpec
from mixed.services.assemble import assemble
from mixed.services.reml import fit_reml
from splines.models import BasisSpec, SmoothMode, SmoothTermSpec

from ..models import MODEL_NAMES

logger = logging.getLogger(__name__)

GROUP = "subject"
BY_LINK = "subject_smooths"


@dataclass(frozen=True)
class VariantOptions:
    """
    interaction: фиксированное взаимодействие F_w:F_b;
    random_slope: независимый случайный наклон по F_w у LMMsine и GAMM;
    k, m: базис и порядок штрафа сглаживаний.
    """

    interaction: bool = False
    random_slope: bool = False
    k: int = settings.DEFAULT_BASIS_K
    m: int = 1


def _fixed(options: VariantOptions) -> tuple[str, ...]:
    fixed = ("factor_within", "factor_between")
    if options.interaction:
        fixed += ("factor_within:factor_between",)
    return fixed


def _within_slope() -> RandomTermSpec:
    return RandomTermSpec(
        group=GROUP,
        form="slope_on",
        expression=indicator("factor_within", "B"),
        roles=("sigma_bw",),
    )


def _smooth(mode: SmoothMode, options: VariantOptions, center: bool = True) -> SmoothTermSpec:
    return SmoothTermSpec(
        covariate="time",
        mode=mode,
        group=GROUP,
        basis=BasisSpec(k=options.k, m=options.m),
        lambda_link_id=BY_LINK if mode == "by_smooth" else None,
        center=center,
    )


def model_spec(
    variant: str, options: VariantOptions | None = None, center: bool = True
) -> ModelSpec:
    """Спецификация модели по имени варианта."""
    options = options or VariantOptions()
    intercept = RandomTermSpec(group=GROUP, roles=("sigma_b",))
    slope = (_within_slope(),) if options.random_slope else ()

    if variant == "LMMsine":
        random: tuple[RandomTermSpec, ...] = (
            intercept,
            RandomTermSpec(
                group=GROUP, form="slope_on", expression=sine(), roles=("sigma_alpha",)
            ),
        ) + slope
        smooths: tuple[SmoothTermSpec, ...] = ()
    elif variant == "LMMmin":
        random, smooths = (intercept,), ()
    elif variant == "LMMmax":
        random = (
            RandomTermSpec(
                group=GROUP,
                form="correlated_intercept_slope",
                expression=indicator("factor_within", "B"),
                roles=("sigma_b", "sigma_bw"),
            ),
        )
        smooths = ()
    elif variant == "GAMMfs":
        random, smooths = slope, (_smooth("factor_smooth", options, center),)
    elif variant == "GAMMby":
        random, smooths = (intercept,) + slope, (_smooth("by_smooth", options, center),)
    else:
        raise ParameterError(
            f"Неизвестная модель: {variant}. Допустимы: {', '.join(MODEL_NAMES)}."
        )
    return ModelSpec(fixed=_fixed(options), random=random, smooths=smooths, name=variant)


def fit_variant(
    variant: str,
    data: Any,
    options: VariantOptions | None = None,
    compute_ci: bool = False,
) -> FitResult:
    """Подгонка одного варианта к набору данных (LongDataset или DataFrame)."""
    logger.debug("Fitting variant %s", variant)
    spec = model_spec(variant, options)
    return fit_reml(assemble(spec, data), compute_ci=compute_ci)


def fit_with_bug(
    data: Any,
    options: VariantOptions | None = None,
    variant: str = "GAMMfs",
    compute_ci: bool = False,
) -> FitResult:
    """
    GAMMfs без ортогонализации базиса к интерсепту: воспроизводит
    старую ошибку построения факторных сглаживаний.
    """
    if variant != "GAMMfs":
        raise ParameterError("Ошибка центрирования воспроизводится только для GAMMfs.")
    spec = dataclasses.replace(
        model_spec(variant, options, center=False), name="GAMMfs (uncentered)"
    )
    return fit_reml(assemble(spec, data), compute_ci=compute_ci)
