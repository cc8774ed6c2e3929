"""
Диагностика смешения латентной временной компоненты с обработками.
При блочном плане синус на второй половине проб преимущественно
отрицателен, и латентная кривая коррелирует с уровнем B.
"""

import logging
from dataclasses import dataclass

import numpy as np

from config.exceptions import DataError
from mixed.models import ModelSpec, RandomTermSpec
from mixed.services.assemble import assemble
from mixed.services.reml import fit_reml

from ..models import LongDataset

logger = logging.getLogger(__name__)

CONTRAST = "factor_withinB"


@dataclass(frozen=True)
class ConfoundReport:
    estimate: float
    se: float
    p_value: float

    def format(self) -> str:
        return (
            f"# latent ~ factor_within: estimate={self.estimate:.4f} "
            f"se={self.se:.4f} p={self.p_value:.4g}\n"
        )


def latent_confound(dataset: LongDataset) -> ConfoundReport:
    """
    Регрессия латентной компоненты на оба фактора со случайным
    интерсептом по субъектам; контраст уровня B и его p-значение.
    """
    frame = dataset.frame
    if "latent" not in frame.columns:
        raise DataError("В наборе данных нет латентной компоненты.")
    latent = frame["latent"].to_numpy(dtype=float)
    if np.ptp(latent) == 0.0:
        raise DataError("Латентная компонента постоянна: смешение не определено.")

    spec = ModelSpec(
        response="latent",
        random=(RandomTermSpec(group="subject"),),
        name="latent_confound",
    )
    fit = fit_reml(assemble(spec, frame), compute_ci=False)
    estimate, se, p_value = fit.coefficient(CONTRAST)
    logger.info("Latent confound: estimate=%.4f p=%.4g", estimate, p_value)
    return ConfoundReport(estimate=estimate, se=se, p_value=p_value)
