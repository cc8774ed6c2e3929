import logging

import numpy as np

from config.exceptions import CenteringContractError, DataError, ParameterError

from ..models import INTERCEPT, BasisBlock, GroupedBlock, GroupedPenalty, SmoothMode

logger = logging.getLogger(__name__)


def expand_grouped(
    block: BasisBlock,
    codes: np.ndarray,
    n_levels: int,
    mode: SmoothMode,
    linked: bool = True,
    allow_uncentered: bool = False,
) -> GroupedBlock:
    """
    Разворачивает базис по уровням группирующего фактора.
    - factor_smooth: на каждый уровень копия базиса плюс столбец
      случайного интерсепта с тождественным штрафом и своим lambda;
      все штрафы одной роли делят один lambda.
    - by_smooth: только копии базиса; интерсепты задаются отдельным
      случайным членом. lambda общий при linked=True, иначе свой у уровня.
    allow_uncentered нужен только для воспроизведения старой ошибки.
    """
    if mode not in ("factor_smooth", "by_smooth"):
        raise ParameterError(f"Режим {mode} не является групповым.")
    if not block.centered and not allow_uncentered:
        raise CenteringContractError(
            "Групповое сглаживание требует базиса, ортогонального интерсепту."
        )

    codes = np.asarray(codes)
    n_rows, n_smooth = block.design.shape
    if codes.shape != (n_rows,):
        raise DataError("Группирующий фактор не задан для каждой строки.")
    if n_levels < 1 or codes.min() < 0 or codes.max() >= n_levels:
        raise DataError("Коды уровней вне диапазона группирующего фактора.")

    if mode == "factor_smooth":
        linked = True
        local = np.column_stack([block.design, np.ones(n_rows)])
    else:
        local = block.design

    smooth_columns = np.arange(n_smooth)
    penalties: list[GroupedPenalty] = []
    lambda_groups: list[tuple[int, ...]] = []

    def add_role(role: str, columns: np.ndarray, matrix: np.ndarray) -> None:
        start = len(penalties)
        penalties.extend(
            GroupedPenalty(role=role, level=g, columns=columns, matrix=matrix)
            for g in range(n_levels)
        )
        indices = tuple(range(start, len(penalties)))
        if linked:
            lambda_groups.append(indices)
        else:
            lambda_groups.extend((i,) for i in indices)

    for role, matrix in zip(block.penalty_roles, block.penalties):
        add_role(role, smooth_columns, matrix)
    if mode == "factor_smooth":
        add_role(INTERCEPT, np.array([n_smooth]), np.eye(1))

    logger.debug(
        "expand_grouped: mode=%s levels=%s width=%s lambda_groups=%s",
        mode,
        n_levels,
        local.shape[1],
        len(lambda_groups),
    )
    return GroupedBlock(
        local=local,
        codes=codes.astype(np.intp),
        n_levels=n_levels,
        mode=mode,
        smooth_columns=n_smooth,
        penalties=tuple(penalties),
        lambda_groups=tuple(lambda_groups),
        block=block,
    )
