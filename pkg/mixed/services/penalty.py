"""
Конструкторы штрафов членов модели.
Для пары штрафов (кривизна + нуль-пространство) логарифм определителя
λ1·S1 + λ2·S2 считается устойчиво при любом соотношении λ1/λ2:
в базисе собственных векторов S1 блок нуль-пространства исключается
через дополнение Шура, остаток сводится к собственным числам mu.
"""

import numpy as np
from scipy import linalg

from config.exceptions import SpecificationError

from ..models import PenaltyTerm, Target

RANK_TOL = 1e-8


def _positive_eigen(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    values, vectors = np.linalg.eigh(matrix)
    tol = RANK_TOL * max(values.max(initial=0.0), np.finfo(float).tiny)
    keep = values > tol
    return values[keep], vectors[:, keep], vectors[:, ~keep]


def smooth_penalty(
    name: str,
    target: Target,
    columns: np.ndarray,
    matrices: tuple[np.ndarray, ...],
    params: tuple[int, ...],
    levels: np.ndarray | None = None,
    multiplicity: int = 1,
) -> PenaltyTerm:
    """Штраф сглаживания с одной или двумя матрицами."""
    if len(matrices) == 1:
        values, _, _ = _positive_eigen(matrices[0])
        return PenaltyTerm(
            name=name,
            kind="smooth",
            target=target,
            columns=columns,
            params=params,
            multiplicity=multiplicity,
            levels=levels,
            matrices=matrices,
            rank=int(values.size),
            logdet_const=float(np.log(values).sum()),
        )

    if len(matrices) != 2:
        raise SpecificationError(f"Член {name}: поддерживаются одна или две матрицы штрафа.")

    primary, secondary = matrices
    values, range_basis, null_basis = _positive_eigen(primary)
    null_dim = null_basis.shape[1]

    cross = range_basis.T @ secondary @ null_basis
    within = range_basis.T @ secondary @ range_basis
    logdet_null = 0.0
    if null_dim:
        null_block = null_basis.T @ secondary @ null_basis
        try:
            factor = linalg.cho_factor(null_block)
        except linalg.LinAlgError as exc:
            raise SpecificationError(
                f"Член {name}: суммарный штраф вырожден на нуль-пространстве."
            ) from exc
        logdet_null = 2.0 * float(np.log(np.diag(factor[0])).sum())
        within = within - cross @ linalg.cho_solve(factor, cross.T)

    inv_sqrt = 1.0 / np.sqrt(values)
    mu = np.linalg.eigvalsh(inv_sqrt[:, None] * within * inv_sqrt[None, :])
    mu = np.where(mu > 1e-12 * max(1.0, float(mu.max(initial=0.0))), mu, 0.0)

    return PenaltyTerm(
        name=name,
        kind="smooth",
        target=target,
        columns=columns,
        params=params,
        multiplicity=multiplicity,
        levels=levels,
        matrices=matrices,
        rank=int(columns.size),
        logdet_const=float(np.log(values).sum()) + logdet_null,
        null_dim=null_dim,
        mu=mu,
    )


def ridge_penalty(
    name: str,
    columns: np.ndarray,
    param: int,
    multiplicity: int,
    levels: np.ndarray | None = None,
) -> PenaltyTerm:
    """Тождественный штраф случайного интерсепта или наклона."""
    return PenaltyTerm(
        name=name,
        kind="ridge",
        target="grouped",
        columns=columns,
        params=(param,),
        multiplicity=multiplicity,
        levels=levels,
        rank=int(columns.size),
    )


def correlated_penalty(
    name: str,
    columns: np.ndarray,
    params: tuple[int, int, int],
    multiplicity: int,
    labels: tuple[str, ...] = (),
) -> PenaltyTerm:
    """Блок 2×2 с неструктурированной ковариацией (фактор Холецкого)."""
    return PenaltyTerm(
        name=name,
        kind="correlated",
        target="grouped",
        columns=columns,
        params=params,
        multiplicity=multiplicity,
        rank=2,
        labels=labels,
    )
