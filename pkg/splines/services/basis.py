"""
Построение сплайновых базисов и их штрафов.
Семейство: кубические B-сплайны на равномерных узлах с разностным
штрафом второго порядка (P-сплайны). Нуль-пространство разностного
штрафа содержит аффинные функции; при m=1 оно штрафуется отдельно.
"""

import logging

import numpy as np
from scipy.interpolate import BSpline

from config.exceptions import CenteringContractError

from ..models import CURVATURE, NULL_SPACE, BasisBlock, BasisSpec
from ..validators import validate_basis_spec, validate_covariate

logger = logging.getLogger(__name__)

DEGREE = 3


def equispaced_knots(lo: float, hi: float, k: int) -> np.ndarray:
    """
    k-4 внутренних узлов равномерно внутри (lo, hi) плюс по три
    дополнительных узла с каждой стороны: всего k+4 узла, k функций.
    """
    n_segments = k - DEGREE
    dx = (hi - lo) / n_segments
    return lo + dx * np.arange(-DEGREE, n_segments + DEGREE + 1)


def difference_penalty(k: int, order: int = 2) -> np.ndarray:
    d = np.diff(np.eye(k), order, axis=0)
    return d.T @ d


def null_space_penalty(k: int) -> np.ndarray:
    """
    Тождественный штраф на ортонормированном базисе нуль-пространства
    разностного штрафа (константа и линейный тренд по индексу).
    """
    affine = np.column_stack([np.ones(k), np.arange(k, dtype=float)])
    q, _ = np.linalg.qr(affine)
    return q @ q.T


def build_basis(x: np.ndarray, spec: BasisSpec) -> BasisBlock:
    """
    Вычисление базиса в точках x.
    m=2: один штраф (кривизна); m=1: кривизна плюс штраф нуль-пространства.
    Результат не центрирован и полностью определяется (x, spec).
    """
    validate_basis_spec(spec)
    x = np.asarray(x, dtype=float).ravel()
    lo, hi = validate_covariate(x, spec)

    knots = equispaced_knots(lo, hi, spec.k)
    design = BSpline.design_matrix(x, knots, DEGREE, extrapolate=True).toarray()

    penalties = [difference_penalty(spec.k)]
    roles = [CURVATURE]
    if spec.m == 1:
        penalties.append(null_space_penalty(spec.k))
        roles.append(NULL_SPACE)

    return BasisBlock(
        design=design,
        penalties=tuple(penalties),
        penalty_roles=tuple(roles),
        centered=False,
        spec=spec,
        domain=(lo, hi),
        knots=knots,
        transform=np.eye(spec.k),
    )


def absorb_intercept(block: BasisBlock) -> BasisBlock:
    """
    Поглощение ограничения 1ᵀBβ = 0.
    QR-разложение вектора ограничения C = 1ᵀB: столбцы Q кроме первого
    задают репараметризацию Z, B' = BZ, S' = ZᵀSZ.
    Потеря ранга не считается ошибкой и попадает в warnings блока.
    """
    if block.centered:
        raise CenteringContractError("Базис уже ортогонален константе.")

    design = block.design
    constraint = design.sum(axis=0)[:, None]
    warnings = list(block.warnings)

    scale = np.abs(design).max() * design.shape[0]
    if np.linalg.norm(constraint) <= 1e-12 * scale:
        warnings.append("constraint vector is numerically zero")

    q, _ = np.linalg.qr(constraint, mode="complete")
    z = q[:, 1:]
    centered_design = design @ z

    rank = np.linalg.matrix_rank(centered_design)
    if rank < z.shape[1]:
        warnings.append(
            f"centered basis has rank {rank} of {z.shape[1]} columns"
        )
    for message in warnings[len(block.warnings):]:
        logger.warning("absorb_intercept: %s", message)

    return BasisBlock(
        design=centered_design,
        penalties=tuple(z.T @ s @ z for s in block.penalties),
        penalty_roles=block.penalty_roles,
        centered=True,
        spec=block.spec,
        domain=block.domain,
        knots=block.knots,
        transform=block.transform @ z,
        warnings=tuple(warnings),
    )
