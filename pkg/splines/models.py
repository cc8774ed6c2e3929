"""
Доменные типы сплайновых базисов.
Все объекты неизменяемы после создания и могут безопасно
разделяться между параллельными репликами.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

SmoothMode = Literal["population", "factor_smooth", "by_smooth"]

# Роли штрафов внутри одного сглаживания
CURVATURE = "curvature"
NULL_SPACE = "null"
INTERCEPT = "intercept"


@dataclass(frozen=True)
class BasisSpec:
    """
    Описание базиса:
    - k: число базисных функций до поглощения ограничения;
    - m: 2 штрафует только кривизну, 1 дополнительно штрафует линейную часть;
    - domain: отрезок [lo, hi]; None означает [min(x), max(x)];
    - knot_rule: правило расстановки узлов.
    """

    k: int = 20
    m: int = 1
    domain: tuple[float, float] | None = None
    knot_rule: str = "equispaced"


@dataclass(frozen=True, eq=False)
class BasisBlock:
    """
    Вычисленный базис с матрицами штрафов.
    transform отображает исходные коэффициенты B-сплайна в текущие:
    design == raw_design @ transform.
    """

    design: np.ndarray
    penalties: tuple[np.ndarray, ...]
    penalty_roles: tuple[str, ...]
    centered: bool
    spec: BasisSpec
    domain: tuple[float, float]
    knots: np.ndarray
    transform: np.ndarray
    warnings: tuple[str, ...] = ()

    @property
    def n_columns(self) -> int:
        return int(self.design.shape[1])


@dataclass(frozen=True)
class SmoothTermSpec:
    """
    Сглаживание по ковариате (время эксперимента).
    factor_smooth всегда использует один lambda на все уровни;
    by_smooth делит lambda только при заданном lambda_link_id.
    center=False оставляет базис неортогональным к константе
    (воспроизведение старой ошибки факторных сглаживаний).
    """

    covariate: str
    mode: SmoothMode = "population"
    group: str | None = None
    basis: BasisSpec = field(default_factory=BasisSpec)
    lambda_link_id: str | None = None
    label: str | None = None
    center: bool = True

    @property
    def linked(self) -> bool:
        return self.mode == "factor_smooth" or self.lambda_link_id is not None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        covariate = self.covariate.capitalize()
        group = (self.group or "").capitalize()
        if self.mode == "factor_smooth":
            return f"s({covariate},{group})"
        if self.mode == "by_smooth":
            return f"s({covariate}):{group}"
        return f"s({covariate})"


@dataclass(frozen=True)
class GroupedPenalty:
    """Один штраф одного уровня группирующего фактора."""

    role: str
    level: int
    columns: np.ndarray
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class GroupedBlock:
    """
    Разложение базиса по уровням группирующего фактора.
    local: для каждой строки значения столбцов её собственного уровня;
    столбцы полной матрицы Z упорядочены по уровням (уровень за уровнем).
    lambda_groups: разбиение индексов penalties на группы с общим lambda.
    """

    local: np.ndarray
    codes: np.ndarray
    n_levels: int
    mode: SmoothMode
    smooth_columns: int
    penalties: tuple[GroupedPenalty, ...]
    lambda_groups: tuple[tuple[int, ...], ...]
    block: BasisBlock

    @property
    def width(self) -> int:
        return int(self.local.shape[1])

    @property
    def Z(self) -> sp.csr_matrix:
        """Блочно-диагональная по уровням матрица плана (разреженная)."""
        n, width = self.local.shape
        rows = np.repeat(np.arange(n), width)
        cols = (self.codes[:, None] * width + np.arange(width)[None, :]).ravel()
        return sp.csr_matrix(
            (self.local.ravel(), (rows, cols)),
            shape=(n, self.n_levels * width),
        )
