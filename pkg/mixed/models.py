"""
Доменные типы смешанной модели со штрафованными сплайнами.
PenalizedSystem, FitResult и сопутствующие объекты неизменяемы и
могут разделяться между параллельными подгонками.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from splines.models import SmoothTermSpec

from .expressions import Expression

DEFAULT_LEVELS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("factor_within", ("A", "B")),
    ("factor_between", ("X", "Y")),
)

RandomForm = Literal["intercept", "slope_on", "correlated_intercept_slope"]
PenaltyKind = Literal["smooth", "ridge", "correlated"]
Target = Literal["dense", "grouped"]
ParamKind = Literal["log_lambda", "chol_log", "chol_off"]


@dataclass(frozen=True)
class RandomTermSpec:
    """
    Случайный член по группирующему фактору.
    roles: метки компонент дисперсии (sigma_b, sigma_alpha, sigma_bw)
    в порядке столбцов члена.
    """

    group: str
    form: RandomForm = "intercept"
    expression: Expression | None = None
    name: str | None = None
    roles: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return 2 if self.form == "correlated_intercept_slope" else 1

    def column_labels(self) -> tuple[str, ...]:
        group = self.group.capitalize()
        if self.form == "intercept":
            return (f"{group} (Intercept)",)
        label = self.expression.label if self.expression else "?"
        if self.form == "slope_on":
            return (f"{group} {label}",)
        return (f"{group} (Intercept)", f"{group} {label}")


@dataclass(frozen=True)
class ModelSpec:
    """
    Декларативное описание модели: фиксированные члены (факторы и их
    взаимодействия через ":", числовые ковариаты), случайные члены и
    сглаживания. Кодирование treatment, опорные уровни A и X.
    """

    response: str = "response"
    intercept: bool = True
    fixed: tuple[str, ...] = ("factor_within", "factor_between")
    covariates: tuple[Expression, ...] = ()
    random: tuple[RandomTermSpec, ...] = ()
    smooths: tuple[SmoothTermSpec, ...] = ()
    levels: tuple[tuple[str, tuple[str, ...]], ...] = DEFAULT_LEVELS
    name: str = "model"

    def levels_of(self, factor: str) -> tuple[str, ...] | None:
        return dict(self.levels).get(factor)


@dataclass(frozen=True)
class ParamInfo:
    """Один параметр оптимизации REML."""

    name: str
    kind: ParamKind
    term: str
    role: str
    lower: float | None
    upper: float | None


@dataclass(frozen=True)
class TermInfo:
    """
    Член модели и его столбцы.
    Для target="dense" columns индексируют плотную часть,
    для "grouped" локальный блок уровня; levels=None означает все уровни.
    """

    name: str
    kind: Literal["fixed", "smooth", "random"]
    target: Target
    columns: np.ndarray
    levels: np.ndarray | None = None
    mode: str | None = None


@dataclass(frozen=True, eq=False)
class PenaltyTerm:
    """
    Штраф одного члена. Для kind="smooth" штраф равен сумме exp(rho_j)·S_j;
    для "ridge" exp(rho)·I; для "correlated" (ΛΛᵀ)⁻¹ с Λ = [[e^a, 0], [c, e^d]].
    Логарифм псевдоопределителя считается по заранее найденной структуре
    (ранг, константа, собственные числа mu для пары штрафов).
    """

    name: str
    kind: PenaltyKind
    target: Target
    columns: np.ndarray
    params: tuple[int, ...]
    multiplicity: int
    levels: np.ndarray | None = None
    matrices: tuple[np.ndarray, ...] = ()
    rank: int = 0
    logdet_const: float = 0.0
    null_dim: int = 0
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    labels: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return int(self.columns.size)

    @property
    def unpenalized_dim(self) -> int:
        return (self.width - self.rank) * self.multiplicity

    def matrix(self, theta: np.ndarray) -> np.ndarray:
        if self.kind == "ridge":
            return np.exp(theta[self.params[0]]) * np.eye(self.width)
        if self.kind == "correlated":
            a, c, d = (theta[i] for i in self.params)
            inv_a, inv_d = np.exp(-a), np.exp(-d)
            factor_inv = np.array([[inv_a, 0.0], [-c * inv_a * inv_d, inv_d]])
            return factor_inv.T @ factor_inv
        total = np.zeros((self.width, self.width))
        for index, penalty in zip(self.params, self.matrices):
            total += np.exp(theta[index]) * penalty
        return total

    def log_pdet(self, theta: np.ndarray) -> float:
        if self.kind == "ridge":
            value = self.width * theta[self.params[0]]
        elif self.kind == "correlated":
            value = -2.0 * (theta[self.params[0]] + theta[self.params[2]])
        elif len(self.params) == 1:
            value = self.rank * theta[self.params[0]] + self.logdet_const
        else:
            rho1, rho2 = theta[self.params[0]], theta[self.params[1]]
            positive = self.mu > 0
            value = (
                self.logdet_const
                + self.null_dim * rho2
                + np.logaddexp(rho1, rho2 + np.log(self.mu[positive])).sum()
                + (~positive).sum() * rho1
            )
        return float(self.multiplicity * value)


@dataclass(frozen=True)
class CrossProducts:
    """Перекрёстные произведения стандартизованного отклика и плана."""

    dense_dense: np.ndarray
    dense_y: np.ndarray
    yy: float
    local_local: np.ndarray
    local_dense: np.ndarray
    local_y: np.ndarray


@dataclass(frozen=True, eq=False)
class PenalizedSystem:
    """
    Собранная штрафованная система.
    Полный план [A0 | Z]: A0 = [X | популяционные сглаживания],
    Z блочно-диагонален по уровням группы, столбцы уровень за уровнем;
    строка i в Z ненулевая только в блоке уровня codes[i] и равна local[i].
    scale: sd(y), на которое делится отклик при оценивании.
    """

    y: np.ndarray
    dense: np.ndarray
    n_fixed: int
    dense_names: tuple[str, ...]
    local: np.ndarray
    local_names: tuple[str, ...]
    codes: np.ndarray
    n_levels: int
    level_labels: tuple[str, ...]
    group: str | None
    terms: tuple[TermInfo, ...]
    penalty_terms: tuple[PenaltyTerm, ...]
    params: tuple[ParamInfo, ...]
    null_dim: int
    scale: float
    model_name: str = "model"

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def n_dense(self) -> int:
        return int(self.dense.shape[1])

    @property
    def width(self) -> int:
        return int(self.local.shape[1])

    @property
    def n_coefficients(self) -> int:
        return self.n_dense + self.n_levels * self.width

    @property
    def fixed_names(self) -> tuple[str, ...]:
        return self.dense_names[: self.n_fixed]

    @property
    def initial_params(self) -> np.ndarray:
        return np.zeros(len(self.params))

    @cached_property
    def crossprod(self) -> CrossProducts:
        ys = self.y / self.scale
        local, dense, codes = self.local, self.dense, self.codes
        n_levels, width = self.n_levels, self.width

        local_local = np.zeros((n_levels, width, width))
        local_dense = np.zeros((n_levels, width, self.n_dense))
        local_y = np.zeros((n_levels, width))
        if width:
            np.add.at(local_local, codes, local[:, :, None] * local[:, None, :])
            np.add.at(local_dense, codes, local[:, :, None] * dense[:, None, :])
            np.add.at(local_y, codes, local * ys[:, None])

        return CrossProducts(
            dense_dense=dense.T @ dense,
            dense_y=dense.T @ ys,
            yy=float(ys @ ys),
            local_local=local_local,
            local_dense=local_dense,
            local_y=local_y,
        )

    def term(self, name: str) -> TermInfo:
        for term in self.terms:
            if term.name == name:
                return term
        raise KeyError(name)

    def global_columns(self, term: TermInfo, levels: np.ndarray | None = None) -> np.ndarray:
        """Индексы столбцов члена в полном векторе коэффициентов."""
        if term.target == "dense":
            return term.columns.copy()
        if levels is None:
            levels = term.levels if term.levels is not None else np.arange(self.n_levels)
        offsets = self.n_dense + np.asarray(levels)[:, None] * self.width
        return (offsets + term.columns[None, :]).ravel()

    def penalty_blocks(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Штраф плотной части (p0×p0) и штрафы уровней (L×d×d)."""
        dense_penalty = np.zeros((self.n_dense, self.n_dense))
        local_penalty = np.zeros((self.n_levels, self.width, self.width))
        for term in self.penalty_terms:
            block = term.matrix(theta)
            cols = term.columns
            if term.target == "dense":
                dense_penalty[np.ix_(cols, cols)] += block
            elif term.levels is None:
                local_penalty[:, cols[:, None], cols[None, :]] += block
            else:
                local_penalty[np.ix_(term.levels, cols, cols)] += block
        return dense_penalty, local_penalty

    def log_pdet(self, theta: np.ndarray) -> float:
        return float(sum(term.log_pdet(theta) for term in self.penalty_terms))

    def dense_design(self) -> np.ndarray:
        """Полная плотная матрица [A0 | Z] (для проверок на малых задачах)."""
        z = np.zeros((self.n, self.n_levels * self.width))
        rows = np.arange(self.n)[:, None]
        cols = self.codes[:, None] * self.width + np.arange(self.width)[None, :]
        z[rows, cols] = self.local
        return np.hstack([self.dense, z])

    def dense_penalty(self, theta: np.ndarray) -> np.ndarray:
        """Полная блочно-диагональная матрица штрафа."""
        dense_penalty, local_penalty = self.penalty_blocks(theta)
        total = np.zeros((self.n_coefficients, self.n_coefficients))
        total[: self.n_dense, : self.n_dense] = dense_penalty
        for level in range(self.n_levels):
            start = self.n_dense + level * self.width
            stop = start + self.width
            total[start:stop, start:stop] = local_penalty[level]
        return total


@dataclass(frozen=True, eq=False)
class Posterior:
    """
    Блоки обратной штрафованной матрицы C = AᵀA + P.
    C⁻¹ = diag(0, D⁻¹) + M S⁻¹ Mᵀ, где M = [I; -W], W_g = D_g⁻¹ G_gᵀA0.
    """

    schur_inv: np.ndarray
    local_inv: np.ndarray
    weights: np.ndarray
    n_dense: int
    width: int

    def block(self, rows: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
        """Подматрица C⁻¹[rows, cols] без построения всей матрицы."""
        rows = np.asarray(rows)
        cols = rows if cols is None else np.asarray(cols)
        m_rows, m_cols = self._m_rows(rows), self._m_rows(cols)
        result = m_rows @ self.schur_inv @ m_cols.T

        row_grouped, col_grouped = rows >= self.n_dense, cols >= self.n_dense
        if row_grouped.any() and col_grouped.any():
            r_level, r_local = divmod(rows[row_grouped] - self.n_dense, self.width)
            c_level, c_local = divmod(cols[col_grouped] - self.n_dense, self.width)
            same = r_level[:, None] == c_level[None, :]
            values = self.local_inv[r_level[:, None], r_local[:, None], c_local[None, :]]
            result[np.ix_(row_grouped, col_grouped)] += np.where(same, values, 0.0)
        return result

    def _m_rows(self, index: np.ndarray) -> np.ndarray:
        out = np.zeros((index.size, self.n_dense))
        dense = index < self.n_dense
        out[np.flatnonzero(dense), index[dense]] = 1.0
        if (~dense).any():
            level, local = divmod(index[~dense] - self.n_dense, self.width)
            out[~dense] = -self.weights[level, local]
        return out


@dataclass(frozen=True)
class VarComp:
    """Компонента дисперсии: sd (или корреляция) и приближённый Вальдовский ДИ."""

    name: str
    role: str
    estimate: float
    kind: Literal["sd", "cor"] = "sd"
    ci: tuple[float, float] | None = None
    boundary: bool = False


@dataclass(frozen=True)
class CoefficientRow:
    name: str
    estimate: float
    se: float
    statistic: float
    p: float


@dataclass(frozen=True)
class SmoothTest:
    """Приближённый Вальдовский тест сглаживания (F-референс)."""

    term: str
    edf: float
    statistic: float | None
    p: float | None
    applicable: bool
    note: str = "approximate"


@dataclass(frozen=True)
class PenalizedSolution:
    """Решение штрафованных нормальных уравнений при фиксированных параметрах."""

    params: np.ndarray
    coefficients: np.ndarray
    penalized_deviance: float
    sigma: float
    reml: float


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    Результат REML-подгонки (шкала исходного отклика).
    lambdas: exp(rho) для параметров-лямбд, в порядке lambda_names.
    """

    system: PenalizedSystem
    params: np.ndarray
    lambda_names: tuple[str, ...]
    lambdas: np.ndarray
    coefficients: np.ndarray
    fixed_names: tuple[str, ...]
    beta_hat: np.ndarray
    se: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    sigma_hat: float
    varcomp: tuple[VarComp, ...]
    edf: dict[str, float]
    column_edf: np.ndarray
    total_edf: float
    resid_df: float
    reml: float
    loglik: float
    aic: float
    fitted: np.ndarray
    converged: bool
    grad_norm: float
    n_iter: int
    method: str
    posterior: Posterior

    @property
    def residuals(self) -> np.ndarray:
        return self.system.y - self.fitted

    @cached_property
    def coef_cov(self) -> np.ndarray:
        """Апостериорная ковариация всех коэффициентов σ²·C⁻¹."""
        index = np.arange(self.system.n_coefficients)
        return self.sigma_hat**2 * self.posterior.block(index)

    def coef_cov_block(self, index: np.ndarray) -> np.ndarray:
        return self.sigma_hat**2 * self.posterior.block(np.asarray(index))

    def varcomp_by_role(self, role: str) -> VarComp | None:
        for component in self.varcomp:
            if component.role == role:
                return component
        return None

    def coefficient(self, name: str) -> tuple[float, float, float]:
        """(оценка, se, p) фиксированного коэффициента по имени."""
        index = self.fixed_names.index(name)
        return (
            float(self.beta_hat[index]),
            float(self.se[index]),
            float(self.p_values[index]),
        )
