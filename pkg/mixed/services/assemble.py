"""
Сборка штрафованной системы из ModelSpec и данных.
Порядок столбцов канонический: [X | популяционные сглаживания],
затем групповые столбцы уровень за уровнем; внутри уровня сначала
сглаживания (в порядке спецификации), затем случайные члены.
Благодаря этому факторное сглаживание и by-сглаживание со случайным
интерсептом дают одну и ту же систему.
"""

import logging
from typing import Any

import numpy as np
import pandas as pd
from scipy import linalg

from config import settings
from config.exceptions import DataError, SpecificationError
from splines.models import INTERCEPT, BasisBlock, GroupedBlock, SmoothTermSpec
from splines.services.basis import absorb_intercept, build_basis
from splines.services.grouped import expand_grouped

from ..models import (
    ModelSpec,
    ParamInfo,
    ParamKind,
    PenalizedSystem,
    PenaltyTerm,
    TermInfo,
)
from ..validators import check_columns, response_vector, validate_model_spec
from .penalty import correlated_penalty, ridge_penalty, smooth_penalty

logger = logging.getLogger(__name__)

# Роли компонент дисперсии для штрафов сглаживаний
SMOOTH_ROLES = {
    "curvature": "sigma_t",
    "null": "sigma_t_null",
    INTERCEPT: "sigma_b",
}

DEFAULT_RANDOM_ROLES = {
    "intercept": ("sigma_b",),
    "slope_on": ("sigma_slope",),
    "correlated_intercept_slope": ("sigma_b", "sigma_slope"),
}


def _factor_levels(frame: pd.DataFrame, factor: str, spec: ModelSpec) -> tuple[str, ...]:
    observed = sorted(frame[factor].astype(str).unique())
    allowed = spec.levels_of(factor)
    if allowed is None:
        return tuple(observed)
    unknown = [level for level in observed if level not in allowed]
    if unknown:
        raise DataError(f"Неизвестные уровни фактора {factor}: {', '.join(unknown)}.")
    return allowed


def _fixed_design(frame: pd.DataFrame, spec: ModelSpec) -> tuple[np.ndarray, list[str]]:
    """Фиксированная часть в кодировании treatment (опорный уровень первый)."""
    columns: list[np.ndarray] = []
    names: list[str] = []
    if spec.intercept:
        columns.append(np.ones(len(frame)))
        names.append("(Intercept)")

    indicators: dict[str, list[tuple[str, np.ndarray]]] = {}

    def factor_indicators(factor: str) -> list[tuple[str, np.ndarray]]:
        if factor not in indicators:
            levels = _factor_levels(frame, factor, spec)
            values = frame[factor].astype(str).to_numpy()
            indicators[factor] = [
                (f"{factor}{level}", (values == level).astype(float)) for level in levels[1:]
            ]
        return indicators[factor]

    for term in spec.fixed:
        parts = term.split(":")
        combos: list[tuple[str, np.ndarray]] = [("", np.ones(len(frame)))]
        for factor in parts:
            combos = [
                (f"{name}:{label}" if name else label, value * column)
                for name, value in combos
                for label, column in factor_indicators(factor)
            ]
        for name, column in combos:
            names.append(name)
            columns.append(column)

    for expression in spec.covariates:
        names.append(expression.label)
        columns.append(expression.evaluate(frame))

    design = np.column_stack(columns) if columns else np.zeros((len(frame), 0))
    _check_rank(design, names)
    return design, names


def _check_rank(design: np.ndarray, names: list[str]) -> None:
    """Полный столбцовый ранг X; иначе ошибка с именами алиасных столбцов."""
    if design.shape[1] == 0:
        return
    _, r, pivots = linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int((diag > 1e-8 * max(diag[0], np.finfo(float).tiny)).sum())
    if rank < design.shape[1]:
        aliased = [names[i] for i in pivots[rank:]]
        raise SpecificationError(
            f"Матрица фиксированных эффектов вырождена, алиасные столбцы: {', '.join(aliased)}."
        )


def _smooth_block(frame: pd.DataFrame, smooth: SmoothTermSpec) -> BasisBlock:
    block = build_basis(frame[smooth.covariate].to_numpy(dtype=float), smooth.basis)
    if smooth.center:
        return absorb_intercept(block)
    logger.warning("Intercept orthogonalization skipped for %s", smooth.name)
    return block


def _standard_scale(y: np.ndarray) -> float:
    """sd(y): после деления на него отклик c·y совпадает с y до ulp при любом c > 0."""
    sd = float(np.std(y))
    if sd <= 0.0 or not np.isfinite(sd):
        return 1.0
    return sd


class _Builder:
    """Накапливает параметры, штрафы и члены при сборке."""

    def __init__(self, n_levels: int) -> None:
        self.n_levels = n_levels
        self.params: list[ParamInfo] = []
        self.penalties: list[PenaltyTerm] = []
        self.terms: list[TermInfo] = []

    def add_param(self, name: str, kind: ParamKind, term: str, role: str) -> int:
        bounds: tuple[float | None, float | None] = (None, None)
        if kind == "log_lambda":
            bounds = settings.LOG_LAMBDA_BOUNDS
        elif kind == "chol_log":
            bounds = settings.LOG_CHOL_BOUNDS
        lower, upper = bounds
        self.params.append(
            ParamInfo(name=name, kind=kind, term=term, role=role, lower=lower, upper=upper)
        )
        return len(self.params) - 1


def _add_dense_smooth(
    builder: _Builder, smooth: SmoothTermSpec, block: BasisBlock, offset: int
) -> None:
    params = tuple(
        builder.add_param(f"{smooth.name}:{role}", "log_lambda", smooth.name, SMOOTH_ROLES[role])
        for role in block.penalty_roles
    )
    columns = offset + np.arange(block.n_columns)
    builder.penalties.append(
        smooth_penalty(smooth.name, "dense", columns, block.penalties, params)
    )
    builder.terms.append(
        TermInfo(name=smooth.name, kind="smooth", target="dense", columns=columns, mode=smooth.mode)
    )


def _add_grouped_smooth(
    builder: _Builder,
    smooth: SmoothTermSpec,
    grouped: GroupedBlock,
    offset: int,
    labels: tuple[str, ...],
) -> None:
    """Параметры по группам lambda, штрафы объединяются по уровням с одинаковыми параметрами."""
    param_of: dict[int, int] = {}
    for indices in grouped.lambda_groups:
        first = grouped.penalties[indices[0]]
        name = smooth.name if smooth.linked else f"{smooth.name}{labels[first.level]}"
        pid = builder.add_param(
            f"{name}:{first.role}", "log_lambda", smooth.name, SMOOTH_ROLES[first.role]
        )
        for index in indices:
            param_of[index] = pid

    per_level: dict[tuple[int, tuple[int, ...]], list[tuple[Any, int, str]]] = {}
    for index, penalty in enumerate(grouped.penalties):
        key = (penalty.level, tuple(int(c) for c in penalty.columns))
        per_level.setdefault(key, []).append((penalty.matrix, param_of[index], penalty.role))

    signatures: dict[tuple[tuple[int, ...], tuple[int, ...]], tuple[tuple, str, list[int]]] = {}
    for (level, columns), items in per_level.items():
        signature = (columns, tuple(pid for _, pid, _ in items))
        matrices = tuple(matrix for matrix, _, _ in items)
        signatures.setdefault(signature, (matrices, items[0][2], []))[2].append(level)

    for (columns, pids), (matrices, role, levels) in signatures.items():
        cols = offset + np.array(columns)
        level_index = None if len(levels) == builder.n_levels else np.array(sorted(levels))
        multiplicity = len(levels)
        if role == INTERCEPT:
            penalty = ridge_penalty(smooth.name, cols, pids[0], multiplicity, level_index)
        else:
            penalty = smooth_penalty(
                smooth.name, "grouped", cols, matrices, pids, level_index, multiplicity
            )
        builder.penalties.append(penalty)

    builder.terms.append(
        TermInfo(
            name=smooth.name,
            kind="smooth",
            target="grouped",
            columns=offset + np.arange(grouped.width),
            mode=smooth.mode,
        )
    )


def assemble(spec: ModelSpec, data: Any) -> PenalizedSystem:
    """
    Сборка PenalizedSystem.
    data: LongDataset (атрибут frame) или pandas.DataFrame.
    Ошибки: вырожденная X → SpecificationError с именами столбцов,
    неизвестный уровень фактора → DataError.
    """
    frame: pd.DataFrame = getattr(data, "frame", data)
    validate_model_spec(spec)

    required = [spec.response]
    required += [factor for term in spec.fixed for factor in term.split(":")]
    required += [name for expression in spec.covariates for name in expression.columns]
    required += [smooth.covariate for smooth in spec.smooths]
    required += [smooth.group for smooth in spec.smooths if smooth.group]
    required += [term.group for term in spec.random]
    required += [
        name for term in spec.random if term.expression for name in term.expression.columns
    ]
    check_columns(frame, required)
    y = response_vector(frame, spec.response)

    x, fixed_names = _fixed_design(frame, spec)

    grouped_smooths = [s for s in spec.smooths if s.mode != "population"]
    population = [s for s in spec.smooths if s.mode == "population"]
    groups = {s.group for s in grouped_smooths} | {t.group for t in spec.random}
    if len(groups) > 1:
        names = ", ".join(sorted(map(str, groups)))
        raise SpecificationError(f"Поддерживается один группирующий фактор, заданы: {names}.")

    group = next(iter(groups)) if groups else None
    if group is not None:
        codes, uniques = pd.factorize(frame[group], sort=True)
        if (codes < 0).any():
            raise DataError(f"Группирующий фактор {group} содержит пропуски.")
        labels = tuple(str(u) for u in uniques)
    else:
        codes, labels = np.zeros(len(frame), dtype=np.intp), ()
    n_levels = len(labels)
    builder = _Builder(n_levels)

    # Плотная часть: X и популяционные сглаживания
    dense_blocks = [x]
    dense_names = list(fixed_names)
    for smooth in population:
        block = _smooth_block(frame, smooth)
        _add_dense_smooth(builder, smooth, block, sum(b.shape[1] for b in dense_blocks))
        dense_blocks.append(block.design)
        dense_names += [f"{smooth.name}.{j + 1}" for j in range(block.n_columns)]

    # Групповая часть: сглаживания, затем случайные члены
    local_blocks: list[np.ndarray] = []
    local_names: list[str] = []
    offset = 0
    for smooth in grouped_smooths:
        block = _smooth_block(frame, smooth)
        grouped = expand_grouped(
            block,
            codes,
            n_levels,
            smooth.mode,
            linked=smooth.linked,
            allow_uncentered=not smooth.center,
        )
        _add_grouped_smooth(builder, smooth, grouped, offset, labels)
        local_blocks.append(grouped.local)
        local_names += [f"{smooth.name}.{j + 1}" for j in range(grouped.smooth_columns)]
        if grouped.width > grouped.smooth_columns:
            local_names.append(f"{smooth.name}.(Intercept)")
        offset += grouped.width

    for term in spec.random:
        labels_of_term = term.column_labels()
        name = term.name or " + ".join(labels_of_term)
        roles = term.roles or DEFAULT_RANDOM_ROLES[term.form]
        columns = offset + np.arange(term.width)
        values = [np.ones(len(frame))] if term.form != "slope_on" else []
        if term.form != "intercept" and term.expression is not None:
            values.append(term.expression.evaluate(frame))

        if term.form == "correlated_intercept_slope":
            params = (
                builder.add_param(f"{name}:log_a", "chol_log", name, roles[0]),
                builder.add_param(f"{name}:c", "chol_off", name, "cor"),
                builder.add_param(f"{name}:log_d", "chol_log", name, roles[1]),
            )
            builder.penalties.append(
                correlated_penalty(name, columns, params, n_levels, labels_of_term)
            )
        else:
            pid = builder.add_param(labels_of_term[0], "log_lambda", name, roles[0])
            builder.penalties.append(ridge_penalty(name, columns, pid, n_levels))

        builder.terms.append(TermInfo(name=name, kind="random", target="grouped", columns=columns))
        local_blocks.append(np.column_stack(values))
        local_names += list(labels_of_term)
        offset += term.width

    for index, fixed_name in enumerate(fixed_names):
        builder.terms.insert(
            index,
            TermInfo(name=fixed_name, kind="fixed", target="dense", columns=np.array([index])),
        )

    dense = np.hstack(dense_blocks)
    local = np.hstack(local_blocks) if local_blocks else np.zeros((len(frame), 0))
    null_dim = len(fixed_names) + sum(p.unpenalized_dim for p in builder.penalties)
    if len(y) <= null_dim:
        raise SpecificationError(
            f"Наблюдений ({len(y)}) не больше, чем нештрафованных столбцов ({null_dim})."
        )

    system = PenalizedSystem(
        y=y,
        dense=dense,
        n_fixed=len(fixed_names),
        dense_names=tuple(dense_names),
        local=local,
        local_names=tuple(local_names),
        codes=np.asarray(codes, dtype=np.intp),
        n_levels=n_levels,
        level_labels=labels,
        group=group,
        terms=tuple(builder.terms),
        penalty_terms=tuple(builder.penalties),
        params=tuple(builder.params),
        null_dim=null_dim,
        scale=_standard_scale(y),
        model_name=spec.name,
    )
    logger.debug(
        "Assembled %s: n=%s dense=%s levels=%s width=%s params=%s",
        spec.name,
        system.n,
        system.n_dense,
        n_levels,
        system.width,
        len(system.params),
    )
    return system
