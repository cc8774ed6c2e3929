"""
Компоненты дисперсии и их приближённые доверительные интервалы.
sd случайного члена или сглаживания: σ_t = σ/√λ; для коррелированного
блока sd и корреляция берутся из σ²ΛΛᵀ. Интервалы Вальда строятся по
численному гессиану непрофилированного REML в координатах log-sd
(для корреляции: atanh).
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from config import settings
from config.exceptions import NumericalError

from ..models import PenalizedSystem, VarComp

logger = logging.getLogger(__name__)

CI_LEVEL = 0.95


@dataclass(frozen=True)
class _Coordinate:
    name: str
    role: str
    kind: str  # lambda | chol_int | chol_slope | chol_cor
    params: tuple[int, ...]


def _coordinates(system: PenalizedSystem) -> list[_Coordinate]:
    coords: list[_Coordinate] = []
    seen: set[int] = set()
    for term in system.penalty_terms:
        if term.kind == "correlated":
            a, _, d = term.params
            first, second = term.labels or (f"{term.name}.1", f"{term.name}.2")
            coords += [
                _Coordinate(first, system.params[a].role, "chol_int", term.params),
                _Coordinate(second, system.params[d].role, "chol_slope", term.params),
                _Coordinate(f"cor({first}, {second})", "cor", "chol_cor", term.params),
            ]
            continue
        for index in term.params:
            if index not in seen:
                seen.add(index)
                info = system.params[index]
                coords.append(_Coordinate(info.name, info.role, "lambda", (index,)))
    return coords


def _to_log_sd(coord: _Coordinate, theta: np.ndarray, log_sigma: float) -> float:
    if coord.kind == "lambda":
        return log_sigma - 0.5 * theta[coord.params[0]]
    a, c, d = (theta[i] for i in coord.params)
    if coord.kind == "chol_int":
        return log_sigma + a
    slope2 = c * c + np.exp(2.0 * d)
    if coord.kind == "chol_slope":
        return log_sigma + 0.5 * np.log(slope2)
    return float(np.arctanh(np.clip(c / np.sqrt(slope2), -1 + 1e-15, 1 - 1e-15)))


def _to_theta(
    coords: list[_Coordinate], phi: np.ndarray, template: np.ndarray
) -> tuple[np.ndarray, float]:
    """Обратное отображение: (log σ, log sd ..., atanh r) -> (theta, log σ)."""
    log_sigma = phi[0]
    theta = template.copy()
    blocks: dict[tuple[int, ...], dict[str, float]] = {}
    for coord, value in zip(coords, phi[1:]):
        if coord.kind == "lambda":
            theta[coord.params[0]] = 2.0 * (log_sigma - value)
        else:
            blocks.setdefault(coord.params, {})[coord.kind] = value
    for (a, c, d), parts in blocks.items():
        r = np.tanh(parts["chol_cor"])
        v = parts["chol_slope"] - log_sigma
        theta[a] = parts["chol_int"] - log_sigma
        theta[c] = r * np.exp(v)
        theta[d] = v + 0.5 * np.log1p(-r * r)
    return theta, log_sigma


def _hessian(
    function: Callable[[np.ndarray], float], point: np.ndarray, step: float = 1e-3
) -> np.ndarray:
    size = point.size
    hess = np.zeros((size, size))
    center = function(point)
    for i in range(size):
        e_i = np.zeros(size)
        e_i[i] = step
        hess[i, i] = (function(point + e_i) - 2.0 * center + function(point - e_i)) / step**2
        for j in range(i):
            e_j = np.zeros(size)
            e_j[j] = step
            hess[i, j] = hess[j, i] = (
                function(point + e_i + e_j)
                - function(point + e_i - e_j)
                - function(point - e_i + e_j)
                + function(point - e_i - e_j)
            ) / (4.0 * step**2)
    return hess


def variance_components(
    system: PenalizedSystem,
    theta: np.ndarray,
    sigma_scaled: float,
    parts: Callable[[np.ndarray], tuple[float, float]],
    compute_ci: bool = True,
) -> tuple[VarComp, ...]:
    """
    Оценки sd (шкала исходного отклика) с флагом границы и, по запросу,
    интервалы Вальда. parts(theta) -> (Dp, log|C|) на стандартизованной шкале.
    """
    scale = system.scale
    threshold = settings.BOUNDARY_SD_RATIO * float(np.std(system.y))
    coords = _coordinates(system)
    log_sigma = float(np.log(sigma_scaled))
    phi = np.array([log_sigma] + [_to_log_sd(c, theta, log_sigma) for c in coords])

    estimates, boundary = [], []
    for coord, value in zip(coords, phi[1:]):
        if coord.kind == "chol_cor":
            r = float(np.tanh(value))
            estimates.append(r)
            boundary.append(abs(r) > 0.999)
        else:
            sd = float(np.exp(value) * scale)
            estimates.append(sd if sd >= threshold else 0.0)
            boundary.append(sd < threshold)
    for k, coord in enumerate(coords):
        if coord.kind == "chol_cor":
            boundary[k] = boundary[k] or boundary[k - 1] or boundary[k - 2]

    intervals: list[tuple[float, float] | None] = [None] * (len(coords) + 1)
    if compute_ci:
        intervals = _wald_intervals(system, theta, coords, phi, boundary, parts)

    components = [
        VarComp(
            name=coord.name,
            role=coord.role,
            estimate=estimate,
            kind="cor" if coord.kind == "chol_cor" else "sd",
            ci=None if flag else intervals[k + 1],
            boundary=flag,
        )
        for k, (coord, estimate, flag) in enumerate(zip(coords, estimates, boundary))
    ]
    for component in components:
        if component.boundary:
            logger.warning("Variance component %s is on the boundary", component.name)
    components.append(
        VarComp(name="Residual", role="sigma", estimate=sigma_scaled * scale, ci=intervals[0])
    )
    return tuple(components)


def _wald_intervals(
    system: PenalizedSystem,
    theta: np.ndarray,
    coords: list[_Coordinate],
    phi: np.ndarray,
    boundary: list[bool],
    parts: Callable[[np.ndarray], tuple[float, float]],
) -> list[tuple[float, float] | None]:
    dof = system.n - system.null_dim
    free = np.array([True] + [not flag for flag in boundary])

    def negative_loglik(free_phi: np.ndarray) -> float:
        point = phi.copy()
        point[free] = free_phi
        point_theta, log_sigma = _to_theta(coords, point, theta)
        deviance, logdet_c = parts(point_theta)
        sigma2 = np.exp(2.0 * log_sigma)
        return 0.5 * (
            deviance / sigma2
            + dof * np.log(2.0 * np.pi * sigma2)
            + logdet_c
            - system.log_pdet(point_theta)
        )

    intervals: list[tuple[float, float] | None] = [None] * phi.size
    try:
        hess = _hessian(negative_loglik, phi[free])
    except NumericalError:
        logger.warning("Hessian of REML is not available, confidence intervals omitted")
        return intervals

    eigvals = np.linalg.eigvalsh(hess)
    if not np.all(np.isfinite(eigvals)) or eigvals.min() <= 1e-10 * max(1.0, eigvals.max()):
        logger.warning("Hessian of REML is singular, confidence intervals omitted")
        return intervals

    se = np.sqrt(np.diag(np.linalg.inv(hess)))
    z = stats.norm.ppf(0.5 + CI_LEVEL / 2.0)
    kinds = ["sigma"] + [coord.kind for coord in coords]
    for k, index in enumerate(np.flatnonzero(free)):
        lo, hi = phi[index] - z * se[k], phi[index] + z * se[k]
        if kinds[index] == "chol_cor":
            intervals[index] = (float(np.tanh(lo)), float(np.tanh(hi)))
        else:
            intervals[index] = (float(np.exp(lo) * system.scale), float(np.exp(hi) * system.scale))
    return intervals
