import numpy as np

from config.exceptions import (
    BasisDomainError,
    InsufficientDataError,
    ParameterError,
)

from .models import BasisSpec

KNOT_RULES = {"equispaced"}


def validate_basis_spec(spec: BasisSpec) -> BasisSpec:
    """
    Проверка инвариантов BasisSpec: k >= 4, m из {1, 2}, lo < hi,
    известное правило узлов.
    """
    if spec.k < 4:
        raise ParameterError(f"Размерность базиса k должна быть >= 4, получено {spec.k}.")
    if spec.m not in (1, 2):
        raise ParameterError(f"Порядок штрафа m должен быть 1 или 2, получено {spec.m}.")
    if spec.knot_rule not in KNOT_RULES:
        raise ParameterError(f"Неизвестное правило узлов: {spec.knot_rule}.")
    if spec.domain is not None:
        lo, hi = spec.domain
        if not lo < hi:
            raise ParameterError(f"Область базиса пуста: [{lo}, {hi}].")
    return spec


def validate_covariate(x: np.ndarray, spec: BasisSpec) -> tuple[float, float]:
    """
    Проверка значений ковариаты и выбор области базиса.
    Возвращает (lo, hi).
    """
    if x.size and not np.all(np.isfinite(x)):
        raise BasisDomainError("Ковариата содержит нечисловые значения.")
    if x.size < spec.k:
        raise InsufficientDataError(
            f"Для базиса из {spec.k} функций нужно не меньше {spec.k} точек, "
            f"получено {x.size}."
        )

    if spec.domain is None:
        lo, hi = float(x.min()), float(x.max())
        if not lo < hi:
            raise BasisDomainError("Ковариата постоянна: область базиса пуста.")
        return lo, hi

    lo, hi = (float(v) for v in spec.domain)
    tol = 1e-12 * (hi - lo)
    if x.min() < lo - tol or x.max() > hi + tol:
        raise BasisDomainError(
            f"Значения ковариаты [{x.min()}, {x.max()}] вне области [{lo}, {hi}]."
        )
    return lo, hi
