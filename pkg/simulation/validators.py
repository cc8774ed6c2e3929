import math

from config.exceptions import ParameterError

from .models import SimParams

GENERATOR_MODES = ("amplitude", "phase", "wiggly")


def validate_params(params: SimParams, mode: str) -> SimParams:
    """
    Проверка инвариантов SimParams для генератора заданного режима:
    - все sd неотрицательны, домен времени непуст;
    - число проб чётное (сбалансированные A/B), субъектов чётное при
      контрбалансировке;
    - параметры неактивных режимов равны нулю.
    """
    sds = {
        "sigma": params.sigma,
        "sigma_b": params.sigma_b,
        "sigma_bw": params.sigma_bw,
        "sigma_alpha": params.sigma_alpha,
        "sigma_phi": params.sigma_phi,
        "sigma_tprs": params.sigma_tprs,
    }
    negative = [name for name, value in sds.items() if not value >= 0]
    if negative:
        raise ParameterError(f"Стандартные отклонения должны быть >= 0: {', '.join(negative)}.")

    values = [params.beta, params.beta_w, params.beta_b, params.beta_bw, params.alpha]
    if not all(math.isfinite(v) for v in values + list(sds.values())):
        raise ParameterError("Параметры генератора должны быть конечными числами.")

    if params.n_subjects < 1:
        raise ParameterError("Нужен хотя бы один субъект.")
    if params.n_trials < 2 or params.n_trials % 2:
        raise ParameterError(
            f"Число проб должно быть чётным и >= 2, получено {params.n_trials}."
        )
    if params.counterbalanced and params.n_subjects % 2:
        raise ParameterError(
            f"Контрбалансировка требует чётного числа субъектов, получено {params.n_subjects}."
        )
    if params.design not in ("blocked", "randomized"):
        raise ParameterError(f"Неизвестный план: {params.design}.")
    lo, hi = params.t_domain
    if not lo < hi:
        raise ParameterError(f"Пустой интервал времени: [{lo}, {hi}].")
    if not 0 <= params.seed < 2**64:
        raise ParameterError("seed должен быть 64-битным неотрицательным целым.")

    if mode not in GENERATOR_MODES:
        raise ParameterError(f"Неизвестный режим генератора: {mode}.")
    inactive = {
        "amplitude": {"sigma_phi": params.sigma_phi, "sigma_tprs": params.sigma_tprs},
        "phase": {"sigma_alpha": params.sigma_alpha, "sigma_tprs": params.sigma_tprs},
        "wiggly": {
            "alpha": params.alpha,
            "sigma_alpha": params.sigma_alpha,
            "sigma_phi": params.sigma_phi,
        },
    }[mode]
    active = [name for name, value in inactive.items() if value != 0]
    if active:
        raise ParameterError(
            f"Для режима {mode} параметры {', '.join(active)} должны быть равны 0."
        )

    if mode == "wiggly":
        if params.k_gen < 3:
            raise ParameterError(f"k_gen должно быть >= 3, получено {params.k_gen}.")
        if params.n_trials <= params.k_gen:
            raise ParameterError("Число проб должно превышать k_gen.")
    return params
