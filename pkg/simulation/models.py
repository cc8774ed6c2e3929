"""
Параметры генераторов и длинный формат данных (одна строка на пробу).
"""

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
import pandas as pd

from config import settings

Design = Literal["blocked", "randomized"]

CSV_COLUMNS = ("subject", "trial", "time", "factor_within", "factor_between", "response")
LATENT_COLUMNS = ("latent", "rand_intercept", "rand_slope", "noise")


@dataclass(frozen=True)
class SimParams:
    """
    Параметры генерирующей модели
    y = β + b_i + β_w·[B] + β_b·[Y] + β_bw·[B·Y] + b_wi·[B] + f_i(t) + ε.
    f_i задаётся режимом генератора: амплитуда (alpha, sigma_alpha,
    abs_amplitude), фаза (alpha, sigma_phi) или случайная кривая
    (sigma_tprs, k_gen).
    """

    n_subjects: int = 40
    n_trials: int = 100
    t_domain: tuple[float, float] = settings.DEFAULT_T_DOMAIN
    beta: float = 0.0
    beta_w: float = 2.0
    beta_b: float = 2.0
    beta_bw: float = 0.0
    sigma: float = 10.0
    sigma_b: float = 1.0
    sigma_bw: float = 0.0
    alpha: float = 0.0
    sigma_alpha: float = 0.0
    abs_amplitude: bool = False
    sigma_phi: float = 0.0
    sigma_tprs: float = 0.0
    k_gen: int = settings.DEFAULT_WIGGLY_K
    design: Design = "blocked"
    counterbalanced: bool = True
    seed: int = settings.DEFAULT_SEED

    def replace(self, **changes: Any) -> "SimParams":
        return dataclasses.replace(self, **changes)

    def null(self) -> "SimParams":
        """Параметры для оценки ошибки I рода: все эффекты обработок нулевые."""
        return self.replace(beta_w=0.0, beta_b=0.0, beta_bw=0.0)

    def to_dict(self) -> dict[str, Any]:
        payload = dataclasses.asdict(self)
        payload["t_domain"] = list(self.t_domain)
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "SimParams":
        values = dict(payload)
        values["t_domain"] = tuple(values.get("t_domain", settings.DEFAULT_T_DOMAIN))
        return cls(**values)


@dataclass(frozen=True, eq=False)
class LongDataset:
    """
    Набор данных в длинном формате.
    frame: столбцы CSV_COLUMNS и латентная истина LATENT_COLUMNS;
    truth: посубъектные параметры (амплитуды, фазы, веса базиса).
    """

    frame: pd.DataFrame
    params: SimParams
    generator: str
    truth: dict[str, np.ndarray]

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    def public_frame(self, with_latent: bool = False) -> pd.DataFrame:
        columns = list(CSV_COLUMNS) + (list(LATENT_COLUMNS) if with_latent else [])
        return self.frame[columns]

    def fingerprint(self) -> str:
        """SHA-256 содержимого таблицы: одинаковые данные дают одинаковый хэш."""
        hashed = pd.util.hash_pandas_object(self.frame, index=True).to_numpy()
        return hashlib.sha256(hashed.tobytes()).hexdigest()
