"""
Именованные наборы параметров генераторов.
- amp / ampabs: синусы с σ_α=32 (абсолютные амплитуды для ampabs);
- ampabs_power: исследование мощности с σ_α=8 и β_b=1;
- phase / phase_power: синусы с различной фазой (план не блочный);
- wiggly_power: случайные кривые с взаимодействием обработок.
"""

from typing import Any

from config.exceptions import ParameterError

from ..models import SimParams

PRESETS: dict[str, tuple[str, dict[str, Any]]] = {
    "amp": (
        "amp",
        dict(beta=0.0, beta_w=2.0, beta_b=2.0, sigma_b=1.0, sigma_alpha=32.0, sigma=10.0),
    ),
    "ampabs": (
        "amp_abs",
        dict(
            beta=0.0,
            beta_w=2.0,
            beta_b=2.0,
            sigma_b=1.0,
            sigma_alpha=32.0,
            abs_amplitude=True,
            sigma=10.0,
        ),
    ),
    "ampabs_power": (
        "amp_abs",
        dict(
            beta=0.0,
            beta_w=2.0,
            beta_b=1.0,
            sigma_b=1.0,
            sigma_alpha=8.0,
            abs_amplitude=True,
            sigma=10.0,
        ),
    ),
    "phase": (
        "phase",
        dict(
            beta=0.0,
            beta_w=2.0,
            beta_b=2.0,
            alpha=8.0,
            sigma_b=1.0,
            sigma_phi=2.0,
            sigma=8.0,
            design="randomized",
        ),
    ),
    "phase_power": (
        "phase",
        dict(
            beta=0.0,
            beta_w=2.0,
            beta_b=2.0,
            beta_bw=-3.0,
            alpha=8.0,
            sigma_phi=2.0,
            sigma=16.0,
            sigma_b=1.0,
            sigma_bw=1.0,
            design="randomized",
        ),
    ),
    "wiggly_power": (
        "wiggly",
        dict(
            beta=0.0,
            beta_w=1.0,
            beta_b=2.0,
            beta_bw=-3.0,
            sigma=10.0,
            sigma_b=4.0,
            sigma_bw=2.0,
            sigma_tprs=2.0,
            design="randomized",
        ),
    ),
}


def preset_params(name: str, **overrides: Any) -> tuple[str, SimParams]:
    """(имя генератора, параметры) для именованного набора."""
    try:
        generator, values = PRESETS[name]
    except KeyError as exc:
        raise ParameterError(f"Неизвестный набор параметров: {name}.") from exc
    return generator, SimParams(**{**values, **overrides})
