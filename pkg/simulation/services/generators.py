"""
Генераторы симулированных данных: синусы с различной амплитудой,
синусы с различной фазой и случайные гладкие кривые.
Все генераторы детерминированы при заданном seed.
"""

import logging
from typing import Callable

import numpy as np
import pandas as pd

from config.exceptions import ParameterError
from splines.models import BasisSpec
from splines.services.basis import absorb_intercept, build_basis

from ..models import LongDataset, SimParams
from ..validators import validate_params
from .design import DATA_STREAM, assign_design, subject_rng, time_grid

logger = logging.getLogger(__name__)

# Латентная компонента субъекта: (rng, t) -> (значения, истинные параметры)
LatentDraw = Callable[[np.random.Generator, np.ndarray], tuple[np.ndarray, np.ndarray]]

GENERATORS = ("amp", "amp_abs", "phase", "wiggly")


def wiggly_basis(t: np.ndarray, k_gen: int) -> np.ndarray:
    """
    k_gen центрированных базисных функций на сетке t, каждая
    нормирована к единичному среднеквадратичному значению.
    """
    block = absorb_intercept(build_basis(t, BasisSpec(k=k_gen + 1, m=2)))
    design = block.design
    return design / np.sqrt((design**2).mean(axis=0))


def _simulate(params: SimParams, generator: str, mode: str, draw: LatentDraw) -> LongDataset:
    between, within = assign_design(params, mode)
    t = time_grid(params)
    n_subjects, n_trials = params.n_subjects, params.n_trials

    intercepts = np.zeros(n_subjects)
    slopes = np.zeros(n_subjects)
    latent = np.zeros((n_subjects, n_trials))
    noise = np.zeros((n_subjects, n_trials))
    truth: list[np.ndarray] = []

    for subject in range(n_subjects):
        rng = subject_rng(params.seed, subject, DATA_STREAM)
        intercepts[subject] = params.sigma_b * rng.standard_normal()
        slopes[subject] = params.sigma_bw * rng.standard_normal()
        latent[subject], drawn = draw(rng, t)
        truth.append(drawn)
        noise[subject] = params.sigma * rng.standard_normal(n_trials)

    is_b = (within == "B").astype(float)
    is_y = np.repeat((between == "Y").astype(float)[:, None], n_trials, axis=1)
    fixed = (
        params.beta
        + params.beta_w * is_b
        + params.beta_b * is_y
        + params.beta_bw * is_b * is_y
    )
    rand_intercept = np.repeat(intercepts[:, None], n_trials, axis=1)
    rand_slope = slopes[:, None] * is_b
    response = fixed + rand_intercept + rand_slope + latent + noise

    frame = pd.DataFrame(
        {
            "subject": np.repeat(np.arange(1, n_subjects + 1), n_trials),
            "trial": np.tile(np.arange(1, n_trials + 1), n_subjects),
            "time": np.tile(t, n_subjects),
            "factor_within": within.ravel(),
            "factor_between": np.repeat(between, n_trials),
            "response": response.ravel(),
            "latent": latent.ravel(),
            "rand_intercept": rand_intercept.ravel(),
            "rand_slope": rand_slope.ravel(),
            "noise": noise.ravel(),
        }
    )
    logger.info(
        "Generated %s dataset: subjects=%s trials=%s seed=%s",
        generator,
        n_subjects,
        n_trials,
        params.seed,
    )
    return LongDataset(
        frame=frame,
        params=params,
        generator=generator,
        truth={
            "rand_intercept": intercepts,
            "rand_slope": slopes,
            "latent_params": np.array(truth),
        },
    )


def gen_amp(params: SimParams) -> LongDataset:
    """
    Синусы с посубъектной амплитудой: α_i ~ N(alpha, σ_α), при
    abs_amplitude берётся |α_i|; латентная кривая α_i·sin(t).
    """
    validate_params(params, "amplitude")

    def draw(rng: np.random.Generator, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        amplitude = params.alpha + params.sigma_alpha * rng.standard_normal()
        if params.abs_amplitude:
            amplitude = abs(amplitude)
        return amplitude * np.sin(t), np.array([amplitude])

    name = "amp_abs" if params.abs_amplitude else "amp"
    return _simulate(params, name, "amplitude", draw)


def gen_phase(params: SimParams) -> LongDataset:
    """Синусы с общей амплитудой alpha и посубъектной фазой φ_i ~ N(0, σ_φ)."""
    validate_params(params, "phase")

    def draw(rng: np.random.Generator, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        phase = params.sigma_phi * rng.standard_normal()
        return params.alpha * np.sin(t - phase), np.array([phase])

    return _simulate(params, "phase", "phase", draw)


def gen_wiggly(params: SimParams) -> LongDataset:
    """Случайные кривые: Σ_j w_ij φ_j(t), w_ij ~ N(0, σ_tprs)."""
    validate_params(params, "wiggly")
    basis = wiggly_basis(time_grid(params), params.k_gen)

    def draw(rng: np.random.Generator, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        weights = params.sigma_tprs * rng.standard_normal(params.k_gen)
        return basis @ weights, weights

    return _simulate(params, "wiggly", "wiggly", draw)


def generate(generator: str, params: SimParams) -> LongDataset:
    """Генератор по имени: amp, amp_abs, phase, wiggly."""
    if generator == "amp":
        return gen_amp(params)
    if generator == "amp_abs":
        return gen_amp(params.replace(abs_amplitude=True))
    if generator == "phase":
        return gen_phase(params)
    if generator == "wiggly":
        return gen_wiggly(params)
    raise ParameterError(f"Неизвестный генератор: {generator}.")
