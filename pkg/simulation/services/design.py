import numpy as np

from ..models import SimParams
from ..validators import validate_params

# Подпотоки генератора: данные и план не зависят друг от друга
DATA_STREAM = 0
DESIGN_STREAM = 1


def subject_rng(seed: int, subject: int, stream: int) -> np.random.Generator:
    """
    Счётчиковый 64-битный генератор (Philox) с подпотоком (subject, stream):
    результат реплики не зависит от порядка выполнения.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(subject, stream))
    return np.random.Generator(np.random.Philox(sequence))


def time_grid(params: SimParams) -> np.ndarray:
    lo, hi = params.t_domain
    return np.linspace(lo, hi, params.n_trials)


def assign_design(params: SimParams, mode: str = "amplitude") -> tuple[np.ndarray, np.ndarray]:
    """
    План эксперимента.
    - F_b: первая половина субъектов X, вторая Y.
    - blocked: половина проб одним уровнем F_w, затем другим; при
      контрбалансировке внутри каждой группы F_b порядки AB и BA чередуются.
    - randomized: перестановка сбалансированного набора A/B для каждого субъекта.
    Возвращает (F_b по субъектам, F_w размера n_subjects × n_trials).
    """
    validate_params(params, mode)
    n_subjects, n_trials = params.n_subjects, params.n_trials
    half_subjects, half_trials = n_subjects // 2, n_trials // 2

    subjects = np.arange(n_subjects)
    between = np.where(subjects < half_subjects, "X", "Y")
    within = np.empty((n_subjects, n_trials), dtype="<U1")
    balanced = np.array(["A"] * half_trials + ["B"] * half_trials)

    for subject in subjects:
        if params.design == "randomized":
            rng = subject_rng(params.seed, int(subject), DESIGN_STREAM)
            within[subject] = rng.permutation(balanced)
            continue
        position = subject if subject < half_subjects else subject - half_subjects
        reversed_order = params.counterbalanced and position % 2 == 1
        within[subject] = balanced[::-1] if reversed_order else balanced
    return between, within
