import dataclasses
import math
import unittest

import numpy as np
import pandas as pd

from config.exceptions import DataError, ParameterError
from simulation.models import CSV_COLUMNS, LATENT_COLUMNS, SimParams
from simulation.services.confound import latent_confound
from simulation.services.design import assign_design
from simulation.services.generators import generate, wiggly_basis
from simulation.services.io import dataset_to_csv, parse_dataset, read_seed
from simulation.services.presets import PRESETS, preset_params
from simulation.validators import validate_params
from tests.factories import SimParamsFactory

HEADER = ",".join(CSV_COLUMNS)


def cell_means(frame: pd.DataFrame, column: str) -> pd.Series:
    return frame.groupby(["factor_within", "factor_between"])[column].mean()


class AmplitudeGeneratorTests(unittest.TestCase):
    """
    Тесты генератора синусов с различной амплитудой:
    - без шума значения отклика точно равны сумме фиксированных эффектов
    - абсолютные амплитуды совпадают с |α_i| обычного режима
    - латентная кривая равна α_i·sin(t)
    """

    def setUp(self):
        self.params = SimParamsFactory(amp=True)

    def test_noiseless_cells(self):
        params = SimParamsFactory(amp=True, sigma=0.0, sigma_b=0.0, sigma_alpha=0.0)
        frame = generate("amp", params).frame
        expected = {("A", "X"): 0.0, ("B", "X"): 2.0, ("A", "Y"): 2.0, ("B", "Y"): 4.0}
        for (within, between), rows in frame.groupby(["factor_within", "factor_between"]):
            np.testing.assert_array_equal(rows["response"], expected[(within, between)])

    def test_absolute_amplitudes(self):
        signed = generate("amp", self.params)
        absolute = generate("amp_abs", self.params)
        self.assertEqual(absolute.generator, "amp_abs")
        amplitudes = absolute.truth["latent_params"][:, 0]
        self.assertTrue(np.all(amplitudes >= 0.0))
        np.testing.assert_array_equal(amplitudes, np.abs(signed.truth["latent_params"][:, 0]))
        np.testing.assert_array_equal(absolute.frame["noise"], signed.frame["noise"])

    def test_latent_is_scaled_sine(self):
        dataset = generate("amp", self.params)
        t = np.linspace(0.0, 2.0 * np.pi, self.params.n_trials)
        latent = dataset.frame["latent"].to_numpy().reshape(self.params.n_subjects, -1)
        amplitudes = dataset.truth["latent_params"][:, 0]
        np.testing.assert_allclose(latent, amplitudes[:, None] * np.sin(t), rtol=0, atol=1e-12)

    def test_latent_bookkeeping(self):
        params = SimParamsFactory(phase=True, sigma_bw=1.5, beta_bw=-3.0)
        frame = generate("phase", params).frame
        is_b = (frame["factor_within"] == "B").to_numpy(dtype=float)
        is_y = (frame["factor_between"] == "Y").to_numpy(dtype=float)
        fixed = (
            params.beta
            + params.beta_w * is_b
            + params.beta_b * is_y
            + params.beta_bw * is_b * is_y
        )
        remainder = (
            frame["response"]
            - frame["latent"]
            - fixed
            - frame["rand_intercept"]
            - frame["rand_slope"]
        )
        self.assertLessEqual(np.abs(remainder - frame["noise"]).max(), 1e-10)

    def test_random_slope_only_on_level_b(self):
        params = SimParamsFactory(amp=True, sigma_bw=2.0)
        frame = generate("amp", params).frame
        level_a = frame[frame["factor_within"] == "A"]
        self.assertEqual(np.abs(level_a["rand_slope"]).max(), 0.0)
        level_b = frame[frame["factor_within"] == "B"]
        self.assertGreater(np.abs(level_b["rand_slope"]).max(), 0.0)


class PhaseGeneratorTests(unittest.TestCase):
    """
    Тесты генератора синусов с различной фазой.
    """

    def test_zero_phase_variance_gives_identical_curves(self):
        params = SimParamsFactory(phase=True, sigma_phi=0.0)
        latent = generate("phase", params).frame["latent"].to_numpy()
        curves = latent.reshape(params.n_subjects, -1)
        t = np.linspace(0.0, 2.0 * np.pi, params.n_trials)
        for curve in curves:
            np.testing.assert_array_equal(curve, params.alpha * np.sin(t))

    def test_latent_matches_drawn_phases(self):
        params = SimParamsFactory(phase=True)
        dataset = generate("phase", params)
        t = np.linspace(0.0, 2.0 * np.pi, params.n_trials)
        phases = dataset.truth["latent_params"][:, 0]
        curves = dataset.frame["latent"].to_numpy().reshape(params.n_subjects, -1)
        expected = params.alpha * np.sin(t[None, :] - phases[:, None])
        np.testing.assert_allclose(curves, expected, rtol=0, atol=1e-12)
        self.assertGreater(np.ptp(phases), 0.0)

    def test_interaction_contrast(self):
        _, params = preset_params(
            "phase_power", sigma=0.0, sigma_b=0.0, sigma_bw=0.0, seed=4
        )
        frame = generate("phase", params).frame
        fixed_part = frame.assign(fixed=frame["response"] - frame["latent"])
        means = cell_means(fixed_part, "fixed")
        contrast = means["B", "Y"] - means["A", "Y"] - means["B", "X"] + means["A", "X"]
        self.assertAlmostEqual(contrast, -3.0, places=12)


class WigglyGeneratorTests(unittest.TestCase):
    """
    Тесты генератора случайных гладких кривых:
    - нулевое σ_tprs даёт нулевую латентную компоненту
    - кривые субъектов различны и центрированы
    - базис нормирован
    """

    def setUp(self):
        self.params = SimParamsFactory(wiggly=True)

    def test_zero_weights(self):
        frame = generate("wiggly", self.params.replace(sigma_tprs=0.0)).frame
        self.assertEqual(np.abs(frame["latent"]).max(), 0.0)

    def test_curves_distinct_and_centered(self):
        dataset = generate("wiggly", self.params)
        curves = dataset.frame["latent"].to_numpy().reshape(self.params.n_subjects, -1)
        self.assertGreater(np.abs(curves[0] - curves[1]).max(), 0.0)
        for curve in curves:
            self.assertLessEqual(abs(curve.mean()), 1e-8 * np.abs(curve).max())
        self.assertEqual(dataset.truth["latent_params"].shape, (self.params.n_subjects, 10))

    def test_basis_normalized(self):
        t = np.linspace(0.0, 2.0 * np.pi, 100)
        basis = wiggly_basis(t, 10)
        self.assertEqual(basis.shape, (100, 10))
        np.testing.assert_allclose((basis**2).mean(axis=0), 1.0)


class DesignTests(unittest.TestCase):
    """
    Тесты плана эксперимента:
    - деление субъектов по F_b и контрбалансировка порядков
    - сбалансированность рандомизированного плана
    - блочный план коррелирует F_w со знаком синуса
    """

    def setUp(self):
        self.params = SimParams(n_subjects=40, n_trials=100, seed=3)

    def test_counterbalanced_cells(self):
        between, within = assign_design(self.params)
        self.assertEqual(list(between[:20]), ["X"] * 20)
        self.assertEqual(list(between[20:]), ["Y"] * 20)
        cells = pd.Series(list(zip(between, within[:, 0]))).value_counts()
        self.assertEqual(sorted(cells.to_dict().values()), [10, 10, 10, 10])

    def test_without_counterbalancing(self):
        _, within = assign_design(self.params.replace(counterbalanced=False))
        self.assertTrue(np.all(within[:, 0] == "A"))
        self.assertTrue(np.all(within[:, -1] == "B"))

    def test_randomized_balanced(self):
        params = self.params.replace(design="randomized")
        _, within = assign_design(params)
        np.testing.assert_array_equal((within == "B").sum(axis=1), 50)
        _, again = assign_design(params)
        np.testing.assert_array_equal(within, again)
        _, other = assign_design(params.replace(seed=4))
        self.assertFalse(np.array_equal(within, other))

    def test_blocked_design_confounds_sine(self):
        _, within = assign_design(self.params)
        sign = np.sign(np.sin(np.linspace(0.0, 2.0 * np.pi, 100)))
        for row in within:
            corr = np.corrcoef((row == "B").astype(float), sign)[0, 1]
            self.assertGreater(abs(corr), 0.99)

    def test_design_stream_independent_of_noise(self):
        blocked = generate("amp", SimParamsFactory(amp=True, seed=9))
        randomized = generate("amp", SimParamsFactory(amp=True, seed=9, design="randomized"))
        np.testing.assert_array_equal(blocked.frame["noise"], randomized.frame["noise"])
        np.testing.assert_array_equal(blocked.frame["latent"], randomized.frame["latent"])


class SeedDeterminismTests(unittest.TestCase):
    def test_same_seed_same_dataset(self):
        params = SimParamsFactory(ampabs=True, seed=21)
        first = generate("amp_abs", params)
        second = generate("amp_abs", params)
        pd.testing.assert_frame_equal(first.frame, second.frame)
        self.assertEqual(first.fingerprint(), second.fingerprint())

    def test_different_seed_different_noise(self):
        first = generate("amp", SimParamsFactory(amp=True, seed=21))
        second = generate("amp", SimParamsFactory(amp=True, seed=22))
        self.assertFalse(np.array_equal(first.frame["noise"], second.frame["noise"]))
        self.assertNotEqual(first.fingerprint(), second.fingerprint())

    def test_unknown_generator(self):
        with self.assertRaises(ParameterError):
            generate("square", SimParamsFactory())


class MomentTests(unittest.TestCase):
    """
    Моментные проверки по нескольким seed:
    - дисперсия латентного синуса около σ_α²/2
    - выборочные sd шума и случайных интерсептов
    - среднее абсолютных амплитуд σ_α·√(2/π)
    """

    def test_latent_second_moment(self):
        variances = []
        for seed in range(50):
            params = SimParams(sigma_alpha=32.0, seed=seed)
            frame = generate("amp", params).frame
            variances.append(frame.groupby("subject")["latent"].var().mean())
        expected = 32.0**2 / 2
        self.assertLess(abs(np.mean(variances) - expected) / expected, 0.10)

    def test_noise_and_intercept_sd(self):
        noise, intercepts = [], []
        for seed in range(20):
            dataset = generate("amp", SimParams(sigma=10.0, sigma_b=1.0, seed=seed))
            noise.append(dataset.frame["noise"].to_numpy())
            intercepts.append(dataset.truth["rand_intercept"])
        self.assertLess(abs(np.concatenate(noise).std(ddof=1) - 10.0) / 10.0, 0.03)
        self.assertLess(abs(np.concatenate(intercepts).std(ddof=1) - 1.0), 0.15)

    def test_absolute_amplitude_mean(self):
        amplitudes = []
        for seed in range(50):
            dataset = generate("amp_abs", SimParams(sigma_alpha=32.0, seed=seed))
            amplitudes.append(dataset.truth["latent_params"][:, 0])
        expected = 32.0 * math.sqrt(2.0 / math.pi)
        self.assertLess(abs(np.concatenate(amplitudes).mean() - expected) / expected, 0.10)


class ValidateParamsTests(unittest.TestCase):
    def test_valid_defaults(self):
        params = SimParams()
        self.assertIs(validate_params(params, "amplitude"), params)

    def test_negative_sd(self):
        with self.assertRaisesRegex(ParameterError, "sigma_b"):
            validate_params(SimParams(sigma_b=-1.0), "amplitude")

    def test_odd_trials(self):
        with self.assertRaises(ParameterError):
            validate_params(SimParams(n_trials=99), "amplitude")

    def test_counterbalancing_needs_even_subjects(self):
        with self.assertRaises(ParameterError):
            validate_params(SimParams(n_subjects=5), "amplitude")
        validate_params(SimParams(n_subjects=5, counterbalanced=False), "amplitude")

    def test_inactive_mode_parameters(self):
        with self.assertRaisesRegex(ParameterError, "sigma_phi"):
            validate_params(SimParams(sigma_phi=1.0), "amplitude")
        with self.assertRaisesRegex(ParameterError, "alpha"):
            validate_params(SimParams(alpha=8.0, sigma_tprs=2.0), "wiggly")

    def test_wiggly_basis_size(self):
        with self.assertRaises(ParameterError):
            validate_params(SimParams(n_trials=10, k_gen=10, sigma_tprs=1.0), "wiggly")

    def test_seed_range(self):
        with self.assertRaises(ParameterError):
            validate_params(SimParams(seed=2**64), "amplitude")


class PresetTests(unittest.TestCase):
    def test_every_preset_generates(self):
        for name in PRESETS:
            generator, params = preset_params(name, n_subjects=4, n_trials=20)
            dataset = generate(generator, params)
            self.assertEqual(dataset.n_rows, 80)

    def test_overrides_take_precedence(self):
        generator, params = preset_params("phase_power", sigma=4.0)
        self.assertEqual(generator, "phase")
        self.assertEqual(params.sigma, 4.0)
        self.assertEqual(params.beta_bw, -3.0)
        self.assertEqual(params.design, "randomized")

    def test_unknown_preset(self):
        with self.assertRaises(ParameterError):
            preset_params("sawtooth")


class CsvTests(unittest.TestCase):
    """
    Тесты CSV:
    - заголовок с seed и восстановление значений без потерь
    - ошибки разбора с номером строки
    """

    def setUp(self):
        self.dataset = generate("amp", SimParamsFactory(amp=True, seed=31))

    def test_header_and_values(self):
        text = dataset_to_csv(self.dataset)
        lines = text.splitlines()
        self.assertEqual(lines[0], "# seed=31")
        self.assertEqual(lines[1], HEADER)
        self.assertEqual(read_seed(text), 31)
        frame = parse_dataset(text)
        pd.testing.assert_frame_equal(
            frame, self.dataset.public_frame().reset_index(drop=True), check_dtype=False
        )

    def test_latent_columns(self):
        frame = parse_dataset(dataset_to_csv(self.dataset, with_latent=True))
        self.assertEqual(list(frame.columns), list(CSV_COLUMNS) + list(LATENT_COLUMNS))

    def test_wrong_field_count(self):
        text = f"# seed=1\n{HEADER}\n1,1,0.0,A,X,1.5\n1,2,0.5,A,X\n"
        with self.assertRaisesRegex(DataError, "Строка 4"):
            parse_dataset(text)

    def test_non_numeric_value(self):
        text = f"{HEADER}\n1,1,0.0,A,X,1.5\n1,2,abc,A,X,2.0\n"
        with self.assertRaisesRegex(DataError, "Строка 3: столбец time"):
            parse_dataset(text)

    def test_missing_column(self):
        text = "subject,trial,time,factor_within,factor_between\n1,1,0.0,A,X\n"
        with self.assertRaisesRegex(DataError, "response"):
            parse_dataset(text)

    def test_empty_text(self):
        with self.assertRaises(DataError):
            parse_dataset("# seed=1\n")

    def test_seed_absent(self):
        self.assertIsNone(read_seed(f"{HEADER}\n"))


class LatentConfoundTests(unittest.TestCase):
    """
    При блочном плане без контрбалансировки латентный синус на уровне B
    отрицателен: контраст значимо меньше нуля.
    """

    def test_blocked_sine_confounds_within_factor(self):
        params = SimParamsFactory(ampabs=True, counterbalanced=False, seed=5)
        report = latent_confound(generate("amp_abs", params))
        self.assertLess(report.estimate, 0.0)
        self.assertLess(report.p_value, 1e-3)
        self.assertTrue(report.format().startswith("# latent ~ factor_within:"))

    def test_constant_latent(self):
        dataset = generate("amp", SimParamsFactory(amp=True, sigma_alpha=0.0))
        with self.assertRaises(DataError):
            latent_confound(dataset)

    def test_missing_latent(self):
        dataset = generate("amp", SimParamsFactory(amp=True))
        stripped = dataclasses.replace(dataset, frame=dataset.frame.drop(columns="latent"))
        with self.assertRaises(DataError):
            latent_confound(stripped)
