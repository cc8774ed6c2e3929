import copy
import unittest
from unittest import mock

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from config import celery_app, settings
from config.exceptions import (
    DataError,
    ParameterError,
    StudyError,
    UndefinedVarianceError,
)
from simulation.models import SimParams
from simulation.services.generators import generate
from splines.models import BasisSpec
from splines.services.basis import build_basis
from studies.models import MODEL_NAMES, StudyConfig
from studies.services.acf import acf, residual_acf
from studies.services.appendix import analytic_v0, appendix_demo, format_appendix, monte_carlo_v0
from studies.services.power import (
    SLOPE_MODELS,
    default_study,
    derive_seed,
    power_grid,
    run_replicate,
    run_study,
    study_options,
    summarize,
)
from studies.services.report import format_summary, summary_frame
from studies.services.variants import VariantOptions, fit_variant, fit_with_bug, model_spec
from studies.validators import validate_study_config
from tests.factories import SimParamsFactory, StudyConfigFactory


def fake_record(
    replicate: int, estimate: float, p_value: float, ok: bool = True, converged: bool = True
) -> dict:
    model = {"ok": ok, "fingerprint": "x"}
    if ok:
        model.update(
            coefficients={"factor_withinB": [estimate, 0.5, p_value]},
            sd={"sigma": 10.0 + replicate},
            converged=converged,
        )
    return {
        "replicate": replicate,
        "seed": replicate,
        "fingerprint": "x",
        "models": {"LMMmin": model},
    }


class DeriveSeedTests(unittest.TestCase):
    def test_deterministic_and_distinct(self):
        seeds = [derive_seed(7, r) for r in range(100)]
        self.assertEqual(seeds, [derive_seed(7, r) for r in range(100)])
        self.assertEqual(len(set(seeds)), 100)
        self.assertTrue(all(0 <= seed < 2**64 for seed in seeds))
        self.assertNotEqual(derive_seed(7, 0), derive_seed(8, 0))


class StudyConfigTests(unittest.TestCase):
    """
    Тесты конфигурации исследования:
    - нулевой режим обнуляет эффекты обработок
    - представление для Celery восстанавливает конфигурацию
    - проверка недопустимых значений
    """

    def setUp(self):
        self.cfg = StudyConfigFactory()

    def test_null_mode(self):
        params = self.cfg.replace(null_mode=True).effective_params
        self.assertEqual((params.beta_w, params.beta_b, params.beta_bw), (0.0, 0.0, 0.0))
        self.assertEqual(params.sigma_alpha, self.cfg.params.sigma_alpha)

    def test_payload(self):
        self.assertEqual(StudyConfig.from_payload(self.cfg.to_payload()), self.cfg)

    def test_validation(self):
        self.assertIs(validate_study_config(self.cfg), self.cfg)
        invalid = [
            {"generator": "square"},
            {"n_reps": 0},
            {"models": ()},
            {"models": ("LMMsine", "LMMfoo")},
            {"models": ("LMMmin", "LMMmin")},
            {"alphas": (0.05, 1.0)},
            {"k": 3},
            {"m": 3},
            {"base_seed": -1},
        ]
        for changes in invalid:
            with self.subTest(**{key: str(value) for key, value in changes.items()}):
                with self.assertRaises(ParameterError):
                    validate_study_config(self.cfg.replace(**changes))

    def test_default_studies(self):
        phase = default_study("phase")
        self.assertEqual(phase.models, SLOPE_MODELS)
        self.assertEqual(phase.params.beta_bw, -3.0)
        self.assertTrue(study_options(phase).random_slope)
        self.assertTrue(study_options(phase).interaction)

        ampabs = default_study("amp_abs")
        self.assertEqual(ampabs.models, MODEL_NAMES)
        self.assertEqual((ampabs.params.beta_b, ampabs.params.sigma_alpha), (1.0, 8.0))
        self.assertFalse(study_options(ampabs).interaction)
        with self.assertRaises(ParameterError):
            default_study("square")


class VariantTests(unittest.TestCase):
    """
    Тесты сравниваемых моделей:
    - состав случайных членов и сглаживаний
    - совпадение GAMMfs и GAMMby
    - воспроизведение ошибки центрирования
    - без временной структуры ошибка центрирования не меняет оценок
    """

    def setUp(self):
        self.dataset = generate("amp_abs", SimParamsFactory(ampabs=True, seed=17))
        self.options = VariantOptions(k=8)

    def test_specs(self):
        lmm_max = model_spec("LMMmax")
        self.assertEqual(lmm_max.random[0].form, "correlated_intercept_slope")
        self.assertEqual(lmm_max.smooths, ())
        by = model_spec("GAMMby", VariantOptions(random_slope=True, interaction=True))
        self.assertEqual([term.form for term in by.random], ["intercept", "slope_on"])
        self.assertIsNotNone(by.smooths[0].lambda_link_id)
        self.assertIn("factor_within:factor_between", by.fixed)
        self.assertEqual(model_spec("GAMMfs").random, ())
        with self.assertRaises(ParameterError):
            model_spec("GAMMte")

    def test_factor_smooth_equals_by_smooth(self):
        fs = fit_variant("GAMMfs", self.dataset, self.options)
        by = fit_variant("GAMMby", self.dataset, self.options)
        self.assertEqual(fs.fixed_names, by.fixed_names)
        np.testing.assert_allclose(fs.beta_hat, by.beta_hat, rtol=1e-6, atol=0)
        np.testing.assert_allclose(fs.se, by.se, rtol=1e-6, atol=0)
        np.testing.assert_allclose(fs.fitted, by.fitted, rtol=1e-6, atol=1e-9)
        self.assertLessEqual(abs(fs.sigma_hat - by.sigma_hat), 1e-6 * by.sigma_hat)

    def test_fit_with_bug(self):
        fixed = fit_variant("GAMMfs", self.dataset, self.options)
        buggy = fit_with_bug(self.dataset, self.options)
        self.assertEqual(
            buggy.system.n_coefficients - fixed.system.n_coefficients,
            self.dataset.params.n_subjects,
        )
        self.assertEqual(buggy.fixed_names, fixed.fixed_names)
        with self.assertRaises(ParameterError):
            fit_with_bug(self.dataset, self.options, variant="GAMMby")

    def test_bug_irrelevant_without_time_structure(self):
        rng = np.random.default_rng(29)
        n_subjects, n_trials = 8, 40
        subject = np.repeat(np.arange(1, n_subjects + 1), n_trials)
        trial = np.tile(np.arange(n_trials), n_subjects)
        time = trial / (n_trials - 1.0)
        # блочный план с контрбалансировкой: у чётных субъектов B идёт первым
        within_b = (trial >= n_trials // 2) ^ (subject % 2 == 0)
        between_y = subject > n_subjects // 2
        offsets = rng.normal(size=n_subjects)[subject - 1]

        raw = build_basis(time, BasisSpec(k=8, m=1)).design
        per_subject = [raw * (subject == s)[:, None] for s in range(1, n_subjects + 1)]
        span = np.column_stack([within_b.astype(float)] + per_subject)
        noise = rng.normal(size=subject.size)
        noise -= span @ np.linalg.lstsq(span, noise, rcond=None)[0]
        response = 2.0 * within_b + 2.0 * between_y + offsets + 10.0 * noise / noise.std()
        frame = pd.DataFrame(
            {
                "subject": subject,
                "trial": trial,
                "time": time,
                "factor_within": np.where(within_b, "B", "A"),
                "factor_between": np.where(between_y, "Y", "X"),
                "response": response,
            }
        )

        fixed = fit_variant("GAMMfs", frame, self.options)
        buggy = fit_with_bug(frame, self.options)
        scale = np.abs(fixed.beta_hat).max()
        np.testing.assert_allclose(buggy.beta_hat, fixed.beta_hat, rtol=1e-4, atol=1e-4 * scale)
        np.testing.assert_allclose(
            buggy.fitted, fixed.fitted, rtol=0, atol=1e-4 * np.abs(fixed.fitted).max()
        )
        self.assertLessEqual(abs(buggy.sigma_hat - fixed.sigma_hat), 1e-4 * fixed.sigma_hat)
        sd_fixed = fixed.varcomp_by_role("sigma_b").estimate
        sd_buggy = buggy.varcomp_by_role("sigma_b").estimate
        self.assertLessEqual(abs(sd_buggy - sd_fixed), 1e-4 * max(sd_fixed, 1.0))


class ReplicateTests(unittest.TestCase):
    """
    Тесты реплик и сведения итогов:
    - все модели реплики подгоняются к одним и тем же данным
    - порядок реплик не влияет на итоги
    - joblib и Celery дают одинаковый результат
    """

    @classmethod
    def setUpClass(cls):
        cls.cfg = StudyConfigFactory()
        cls.records = [run_replicate(cls.cfg, r) for r in range(cls.cfg.n_reps)]

    def test_replicate_structure(self):
        record = self.records[0]
        self.assertEqual(record["seed"], derive_seed(self.cfg.base_seed, 0))
        for name in self.cfg.models:
            model = record["models"][name]
            self.assertTrue(model["ok"])
            self.assertEqual(model["fingerprint"], record["fingerprint"])
            self.assertIn("factor_withinB", model["coefficients"])
        self.assertIn("sigma_alpha", record["models"]["LMMsine"]["sd"])

    def test_replicate_deterministic(self):
        self.assertEqual(run_replicate(self.cfg, 1), self.records[1])

    def test_order_invariance(self):
        forward = summarize(self.cfg, self.records)
        backward = summarize(self.cfg, list(reversed(self.records)))
        pd.testing.assert_frame_equal(forward.rows, backward.rows)
        pd.testing.assert_frame_equal(forward.sd_means, backward.sd_means)
        self.assertEqual([r["replicate"] for r in backward.records], [0, 1, 2, 3])

    def test_joblib_matches_serial(self):
        serial = summarize(self.cfg, self.records)
        for threads in (1, 2):
            summary = run_study(self.cfg, threads=threads)
            pd.testing.assert_frame_equal(summary.rows, serial.rows)

    def test_celery_matches_joblib(self):
        previous = celery_app.conf.task_always_eager
        celery_app.conf.task_always_eager = True
        try:
            summary = run_study(self.cfg, backend="celery")
        finally:
            celery_app.conf.task_always_eager = previous
        pd.testing.assert_frame_equal(summary.rows, summarize(self.cfg, self.records).rows)

    def test_unknown_backend(self):
        with self.assertRaises(ParameterError):
            run_study(self.cfg, backend="dask")

    def test_report(self):
        summary = summarize(self.cfg, self.records)
        text = format_summary(summary)
        self.assertIn("generator=amp_abs reps=4 power", text)
        self.assertIn("factor_withinB", text)
        self.assertNotIn("(Intercept)", text)
        self.assertIn("Convergence failures: LMMsine=0, LMMmin=0", text)
        csv_text = format_summary(summary, "csv")
        self.assertTrue(csv_text.startswith("section,model,name,field,value"))
        sections = set(summary_frame(summary)["section"])
        self.assertEqual(sections, {"coefficient", "sd_mean", "failures"})


class SummarizeTests(unittest.TestCase):
    """
    Сведение по заданным вручную репликам; несошедшиеся подгонки
    считаются отказами.
    """

    def setUp(self):
        self.cfg = StudyConfigFactory(models=("LMMmin",), n_reps=4)

    def test_reduction(self):
        records = [
            fake_record(0, 1.0, 0.001),
            fake_record(1, 2.0, 0.03),
            fake_record(2, 3.0, 0.2),
            fake_record(3, 0.0, 0.0, ok=False),
        ]
        summary = summarize(self.cfg, records)
        row = summary.rows.loc[("LMMmin", "factor_withinB")]
        self.assertAlmostEqual(row["mean"], 2.0)
        self.assertAlmostEqual(row["var"], 1.0)
        self.assertEqual(row["n_ok"], 3)
        self.assertEqual(row["n_sig_0.05"], 2)
        self.assertEqual(row["n_sig_0.01"], 1)
        self.assertEqual(summary.failures, {"LMMmin": 1})
        self.assertAlmostEqual(summary.power("LMMmin", "factor_withinB", 0.05), 2 / 3)
        self.assertAlmostEqual(summary.mean_sd("LMMmin", "sigma"), 11.0)

    def test_all_failed(self):
        records = [fake_record(r, 0.0, 0.0, ok=False) for r in range(3)]
        with self.assertRaises(StudyError) as ctx:
            summarize(self.cfg, records)
        self.assertEqual(ctx.exception.model, "LMMmin")

    def test_unconverged_counted_as_failure(self):
        records = [
            fake_record(0, 1.0, 0.001),
            fake_record(1, 3.0, 0.03),
            fake_record(2, 50.0, 0.0, converged=False),
        ]
        summary = summarize(self.cfg, records)
        row = summary.rows.loc[("LMMmin", "factor_withinB")]
        self.assertEqual(row["n_ok"], 2)
        self.assertAlmostEqual(row["mean"], 2.0)
        self.assertEqual(summary.failures, {"LMMmin": 1})

    def test_failed_optimizer_counted_in_study(self):
        cfg = StudyConfigFactory(models=("LMMmin",), n_reps=3)
        with mock.patch.object(settings, "REML_GRAD_TOL", 0.0), mock.patch.object(
            settings, "REML_MAX_ITER", 3
        ):
            failed = run_replicate(cfg, 0)
        self.assertFalse(failed["models"]["LMMmin"]["ok"])
        self.assertIn("не сошёлся", failed["models"]["LMMmin"]["error"])

        good = run_replicate(cfg, 1)
        self.assertTrue(good["models"]["LMMmin"]["converged"])
        stale = copy.deepcopy(good)
        stale["replicate"] = 2
        stale["models"]["LMMmin"]["converged"] = False
        summary = summarize(cfg, [failed, good, stale])
        self.assertEqual(summary.failures, {"LMMmin": 2})
        self.assertEqual(summary.rows.loc[("LMMmin", "factor_withinB"), "n_ok"], 1)
        self.assertIn("Convergence failures: LMMmin=2", format_summary(summary))


class PowerGridTests(unittest.TestCase):
    def test_grid_shape(self):
        cfg = StudyConfigFactory(models=("LMMmin",), n_reps=2)
        grid = power_grid(cfg, "beta_b", [0.0, 4.0], "factor_betweenY", alpha=0.05)
        self.assertEqual(list(grid.index), [0.0, 4.0])
        self.assertEqual(list(grid.columns), ["LMMmin"])
        self.assertTrue(((grid >= 0.0) & (grid <= 1.0)).all().all())


class AppendixTests(unittest.TestCase):
    """
    Смещение оценок sd при сдвиге ковариаты:
    - аналитическая ковариация V₀ и её оценка Монте-Карло
    - независимая модель занижает sd интерсепта, коррелированная нет
    """

    @classmethod
    def setUpClass(cls):
        cls.report = appendix_demo()

    def test_analytic_targets(self):
        np.testing.assert_allclose(analytic_v0(1.0, 0.1, 4.0), [[1.16, -0.04], [-0.04, 0.01]])
        self.assertAlmostEqual(self.report.target_intercept_sd, 1.0770, places=4)
        self.assertAlmostEqual(self.report.target_correlation, -0.3714, places=4)

    def test_monte_carlo_v0(self):
        estimate = monte_carlo_v0(1.0, 0.1, 0.1, 4.0, groups=2000, per_group=10, seed=98)
        relative = np.abs(estimate - analytic_v0(1.0, 0.1, 4.0)) / np.abs(
            analytic_v0(1.0, 0.1, 4.0)
        )
        self.assertLess(relative.max(), 0.05)
        with self.assertRaises(ParameterError):
            monte_carlo_v0(1.0, 0.1, 0.1, 4.0, groups=10, per_group=2, seed=98)

    def test_independent_fit_biased(self):
        fit = self.report.fits["independent_shifted"]
        self.assertLess(fit.sd_intercept, 1.03)
        self.assertIsNone(fit.correlation)

    def test_correlated_fit_recovers_targets(self):
        fit = self.report.fits["correlated_shifted"]
        self.assertLess(abs(fit.sd_intercept - 1.077), 0.08)
        self.assertLess(abs(fit.sd_slope - 0.1), 0.02)
        self.assertLess(abs(fit.correlation - (-0.37)), 0.10)

    def test_centered_fit(self):
        fit = self.report.fits["independent_centered"]
        self.assertLess(abs(fit.sd_intercept - 1.0), 0.1)
        self.assertLess(abs(fit.sd_slope - 0.1), 0.02)

    def test_format(self):
        text = format_appendix(self.report)
        self.assertIn("correlated RE, shifted x", text)
        self.assertIn("V0 Monte Carlo (50 x 2000 groups, per-group fits):", text)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            appendix_demo(n=1001, groups=100)
        with self.assertRaises(ParameterError):
            appendix_demo(n=2000, groups=1000)
        with self.assertRaises(ParameterError):
            appendix_demo(sigma_eps=0.0)

    @unittest.skipUnless(settings.SLOW_TESTS, "Монте-Карло проверки: TIMECOURSE_SLOW_TESTS=1")
    def test_shift_irrelevant_without_slope_variance(self):
        report = appendix_demo(sigma_b=0.0)
        estimates = [fit.sd_intercept for fit in report.fits.values()]
        self.assertLess((max(estimates) - min(estimates)) / max(estimates), 0.05)


class AcfTests(unittest.TestCase):
    """
    Тесты автокорреляционной функции:
    - белый шум и AR(1)
    - постоянный ряд и недопустимый лаг
    - ACF по субъектам из длинной таблицы
    """

    def setUp(self):
        self.rng = np.random.default_rng(2024)

    def test_white_noise(self):
        n = 10_000
        values = acf(self.rng.standard_normal(n), 20)
        self.assertEqual(values[0], 1.0)
        self.assertLess(np.abs(values[1:]).max(), 4.0 / np.sqrt(n))

    def test_ar1(self):
        series = lfilter([1.0], [1.0, -0.8], self.rng.standard_normal(10_000))
        self.assertLess(abs(acf(series, 5)[1] - 0.8), 0.05)

    def test_errors(self):
        with self.assertRaises(UndefinedVarianceError):
            acf(np.ones(50), 5)
        with self.assertRaises(ParameterError):
            acf(self.rng.standard_normal(10), 10)
        with self.assertRaises(ParameterError):
            acf(self.rng.standard_normal(10), 0)
        with self.assertRaises(DataError):
            acf([1.0, np.nan, 2.0, 3.0], 1)

    def test_residual_acf_per_subject(self):
        frame = generate("amp", SimParamsFactory(amp=True, n_subjects=40)).frame
        shuffled = frame.sample(frac=1.0, random_state=3)
        pooled = residual_acf(shuffled, 10)
        self.assertEqual(list(pooled.columns), ["lag", "acf"])
        self.assertEqual(len(pooled), 11)
        self.assertEqual(pooled["acf"].iloc[0], 1.0)
        self.assertGreater(pooled["acf"].iloc[1], 0.3)

        single = residual_acf(shuffled, 10, subject=1)
        expected = acf(frame.loc[frame["subject"] == 1, "response"], 10)
        np.testing.assert_allclose(single["acf"], expected)
        with self.assertRaises(DataError):
            residual_acf(frame, 10, subject=99)

    def test_model_residuals(self):
        frame = generate("amp", SimParamsFactory(amp=True)).frame
        result = residual_acf(frame, 10, model="LMMsine")
        self.assertTrue(np.all(np.isfinite(result["acf"])))
        self.assertLess(abs(result["acf"].iloc[1]), abs(residual_acf(frame, 10)["acf"].iloc[1]))


@unittest.skipUnless(settings.SLOW_TESTS, "Монте-Карло проверки: TIMECOURSE_SLOW_TESTS=1")
class AcceptanceTests(unittest.TestCase):
    """
    Долгие проверки на масштабе настольных исследований
    (включаются переменной TIMECOURSE_SLOW_TESTS=1).
    """

    def test_factor_smooth_equals_by_smooth_over_seeds(self):
        for seed in range(20):
            dataset = generate("amp_abs", SimParams(sigma_alpha=32.0, seed=seed))
            fs = fit_variant("GAMMfs", dataset)
            by = fit_variant("GAMMby", dataset)
            with self.subTest(seed=seed):
                np.testing.assert_allclose(fs.beta_hat, by.beta_hat, rtol=1e-6)
                np.testing.assert_allclose(fs.se, by.se, rtol=1e-6)
                np.testing.assert_allclose(fs.fitted, by.fitted, rtol=1e-6, atol=1e-8)
                self.assertLessEqual(abs(fs.sigma_hat - by.sigma_hat), 1e-6 * by.sigma_hat)
                fs_b = fs.varcomp_by_role("sigma_b").estimate
                by_b = by.varcomp_by_role("sigma_b").estimate
                self.assertLessEqual(abs(fs_b - by_b), 1e-6 * max(by_b, 1.0))

    def test_bug_collapses_intercept_sd(self):
        sd_b = {"fixed": [], "buggy": []}
        error_b = {"fixed": [], "buggy": []}
        for seed in range(20):
            dataset = generate("amp_abs", SimParams(sigma_alpha=32.0, seed=seed))
            for key, fit in (
                ("fixed", fit_variant("GAMMfs", dataset)),
                ("buggy", fit_with_bug(dataset)),
            ):
                sd_b[key].append(fit.varcomp_by_role("sigma_b").estimate)
                error_b[key].append(abs(fit.coefficient("factor_betweenY")[0] - 2.0))
        self.assertLess(np.mean(sd_b["buggy"]), 0.2)
        self.assertTrue(0.6 <= np.mean(sd_b["fixed"]) <= 1.4)
        self.assertGreater(np.mean(error_b["buggy"]), np.mean(error_b["fixed"]))

    def test_blocked_power(self):
        cfg = default_study("amp_abs").replace(models=("LMMsine", "LMMmin", "LMMmax", "GAMMfs"))
        summary = run_study(cfg, threads=settings.THREADS)
        power = {model: summary.power(model, "factor_withinB", 0.01) for model in cfg.models}
        self.assertTrue(0.50 <= power["LMMsine"] <= 0.80, power)
        self.assertTrue(0.27 <= power["GAMMfs"] <= 0.57, power)
        self.assertLessEqual(power["LMMmax"], 0.10, power)
        sine = summary.rows.loc[("LMMsine", "factor_withinB"), "var"]
        minimal = summary.rows.loc[("LMMmin", "factor_withinB"), "var"]
        self.assertTrue(1.7 <= minimal / sine <= 3.5, minimal / sine)

    def test_type_one_error(self):
        cfg = default_study("amp_abs").replace(
            models=("LMMmin", "LMMsine", "GAMMfs"), null_mode=True
        )
        summary = run_study(cfg, threads=settings.THREADS)
        rates = {model: summary.power(model, "factor_withinB", 0.01) for model in cfg.models}
        self.assertGreaterEqual(rates["LMMmin"], 0.20, rates)
        self.assertTrue(0.0 <= rates["LMMsine"] <= 0.035, rates)
        self.assertTrue(0.0 <= rates["GAMMfs"] <= 0.035, rates)

    def test_wiggly_interaction_power(self):
        cfg = default_study("wiggly")
        summary = run_study(cfg, threads=settings.THREADS)
        coefficient = "factor_withinB:factor_betweenY"
        lmm_max = summary.power("LMMmax", coefficient, 0.01)
        self.assertLess(abs(lmm_max - 0.69), 0.12)
        self.assertGreaterEqual(summary.mean_sd("LMMmax", "sigma"), 10.8)
        for model in ("GAMMfs", "GAMMby"):
            with self.subTest(model=model):
                power = summary.power(model, coefficient, 0.01)
                self.assertGreaterEqual(power, lmm_max - 0.05)
                self.assertLess(abs(power - 0.77), 0.12)
                self.assertTrue(9.5 <= summary.mean_sd(model, "sigma") <= 10.5)

    def test_power_increases_with_effect(self):
        cfg = default_study("amp_abs").replace(models=("LMMsine",))
        grid = power_grid(cfg, "beta_w", [0.0, 1.0, 2.0, 3.0], "factor_withinB", alpha=0.05)
        steps = np.diff(grid["LMMsine"].to_numpy())
        inversions = steps[steps < 0.0]
        self.assertLessEqual(inversions.size, 1, grid)
        self.assertTrue(np.all(inversions >= -0.02), grid)

    def test_between_coefficient_coverage(self):
        covered = 0
        for seed in range(100):
            dataset = generate(
                "amp", SimParamsFactory(n_subjects=40, n_trials=100, amp=True, seed=seed)
            )
            estimate, se, _ = fit_variant("LMMsine", dataset).coefficient("factor_betweenY")
            covered += abs(estimate - 2.0) <= 2.0 * se
        self.assertGreaterEqual(covered, 93)
