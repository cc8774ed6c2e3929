import unittest
from unittest import mock

import numpy as np
import pandas as pd

from config import settings
from config.exceptions import ConvergenceError, DataError, NumericalError, SpecificationError
from mixed.expressions import column, sine
from mixed.models import ModelSpec, RandomTermSpec
from mixed.services.assemble import assemble
from mixed.services.reml import (
    fit_at,
    fit_reml,
    penalized_solve,
    pivoted_cholesky,
    restricted_loglik,
)
from mixed.services.summary import (
    coefficient_table,
    edf_and_varcomp,
    format_fit,
    smooth_term_test,
    smooth_terms,
)
from simulation.services.generators import generate
from splines.models import BasisSpec, SmoothTermSpec
from tests.factories import SimParamsFactory


def lmm_sine() -> ModelSpec:
    return ModelSpec(
        random=(
            RandomTermSpec(group="subject", roles=("sigma_b",)),
            RandomTermSpec(
                group="subject", form="slope_on", expression=sine(), roles=("sigma_alpha",)
            ),
        ),
        name="LMMsine",
    )


def factor_smooth(k: int = 8) -> ModelSpec:
    return ModelSpec(
        smooths=(
            SmoothTermSpec(
                covariate="time", mode="factor_smooth", group="subject", basis=BasisSpec(k=k)
            ),
        ),
        name="GAMMfs",
    )


def by_smooth(k: int = 8) -> ModelSpec:
    return ModelSpec(
        random=(RandomTermSpec(group="subject", roles=("sigma_b",)),),
        smooths=(
            SmoothTermSpec(
                covariate="time",
                mode="by_smooth",
                group="subject",
                basis=BasisSpec(k=k),
                lambda_link_id="subject",
            ),
        ),
        name="GAMMby",
    )


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    actual, expected = np.asarray(actual), np.asarray(expected)
    return float(np.abs(actual - expected).max() / max(np.abs(expected).max(), 1e-300))


class AssembleTests(unittest.TestCase):
    """
    Тесты сборки системы:
    - размеры X и Z для LMMsine, GAMMfs и коррелированного члена
    - ошибки спецификации и данных
    """

    def setUp(self):
        params = SimParamsFactory(n_subjects=40, n_trials=100, amp=True)
        self.frame = generate("amp", params).frame

    def test_lmm_sine_dimensions(self):
        system = assemble(lmm_sine(), self.frame)
        self.assertEqual(system.dense.shape, (4000, 3))
        self.assertEqual(system.fixed_names, ("(Intercept)", "factor_withinB", "factor_betweenY"))
        self.assertEqual(system.n_levels * system.width, 80)
        self.assertEqual(len(system.params), 2)

    def test_factor_smooth_dimensions(self):
        system = assemble(factor_smooth(k=20), self.frame)
        self.assertEqual(system.n_levels * system.width, 40 * 19 + 40)
        roles = [param.name.split(":")[-1] for param in system.params]
        self.assertEqual(roles, ["curvature", "null", "intercept"])

    def test_correlated_dimensions(self):
        spec = ModelSpec(
            random=(
                RandomTermSpec(
                    group="subject",
                    form="correlated_intercept_slope",
                    expression=column("time"),
                ),
            ),
        )
        system = assemble(spec, self.frame)
        self.assertEqual(system.width, 2)
        self.assertEqual([p.kind for p in system.params], ["chol_log", "chol_off", "chol_log"])
        blocks = system.penalty_blocks(np.array([0.3, -0.2, 0.1]))[1]
        np.testing.assert_allclose(blocks, np.broadcast_to(blocks[0], blocks.shape))

    def test_rank_deficient_fixed_design(self):
        frame = self.frame.assign(factor_between="X")
        with self.assertRaisesRegex(SpecificationError, "factor_betweenY"):
            assemble(ModelSpec(), frame)

    def test_unknown_level(self):
        frame = self.frame.copy()
        frame.loc[0, "factor_within"] = "C"
        with self.assertRaises(DataError):
            assemble(ModelSpec(), frame)

    def test_missing_column(self):
        with self.assertRaisesRegex(DataError, "response"):
            assemble(ModelSpec(), self.frame.drop(columns="response"))

    def test_crossed_groups_rejected(self):
        frame = self.frame.assign(item=self.frame["trial"] % 5)
        spec = ModelSpec(
            random=(RandomTermSpec(group="subject"), RandomTermSpec(group="item")),
        )
        with self.assertRaises(SpecificationError):
            assemble(spec, frame)


class PenalizedSolveTests(unittest.TestCase):
    """
    Решение при фиксированных параметрах сравнивается с прямым
    плотным решением (XᵀX + S)θ = Xᵀy.
    Холецкий с выбором ведущего элемента отвергает вырожденные системы.
    """

    def setUp(self):
        self.dataset = generate("amp", SimParamsFactory(amp=True))

    def test_matches_dense_solve(self):
        system = assemble(by_smooth(), self.dataset)
        self.assertLessEqual(system.n_coefficients, 200)
        rng = np.random.default_rng(5)
        for _ in range(3):
            params = rng.uniform(-3.0, 3.0, len(system.params))
            solution = penalized_solve(system, params)
            design = system.dense_design()
            penalty = system.dense_penalty(params)
            expected = np.linalg.solve(design.T @ design + penalty, design.T @ system.y)
            self.assertLess(relative_error(solution.coefficients, expected), 1e-8)

    def test_population_smooth_matches_dense_solve(self):
        x = np.linspace(0.0, 1.0, 30)
        frame = pd.DataFrame(
            {
                "x": x,
                "response": np.sin(6.0 * x) + 0.1 * np.cos(17.0 * x),
                "factor_within": "A",
                "factor_between": "X",
            }
        )
        spec = ModelSpec(fixed=(), smooths=(SmoothTermSpec(covariate="x", basis=BasisSpec(k=8)),))
        system = assemble(spec, frame)
        params = np.array([1.5, -2.0])
        design = system.dense_design()
        expected = np.linalg.solve(
            design.T @ design + system.dense_penalty(params), design.T @ system.y
        )
        solution = penalized_solve(system, params)
        self.assertLess(relative_error(solution.coefficients, expected), 1e-8)

    def test_ordinary_least_squares_without_penalties(self):
        system = assemble(ModelSpec(), self.dataset)
        fit = fit_reml(system)
        x, y = system.dense, system.y
        beta, *_ = np.linalg.lstsq(x, y, rcond=None)
        rss = float(((y - x @ beta) ** 2).sum())
        self.assertLess(relative_error(fit.beta_hat, beta), 1e-10)
        expected = rss / (system.n - 3)
        self.assertLess(abs(fit.sigma_hat**2 - expected) / expected, 1e-10)
        self.assertEqual(fit.method, "closed-form")

    def test_pivoted_factor_solve_and_logdet(self):
        rng = np.random.default_rng(17)
        root = rng.normal(size=(6, 6))
        matrix = root @ root.T + np.diag(np.geomspace(1e-3, 1e3, 6))
        factor = pivoted_cholesky(matrix)
        rhs = rng.normal(size=(6, 2))
        self.assertLess(relative_error(factor.solve(rhs), np.linalg.solve(matrix, rhs)), 1e-10)
        self.assertLess(
            relative_error(factor.solve(rhs[:, 0]), np.linalg.solve(matrix, rhs[:, 0])), 1e-10
        )
        sign, logdet = np.linalg.slogdet(matrix)
        self.assertEqual(sign, 1.0)
        self.assertAlmostEqual(factor.logdet, logdet, places=9)

    def test_nearly_aliased_matrix_rejected(self):
        matrix = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]])
        # обычное разложение Холецкого такую матрицу принимает
        np.linalg.cholesky(matrix)
        with self.assertRaisesRegex(NumericalError, "ранг 1 из 2"):
            pivoted_cholesky(matrix)

    def test_unpenalized_null_space_aliased_with_covariate(self):
        x = np.linspace(0.0, 1.0, 40)
        frame = pd.DataFrame(
            {
                "x": x,
                "response": np.sin(6.0 * x),
                "factor_within": "A",
                "factor_between": "X",
            }
        )
        # при m=2 линейная часть сглаживания не штрафуется и совпадает с ковариатой x
        aliased = ModelSpec(
            fixed=(),
            covariates=(column("x"),),
            smooths=(SmoothTermSpec(covariate="x", basis=BasisSpec(k=8, m=2)),),
        )
        system = assemble(aliased, frame)
        with self.assertRaises(NumericalError):
            penalized_solve(system, np.array([0.0]))

        penalized = ModelSpec(
            fixed=(),
            covariates=(column("x"),),
            smooths=(SmoothTermSpec(covariate="x", basis=BasisSpec(k=8, m=1)),),
        )
        solution = penalized_solve(assemble(penalized, frame), np.array([0.0, 0.0]))
        self.assertTrue(np.all(np.isfinite(solution.coefficients)))


class RemlFitTests(unittest.TestCase):
    """
    Тесты REML-подгонки:
    - стационарность критерия в найденной точке
    - эквивариантность к масштабу отклика
    - ConvergenceError, если градиент остался выше допуска
    - совпадение fs и by (связанный lambda, m=1) со случайным интерсептом
    """

    def setUp(self):
        self.dataset = generate("amp", SimParamsFactory(amp=True, seed=11))

    def test_stationarity(self):
        system = assemble(lmm_sine(), self.dataset)
        fit = fit_reml(system, compute_ci=False)
        step = 1e-4
        for index, info in enumerate(system.params):
            value = fit.params[index]
            if info.lower is not None and value < info.lower + 1.0:
                continue
            if info.upper is not None and value > info.upper - 1.0:
                continue
            forward, backward = fit.params.copy(), fit.params.copy()
            forward[index] += step
            backward[index] -= step
            gradient = (
                restricted_loglik(system, forward) - restricted_loglik(system, backward)
            ) / (2.0 * step)
            self.assertLess(abs(gradient), 1e-4, info.name)

    def test_scale_equivariance_power_of_two(self):
        base = fit_reml(assemble(lmm_sine(), self.dataset), compute_ci=False)
        frame = self.dataset.frame.assign(response=self.dataset.frame["response"] * 4.0)
        scaled = fit_reml(assemble(lmm_sine(), frame), compute_ci=False)
        self.assertLess(relative_error(scaled.beta_hat, 4.0 * base.beta_hat), 1e-8)
        self.assertLess(relative_error(scaled.se, 4.0 * base.se), 1e-8)
        self.assertLess(relative_error(scaled.sigma_hat, 4.0 * base.sigma_hat), 1e-8)
        self.assertLess(relative_error(scaled.t_values, base.t_values), 1e-8)
        self.assertLess(relative_error(scaled.total_edf, base.total_edf), 1e-8)
        for component, original in zip(scaled.varcomp, base.varcomp):
            expected = 4.0 * original.estimate
            self.assertLessEqual(abs(component.estimate - expected), 1e-8 * max(expected, 1.0))

    def test_scale_equivariance_general_factor(self):
        base = fit_reml(assemble(lmm_sine(), self.dataset), compute_ci=False)
        frame = self.dataset.frame.assign(response=self.dataset.frame["response"] * 3.0)
        scaled = fit_reml(assemble(lmm_sine(), frame), compute_ci=False)
        self.assertLess(relative_error(scaled.beta_hat, 3.0 * base.beta_hat), 1e-8)
        self.assertLess(relative_error(scaled.se, 3.0 * base.se), 1e-8)
        self.assertLess(relative_error(scaled.sigma_hat, 3.0 * base.sigma_hat), 1e-8)
        self.assertLess(relative_error(scaled.t_values, base.t_values), 1e-8)
        self.assertLess(relative_error(scaled.total_edf, base.total_edf), 1e-8)
        for name, edf in base.edf.items():
            self.assertLessEqual(abs(scaled.edf[name] - edf), 1e-8 * max(edf, 1.0), name)
        for component, original in zip(scaled.varcomp, base.varcomp):
            expected = 3.0 * original.estimate
            self.assertLessEqual(abs(component.estimate - expected), 1e-8 * max(expected, 1.0))

    def test_unconverged_fit_raises(self):
        system = assemble(lmm_sine(), self.dataset)
        with mock.patch.object(settings, "REML_GRAD_TOL", 0.0), mock.patch.object(
            settings, "REML_MAX_ITER", 3
        ):
            with self.assertRaises(ConvergenceError) as context:
                fit_reml(system, compute_ci=False)
        best = context.exception.best
        self.assertEqual(best["params"].shape, (len(system.params),))
        self.assertTrue(np.isfinite(best["reml"]))

    def test_factor_smooth_equals_by_smooth(self):
        fs = fit_reml(assemble(factor_smooth(), self.dataset), compute_ci=False)
        by = fit_reml(assemble(by_smooth(), self.dataset), compute_ci=False)
        self.assertLess(relative_error(fs.beta_hat, by.beta_hat), 1e-6)
        self.assertLess(relative_error(fs.se, by.se), 1e-6)
        self.assertLess(relative_error(fs.sigma_hat, by.sigma_hat), 1e-6)
        self.assertLess(relative_error(fs.fitted, by.fitted), 1e-6)
        fs_b = fs.varcomp_by_role("sigma_b")
        by_b = by.varcomp_by_role("sigma_b")
        self.assertLessEqual(abs(fs_b.estimate - by_b.estimate), 1e-6 * max(by_b.estimate, 1.0))

    def test_deterministic(self):
        system = assemble(lmm_sine(), self.dataset)
        first = fit_reml(system, compute_ci=False)
        second = fit_reml(system, compute_ci=False)
        np.testing.assert_array_equal(first.params, second.params)


class EdfAndVarcompTests(unittest.TestCase):
    """
    edf и компоненты дисперсии при заданных параметрах:
    - lambda -> 0 и lambda -> inf для сглаживания
    - монотонность edf случайного интерсепта по lambda
    - монотонное сжатие коэффициентов сглаживания при росте lambda
    - σ_t = σ/√λ
    """

    def setUp(self):
        self.dataset = generate("amp", SimParamsFactory(amp=True, seed=21))
        self.system = assemble(by_smooth(), self.dataset)
        self.term = self.system.term("s(Time):Subject")

    def test_edf_limits(self):
        width = self.system.global_columns(self.term).size
        free = fit_at(self.system, np.array([-18.0, -18.0, 0.0]))
        self.assertGreater(free.edf[self.term.name], 0.98 * width)
        self.assertLessEqual(free.edf[self.term.name], width + 1e-8)
        shrunk = fit_at(self.system, np.array([25.0, 25.0, 0.0]))
        self.assertLess(shrunk.edf[self.term.name], 1e-3)

    def test_smooth_coefficients_shrink_with_lambda(self):
        index = self.system.global_columns(self.term)
        penalty = self.system.dense_penalty(np.zeros(3))[np.ix_(index, index)]
        forms, norms = [], []
        for rho in np.linspace(-5.0, 25.0, 13):
            coefficients = penalized_solve(self.system, np.array([rho, rho, 0.0])).coefficients
            smooth = coefficients[index]
            forms.append(float(smooth @ penalty @ smooth))
            norms.append(float(np.linalg.norm(smooth)))
        self.assertTrue(np.all(np.diff(forms) <= 1e-9 * forms[0]))
        self.assertLess(norms[-1], 1e-3 * norms[0])

    def test_random_intercept_edf_monotone(self):
        edfs = []
        for rho in np.log(10.0 ** np.arange(-2.0, 5.0)):
            fit = fit_at(self.system, np.array([0.0, 0.0, rho]))
            edfs.append(fit.edf["Subject (Intercept)"])
        self.assertTrue(all(0.0 < edf < 8.0 for edf in edfs))
        self.assertTrue(np.all(np.diff(edfs) < 0.0))

    def test_sigma_t(self):
        params = np.array([1.2, 0.4, -0.5])
        fit = fit_at(self.system, params)
        sigma_t = fit.varcomp_by_role("sigma_t")
        self.assertAlmostEqual(sigma_t.estimate, fit.sigma_hat / np.sqrt(np.exp(1.2)), places=10)
        penalized, components = edf_and_varcomp(fit)
        self.assertIn("s(Time):Subject", penalized)
        self.assertEqual(components[-1].role, "sigma")

    def test_wald_intervals_contain_estimates(self):
        fit = fit_reml(self.system, compute_ci=True)
        for component in fit.varcomp:
            if component.ci is None or component.kind != "sd":
                continue
            lower, upper = component.ci
            self.assertLessEqual(lower, component.estimate)
            self.assertGreaterEqual(upper, component.estimate)


class SummaryTests(unittest.TestCase):
    """
    Таблица коэффициентов, тесты сглаживаний, текстовый отчёт.
    """

    def setUp(self):
        self.dataset = generate("amp", SimParamsFactory(amp=True, seed=31))
        self.fit = fit_reml(assemble(by_smooth(), self.dataset))

    def test_coefficient_table(self):
        rows = coefficient_table(self.fit)
        self.assertEqual([row.name for row in rows], list(self.fit.fixed_names))
        for row in rows:
            self.assertGreater(row.se, 0.0)
            self.assertTrue(0.0 <= row.p <= 1.0)

    def test_strong_signal_smooth_test(self):
        result = smooth_term_test(self.fit, "s(Time):Subject")
        self.assertTrue(result.applicable)
        self.assertLess(result.p, 1e-4)
        self.assertEqual(result.note, "approximate")

    def test_single_level_smooth_test(self):
        label = self.fit.system.level_labels[0]
        result = smooth_term_test(self.fit, f"s(Time):Subject{label}")
        self.assertGreater(result.edf, 0.0)

    def test_not_applicable_when_shrunk(self):
        fit = fit_at(self.fit.system, np.array([25.0, 25.0, 0.0]))
        result = smooth_term_test(fit, "s(Time):Subject")
        self.assertFalse(result.applicable)
        self.assertIsNone(result.p)

    def test_format_fit(self):
        text = format_fit(self.fit)
        self.assertIn("A. parametric coefficients", text)
        self.assertIn("B. smooth terms (approximate tests)", text)
        self.assertIn("factor_betweenY", text)
        csv = format_fit(self.fit, "csv")
        self.assertTrue(csv.startswith("section,name,field,value"))


@unittest.skipUnless(settings.SLOW_TESTS, "Монте-Карло проверки: TIMECOURSE_SLOW_TESTS=1")
class LmmSineRecoveryTests(unittest.TestCase):
    """
    Восстановление σ, σ_b, σ_α моделью LMMsine на данных amp (50 реплик).
    """

    def test_mean_estimates(self):
        estimates = {"sigma": [], "sigma_b": [], "sigma_alpha": []}
        for seed in range(50):
            params = SimParamsFactory(n_subjects=40, n_trials=100, amp=True, seed=seed)
            fit = fit_reml(assemble(lmm_sine(), generate("amp", params)), compute_ci=False)
            for role, values in estimates.items():
                values.append(fit.varcomp_by_role(role).estimate)
        self.assertTrue(9.5 <= np.mean(estimates["sigma"]) <= 10.5)
        self.assertTrue(0.7 <= np.mean(estimates["sigma_b"]) <= 1.3)
        self.assertTrue(28.0 <= np.mean(estimates["sigma_alpha"]) <= 36.0)


@unittest.skipUnless(settings.SLOW_TESTS, "Монте-Карло проверки: TIMECOURSE_SLOW_TESTS=1")
class SmoothTestCalibrationTests(unittest.TestCase):
    """
    Доля отклонений теста сглаживания на чистом шуме при α=0.05
    (400 реплик, популяционное сглаживание с нештрафованной линейной частью).
    """

    def test_rejection_rate_on_noise(self):
        spec = ModelSpec(
            fixed=(),
            smooths=(SmoothTermSpec(covariate="x", basis=BasisSpec(k=10, m=2)),),
        )
        rejections = 0
        for seed in range(400):
            rng = np.random.default_rng(seed)
            frame = pd.DataFrame(
                {
                    "x": rng.uniform(0.0, 1.0, 150),
                    "response": rng.normal(size=150),
                    "factor_within": "A",
                    "factor_between": "X",
                }
            )
            fit = fit_reml(assemble(spec, frame), compute_ci=False)
            (term,) = smooth_terms(fit)
            result = smooth_term_test(fit, term)
            if result.applicable and result.p < 0.05:
                rejections += 1
        self.assertTrue(0.02 <= rejections / 400 <= 0.09, rejections)
