import unittest

import numpy as np

from config.exceptions import (
    BasisDomainError,
    CenteringContractError,
    DataError,
    InsufficientDataError,
    ParameterError,
)
from splines.models import CURVATURE, INTERCEPT, NULL_SPACE, BasisBlock, BasisSpec
from splines.services.basis import absorb_intercept, build_basis
from splines.services.grouped import expand_grouped
from tests.factories import BasisSpecFactory


class BuildBasisTests(unittest.TestCase):
    """
    Тесты построения базиса:
    - размеры и число штрафов для m=1 и m=2
    - нуль-пространство штрафа кривизны
    - воспроизведение квадратичной функции
    - ошибки области и нехватки данных
    """

    def setUp(self):
        self.x = np.linspace(0.0, 2.0 * np.pi, 100)
        self.spec = BasisSpec(k=20, m=1)

    def test_dimensions_and_penalties(self):
        block = build_basis(self.x, self.spec)
        self.assertEqual(block.design.shape, (100, 20))
        self.assertEqual(block.penalty_roles, (CURVATURE, NULL_SPACE))
        self.assertFalse(block.centered)

        curvature_only = build_basis(self.x, BasisSpec(k=20, m=2))
        self.assertEqual(len(curvature_only.penalties), 1)

    def test_curvature_penalty_kills_affine_coefficients(self):
        block = build_basis(self.x, self.spec)
        s1 = block.penalties[0]
        for coefs in (np.ones(20), np.arange(20.0)):
            self.assertLess(np.abs(s1 @ coefs).max(), 1e-10)

    def test_penalties_are_symmetric_psd(self):
        block = build_basis(self.x, self.spec)
        for penalty in block.penalties:
            np.testing.assert_allclose(penalty, penalty.T, atol=1e-12)
            eigenvalues = np.linalg.eigvalsh(penalty)
            self.assertGreaterEqual(eigenvalues.min(), -1e-8 * np.abs(penalty).max())

    def test_joint_penalty_positive_definite_for_m1(self):
        block = build_basis(self.x, self.spec)
        total = block.penalties[0] + block.penalties[1]
        self.assertGreater(np.linalg.eigvalsh(total).min(), 0.0)

    def test_translation_equivariance(self):
        shifted = build_basis(self.x + 3.5, self.spec)
        original = build_basis(self.x, self.spec)
        np.testing.assert_allclose(shifted.design, original.design, atol=1e-10)

    def test_quadratic_reproduction(self):
        block = build_basis(self.x, self.spec)
        y = self.x**2
        coefs, *_ = np.linalg.lstsq(block.design, y, rcond=None)
        self.assertLess(np.abs(block.design @ coefs - y).max(), 1e-6 * np.abs(y).max())

    def test_deterministic(self):
        first = build_basis(self.x, self.spec)
        second = build_basis(self.x, self.spec)
        np.testing.assert_array_equal(first.design, second.design)

    def test_outside_domain(self):
        spec = BasisSpec(k=10, domain=(0.0, 1.0))
        with self.assertRaises(BasisDomainError):
            build_basis(np.linspace(0.0, 1.5, 30), spec)

    def test_insufficient_data(self):
        with self.assertRaises(InsufficientDataError):
            build_basis(np.linspace(0.0, 1.0, 5), BasisSpec(k=10))

    def test_constant_covariate(self):
        with self.assertRaises(BasisDomainError):
            build_basis(np.ones(30), BasisSpec(k=10))

    def test_invalid_spec(self):
        with self.assertRaises(ParameterError):
            build_basis(self.x, BasisSpec(k=3))
        with self.assertRaises(ParameterError):
            build_basis(self.x, BasisSpec(k=10, m=3))
        with self.assertRaises(ParameterError):
            build_basis(self.x, BasisSpec(k=10, knot_rule="quantile"))


class PenalizedShrinkageTests(unittest.TestCase):
    """
    Прямые решения штрафованных нормальных уравнений на базисе:
    - m=2 точно воспроизводит линейную функцию при любом lambda
    - m=1 сжимает коэффициенты к нулю при lambda -> inf
    """

    def setUp(self):
        self.x = np.linspace(0.0, 10.0, 60)

    @staticmethod
    def _solve(block: BasisBlock, y: np.ndarray, lam: float) -> np.ndarray:
        penalty = lam * sum(block.penalties)
        b = block.design
        return np.linalg.solve(b.T @ b + penalty, b.T @ y)

    def test_affine_reproduction_m2(self):
        block = build_basis(self.x, BasisSpec(k=12, m=2))
        y = 3.0 - 0.7 * self.x
        for lam in (1e-3, 1.0, 1e6):
            fitted = block.design @ self._solve(block, y, lam)
            self.assertLess(np.abs(fitted - y).max(), 1e-6 * np.ptp(y))

    def test_shrinkage_m1(self):
        block = build_basis(self.x, BasisSpec(k=12, m=1))
        y = np.sin(self.x) + 0.1 * self.x
        total = sum(block.penalties)
        norms = []
        penalties = []
        for lam in 10.0 ** np.arange(-2, 9):
            coefs = self._solve(block, y, lam)
            norms.append(np.linalg.norm(coefs))
            penalties.append(coefs @ total @ coefs)
        self.assertTrue(np.all(np.diff(penalties) <= 1e-12 * penalties[0]))
        self.assertLess(norms[-1], 1e-3 * norms[0])


class AbsorbInterceptTests(unittest.TestCase):
    """
    Тесты поглощения ограничения:
    - столбцы ортогональны константе
    - конгруэнтность штрафов
    - сохранение линейной оболочки вместе с константой
    """

    def setUp(self):
        self.x = np.linspace(0.0, 2.0 * np.pi, 100)
        self.raw = build_basis(self.x, BasisSpecFactory(k=20))
        self.block = absorb_intercept(self.raw)

    def test_columns_sum_to_zero(self):
        design = self.block.design
        tol = 1e-8 * design.shape[0] * np.abs(self.raw.design).max()
        self.assertEqual(design.shape[1], 19)
        self.assertTrue(self.block.centered)
        self.assertLess(np.abs(design.sum(axis=0)).max(), tol)

    def test_penalty_congruence(self):
        rng = np.random.default_rng(1)
        transform = self.block.transform
        np.testing.assert_allclose(self.raw.design @ transform, self.block.design, atol=1e-12)
        for raw_penalty, penalty in zip(self.raw.penalties, self.block.penalties):
            for _ in range(100):
                beta = rng.standard_normal(19)
                original = transform @ beta
                expected = original @ raw_penalty @ original
                actual = beta @ penalty @ beta
                self.assertLessEqual(abs(actual - expected), 1e-8 * max(abs(expected), 1.0))

    def test_span_with_constant_preserved(self):
        ones = np.ones((100, 1))
        augmented = np.hstack([ones, self.block.design])
        coefs, *_ = np.linalg.lstsq(augmented, self.raw.design, rcond=None)
        self.assertLess(np.abs(augmented @ coefs - self.raw.design).max(), 1e-8)

    def test_constant_first_column(self):
        rng = np.random.default_rng(3)
        design = np.column_stack([np.ones(30), rng.standard_normal((30, 4))])
        block = BasisBlock(
            design=design,
            penalties=(np.eye(5),),
            penalty_roles=(CURVATURE,),
            centered=False,
            spec=BasisSpec(k=5),
            domain=(0.0, 1.0),
            knots=np.zeros(0),
            transform=np.eye(5),
        )
        centered = absorb_intercept(block)
        self.assertEqual(centered.n_columns, 4)
        self.assertEqual(np.linalg.matrix_rank(centered.design), 4)
        self.assertEqual(centered.warnings, ())

    def test_already_centered(self):
        with self.assertRaises(CenteringContractError):
            absorb_intercept(self.block)


class ExpandGroupedTests(unittest.TestCase):
    """
    Тесты разворачивания по уровням:
    - число столбцов Z для by и fs
    - нули вне блока своего уровня
    - группы lambda
    - центрирование каждого уровня при общей сетке
    """

    def setUp(self):
        grid = np.linspace(0.0, 1.0, 12)
        self.x = np.tile(grid, 2)
        self.codes = np.repeat([0, 1], 12)
        self.block = absorb_intercept(build_basis(self.x, BasisSpec(k=4, m=1)))

    def test_column_counts(self):
        by = expand_grouped(self.block, self.codes, 2, "by_smooth")
        fs = expand_grouped(self.block, self.codes, 2, "factor_smooth")
        self.assertEqual(by.Z.shape, (24, 6))
        self.assertEqual(fs.Z.shape, (24, 8))

    def test_rows_zero_outside_level(self):
        grouped = expand_grouped(self.block, self.codes, 2, "factor_smooth")
        z = grouped.Z.toarray()
        self.assertEqual(np.abs(z[:12, 4:]).max(), 0.0)
        self.assertEqual(np.abs(z[12:, :4]).max(), 0.0)
        np.testing.assert_array_equal(z[:12, 3], np.ones(12))

    def test_lambda_groups(self):
        fs = expand_grouped(self.block, self.codes, 2, "factor_smooth", linked=False)
        self.assertEqual(len(fs.lambda_groups), 3)
        roles = [fs.penalties[group[0]].role for group in fs.lambda_groups]
        self.assertEqual(roles, [CURVATURE, NULL_SPACE, INTERCEPT])
        linked = expand_grouped(self.block, self.codes, 2, "by_smooth", linked=True)
        self.assertEqual(len(linked.lambda_groups), 2)
        unlinked = expand_grouped(self.block, self.codes, 2, "by_smooth", linked=False)
        self.assertEqual(len(unlinked.lambda_groups), 4)

    def test_levels_centered(self):
        grouped = expand_grouped(self.block, self.codes, 2, "by_smooth")
        z = grouped.Z.toarray()
        self.assertLess(np.abs(z.sum(axis=0)).max(), 1e-10)

    def test_single_level(self):
        grouped = expand_grouped(self.block, np.zeros(24, dtype=int), 1, "factor_smooth")
        self.assertEqual(grouped.Z.shape, (24, 4))

    def test_uncentered_rejected(self):
        raw = build_basis(self.x, BasisSpec(k=4))
        with self.assertRaises(CenteringContractError):
            expand_grouped(raw, self.codes, 2, "factor_smooth")
        grouped = expand_grouped(raw, self.codes, 2, "factor_smooth", allow_uncentered=True)
        self.assertEqual(grouped.width, 5)

    def test_bad_codes_and_mode(self):
        with self.assertRaises(DataError):
            expand_grouped(self.block, self.codes, 1, "by_smooth")
        with self.assertRaises(ParameterError):
            expand_grouped(self.block, self.codes, 2, "population")
