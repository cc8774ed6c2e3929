"""
Оценивание параметров сглаживания и компонент дисперсии по REML.

Критерий (профилированный по σ):
    l_r = -1/2 [(n - Mp)(1 + log 2πσ̂²) + log|AᵀA + P| - log|P|₊],
    σ̂² = Dp / (n - Mp),  Dp = ‖y - Aθ̂‖² + θ̂ᵀPθ̂.
Штрафованная система решается поблочно: для каждого уровня группы
разложение Холецкого с выбором ведущего элемента D_g = G_gᵀG_g + P_g,
затем дополнение Шура по плотной части. Отклик делится на sd(y)
(system.scale), поэтому оптимизатор видит одни и те же данные при
любом масштабе отклика.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, stats
from scipy.linalg import lapack

from config import settings
from config.exceptions import ConvergenceError, NumericalError

from ..models import FitResult, PenalizedSolution, PenalizedSystem, Posterior
from .varcomp import variance_components

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PivotedFactor:
    """
    Холецкий с выбором ведущего элемента после масштабирования диагонали:
    Pᵀ (D A D) P = UᵀU,  D = diag(A)^(-1/2),  A[piv][:, piv] ↔ UᵀU.
    """

    upper: np.ndarray
    piv: np.ndarray
    scaling: np.ndarray

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.log(np.diag(self.upper)).sum() - np.log(self.scaling).sum())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        weights = self.scaling if rhs.ndim == 1 else self.scaling[:, None]
        permuted = (weights * rhs)[self.piv]
        inner = linalg.solve_triangular(self.upper, permuted, trans="T")
        solution = np.empty_like(inner)
        solution[self.piv] = linalg.solve_triangular(self.upper, inner)
        return weights * solution


def pivoted_cholesky(matrix: np.ndarray, label: str = "Штрафованная система") -> PivotedFactor:
    """
    Разложение штрафованного кросс-произведения. Ранг ниже размерности
    (остаточный диагональный элемент масштабированной матрицы не больше
    PIVOT_TOL) означает вырожденность вне нуль-пространств штрафов.
    """
    size = matrix.shape[0]
    diag = np.diag(matrix)
    if not np.all(np.isfinite(matrix)) or np.any(diag <= 0.0):
        raise NumericalError(f"{label} не положительно определена.")
    scaling = 1.0 / np.sqrt(diag)
    scaled = matrix * np.outer(scaling, scaling)
    upper, piv, rank, info = lapack.dpstrf(scaled, tol=settings.PIVOT_TOL)
    if info < 0 or rank < size:
        raise NumericalError(f"{label} вырождена: ранг {rank} из {size}.")
    return PivotedFactor(upper=np.triu(upper), piv=np.asarray(piv) - 1, scaling=scaling)


@dataclass
class _State:
    """Решение штрафованной системы на стандартизованной шкале."""

    dense_coef: np.ndarray
    local_coef: np.ndarray
    deviance: float
    logdet_c: float
    schur_factor: PivotedFactor | None
    local_factors: tuple[PivotedFactor, ...]
    local_matrix: np.ndarray
    weights: np.ndarray
    dense_penalty: np.ndarray
    local_penalty: np.ndarray


def _solve(system: PenalizedSystem, theta: np.ndarray) -> _State:
    cp = system.crossprod
    dense_penalty, local_penalty = system.penalty_blocks(theta)
    n_dense = system.n_dense

    schur = cp.dense_dense + dense_penalty
    rhs = cp.dense_y.copy()
    logdet_c = 0.0
    local_matrix = cp.local_local + local_penalty
    weights = np.zeros(cp.local_dense.shape)
    local_rhs = np.zeros(cp.local_y.shape)
    local_factors: tuple[PivotedFactor, ...] = ()

    if system.width and system.n_levels:
        local_factors = tuple(
            pivoted_cholesky(block, "Блок уровня группы") for block in local_matrix
        )
        logdet_c += sum(factor.logdet for factor in local_factors)
        local_rhs = np.stack(
            [factor.solve(level_y) for factor, level_y in zip(local_factors, cp.local_y)]
        )
        if n_dense:
            weights = np.stack(
                [factor.solve(block) for factor, block in zip(local_factors, cp.local_dense)]
            )
            schur -= np.einsum("gdp,gdq->pq", cp.local_dense, weights)
            rhs -= np.einsum("gdp,gd->p", cp.local_dense, local_rhs)

    factor = None
    dense_coef = np.zeros(n_dense)
    if n_dense:
        factor = pivoted_cholesky(0.5 * (schur + schur.T))
        logdet_c += factor.logdet
        dense_coef = factor.solve(rhs)

    local_coef = local_rhs - np.einsum("gdp,p->gd", weights, dense_coef)
    deviance = cp.yy - float(dense_coef @ cp.dense_y) - float((local_coef * cp.local_y).sum())
    return _State(
        dense_coef=dense_coef,
        local_coef=local_coef,
        deviance=max(deviance, np.finfo(float).tiny),
        logdet_c=logdet_c,
        schur_factor=factor,
        local_factors=local_factors,
        local_matrix=local_matrix,
        weights=weights,
        dense_penalty=dense_penalty,
        local_penalty=local_penalty,
    )


def _criterion_parts(system: PenalizedSystem, theta: np.ndarray) -> tuple[float, float]:
    state = _solve(system, theta)
    return state.deviance, state.logdet_c


def _residual_dim(system: PenalizedSystem) -> int:
    return system.n - system.null_dim


def _scaled_loglik(system: PenalizedSystem, theta: np.ndarray, state: _State) -> float:
    dof = _residual_dim(system)
    sigma2 = state.deviance / dof
    return -0.5 * (
        dof * (1.0 + np.log(2.0 * np.pi * sigma2)) + state.logdet_c - system.log_pdet(theta)
    )


def restricted_loglik(system: PenalizedSystem, params: np.ndarray) -> float:
    """Профилированное ограниченное правдоподобие на шкале исходного отклика."""
    params = np.asarray(params, dtype=float)
    value = _scaled_loglik(system, params, _solve(system, params))
    return float(value - _residual_dim(system) * np.log(system.scale))


def penalized_solve(system: PenalizedSystem, params: np.ndarray) -> PenalizedSolution:
    """Решение штрафованных нормальных уравнений при фиксированных параметрах."""
    params = np.asarray(params, dtype=float)
    state = _solve(system, params)
    scale = system.scale
    dof = _residual_dim(system)
    return PenalizedSolution(
        params=params,
        coefficients=np.concatenate([state.dense_coef, state.local_coef.ravel()]) * scale,
        penalized_deviance=state.deviance * scale**2,
        sigma=float(np.sqrt(state.deviance / dof) * scale),
        reml=float(_scaled_loglik(system, params, state) - dof * np.log(scale)),
    )


class _Objective:
    """Минус REML на стандартизованной шкале с учётом лучшей точки."""

    def __init__(self, system: PenalizedSystem) -> None:
        self.system = system
        self.step = settings.FD_STEP
        self.lower = np.array([-np.inf if p.lower is None else p.lower for p in system.params])
        self.upper = np.array([np.inf if p.upper is None else p.upper for p in system.params])
        self.best_theta = system.initial_params
        self.best_value = np.inf
        self.evaluations = 0

    def __call__(self, theta: np.ndarray) -> float:
        self.evaluations += 1
        try:
            value = -_scaled_loglik(self.system, theta, _solve(self.system, theta))
        except NumericalError:
            return np.inf
        if value < self.best_value:
            self.best_value, self.best_theta = value, np.array(theta, dtype=float)
        logger.debug("REML evaluation %s: %.10g", self.evaluations, -value)
        return float(value)

    def gradient(self, theta: np.ndarray, step: float | None = None) -> np.ndarray:
        step = step or self.step
        grad = np.zeros(theta.size)
        for i in range(theta.size):
            shift = np.zeros(theta.size)
            shift[i] = step
            grad[i] = (self(theta + shift) - self(theta - shift)) / (2.0 * step)
        return grad

    def hessian(self, theta: np.ndarray, step: float = 1e-3) -> np.ndarray:
        size = theta.size
        hess = np.zeros((size, size))
        for j in range(size):
            shift = np.zeros(size)
            shift[j] = step
            hess[:, j] = (self.gradient(theta + shift) - self.gradient(theta - shift)) / (2 * step)
        return 0.5 * (hess + hess.T)

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lower, self.upper)

    def free(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Координаты, не упёршиеся в границу по направлению спуска."""
        at_lower = (theta <= self.lower + 1e-8) & (grad > 0)
        at_upper = (theta >= self.upper - 1e-8) & (grad < 0)
        return ~(at_lower | at_upper)

    def projected_norm(self, theta: np.ndarray) -> float:
        grad = self.gradient(theta)
        if not np.all(np.isfinite(grad)):
            return np.inf
        free = self.free(theta, grad)
        return float(np.abs(grad[free]).max(initial=0.0))

    @property
    def bounds(self) -> list[tuple[float | None, float | None]]:
        return [(p.lower, p.upper) for p in self.system.params]


def _newton_polish(objective: _Objective, theta: np.ndarray, max_steps: int = 25) -> np.ndarray:
    """
    Ньютоновские шаги с гессианом по конечным разностям. Цель на три
    порядка строже REML_GRAD_TOL; после достижения REML_GRAD_TOL шаг
    принимается только при строгом уменьшении критерия.
    """
    value = objective(theta)
    target = 1e-3 * settings.REML_GRAD_TOL
    for _ in range(max_steps):
        grad = objective.gradient(theta)
        if not np.all(np.isfinite(grad)):
            break
        free = objective.free(theta, grad)
        grad_norm = np.abs(grad[free]).max(initial=0.0)
        if grad_norm <= target:
            break
        stationary = grad_norm <= settings.REML_GRAD_TOL

        hess = objective.hessian(theta)[np.ix_(free, free)]
        eigvals, eigvecs = np.linalg.eigh(hess)
        floor = 1e-6 * max(1.0, float(np.abs(eigvals).max(initial=0.0)))
        eigvals = np.maximum(np.abs(eigvals), floor)
        direction = np.zeros(theta.size)
        direction[free] = -eigvecs @ ((eigvecs.T @ grad[free]) / eigvals)

        tolerance = 1e-12 * (1.0 + abs(value))
        for halving in range(30):
            candidate = objective.clip(theta + 0.5**halving * direction)
            candidate_value = objective(candidate)
            if candidate_value < value or (not stationary and candidate_value <= value + tolerance):
                break
        else:
            break
        if np.array_equal(candidate, theta):
            break
        theta, value = candidate, candidate_value
    return theta


def _optimize(system: PenalizedSystem) -> tuple[np.ndarray, float, int, str]:
    """
    L-BFGS-B с центральными конечными разностями, затем уточнение Ньютоном;
    если норма градиента выше REML_GRAD_TOL, запасной Нелдер–Мид.
    Возвращает (theta, норма градиента, число вычислений критерия, метод).
    """
    objective = _Objective(system)
    result = optimize.minimize(
        objective,
        system.initial_params,
        jac=objective.gradient,
        method="L-BFGS-B",
        bounds=objective.bounds,
        options={
            "maxiter": settings.REML_MAX_ITER,
            "gtol": 0.1 * settings.REML_GRAD_TOL,
            "ftol": 1e-15,
        },
    )
    theta = _newton_polish(objective, objective.clip(result.x))
    grad_norm = objective.projected_norm(theta)
    method = "L-BFGS-B"

    if not grad_norm <= settings.REML_GRAD_TOL:
        logger.warning(
            "L-BFGS-B stopped with gradient norm %.3g (%s), falling back to Nelder-Mead",
            grad_norm,
            result.message,
        )
        result = optimize.minimize(
            objective,
            objective.best_theta,
            method="Nelder-Mead",
            bounds=objective.bounds,
            options={
                "maxiter": 50 * settings.REML_MAX_ITER,
                "xatol": 1e-8,
                "fatol": 1e-12,
            },
        )
        theta = _newton_polish(objective, objective.clip(result.x))
        grad_norm = objective.projected_norm(theta)
        method = "Nelder-Mead"

    if not grad_norm <= settings.REML_GRAD_TOL:
        raise ConvergenceError(
            f"REML для модели {system.model_name} не сошёлся "
            f"(норма градиента {grad_norm:.3g} > {settings.REML_GRAD_TOL:g}).",
            best={"params": objective.best_theta, "reml": -objective.best_value},
        )
    return theta, grad_norm, objective.evaluations, method


def fit_at(
    system: PenalizedSystem,
    params: np.ndarray,
    compute_ci: bool = False,
    grad_norm: float = 0.0,
    n_iter: int = 0,
    method: str = "fixed",
) -> FitResult:
    """Все производные величины подгонки при заданных параметрах."""
    theta = np.asarray(params, dtype=float)
    state = _solve(system, theta)
    scale = system.scale
    n, dof = system.n, _residual_dim(system)

    schur_inv = (
        state.schur_factor.solve(np.eye(system.n_dense))
        if state.schur_factor is not None
        else np.zeros((0, 0))
    )
    local_inv = np.zeros(state.local_matrix.shape)
    if state.local_factors:
        identity = np.eye(system.width)
        local_inv = np.stack([factor.solve(identity) for factor in state.local_factors])
    posterior = Posterior(
        schur_inv=schur_inv,
        local_inv=local_inv,
        weights=state.weights,
        n_dense=system.n_dense,
        width=system.width,
    )

    # edf_j = 1 - (C⁻¹P)_jj
    dense_edf = 1.0 - np.einsum("ij,ji->i", schur_inv, state.dense_penalty)
    cross = np.einsum("gip,pq,gjq->gij", state.weights, schur_inv, state.weights)
    local_edf = 1.0 - np.einsum("gij,gji->gi", local_inv + cross, state.local_penalty)
    column_edf = np.concatenate([dense_edf, local_edf.ravel()])

    term_edf: dict[str, float] = {}
    for term in system.terms:
        term_edf[term.name] = float(column_edf[system.global_columns(term)].sum())
    total_edf = float(column_edf.sum())
    resid_df = n - total_edf

    sigma_scaled = float(np.sqrt(state.deviance / dof))
    sigma_hat = sigma_scaled * scale
    coefficients = np.concatenate([state.dense_coef, state.local_coef.ravel()]) * scale
    fitted = system.dense @ state.dense_coef
    if system.width and system.n_levels:
        fitted = fitted + (system.local * state.local_coef[system.codes]).sum(axis=1)
    fitted = fitted * scale

    n_fixed = system.n_fixed
    beta_hat = state.dense_coef[:n_fixed] * scale
    se = sigma_hat * np.sqrt(np.diag(schur_inv)[:n_fixed])
    t_values = beta_hat / se
    p_values = 2.0 * stats.t.sf(np.abs(t_values), resid_df)

    rss = float(((system.y - fitted) ** 2).sum())
    loglik = -0.5 * n * np.log(2.0 * np.pi * sigma_hat**2) - rss / (2.0 * sigma_hat**2)
    reml = _scaled_loglik(system, theta, state) - dof * np.log(scale)

    lambda_index = [i for i, p in enumerate(system.params) if p.kind == "log_lambda"]
    varcomp = variance_components(
        system,
        theta,
        sigma_scaled,
        lambda point: _criterion_parts(system, point),
        compute_ci=compute_ci,
    )

    return FitResult(
        system=system,
        params=theta,
        lambda_names=tuple(system.params[i].name for i in lambda_index),
        lambdas=np.exp(theta[lambda_index]),
        coefficients=coefficients,
        fixed_names=system.fixed_names,
        beta_hat=beta_hat,
        se=se,
        t_values=t_values,
        p_values=p_values,
        sigma_hat=sigma_hat,
        varcomp=varcomp,
        edf=term_edf,
        column_edf=column_edf,
        total_edf=total_edf,
        resid_df=resid_df,
        reml=float(reml),
        loglik=float(loglik),
        aic=float(-2.0 * loglik + 2.0 * total_edf),
        fitted=fitted,
        converged=grad_norm <= settings.REML_GRAD_TOL,
        grad_norm=grad_norm,
        n_iter=n_iter,
        method=method,
        posterior=posterior,
    )


def fit_reml(system: PenalizedSystem, compute_ci: bool = True) -> FitResult:
    """
    Подгонка по REML. Детерминирована: внутри нет случайности.
    Ошибки: ConvergenceError (с лучшим найденным состоянием),
    NumericalError для неположительно определённой системы.
    """
    if system.params:
        theta, grad_norm, n_iter, method = _optimize(system)
    else:
        theta, grad_norm, n_iter, method = system.initial_params, 0.0, 0, "closed-form"

    fit = fit_at(
        system,
        theta,
        compute_ci=compute_ci,
        grad_norm=grad_norm,
        n_iter=n_iter,
        method=method,
    )
    logger.info(
        "Fitted %s: n=%s reml=%.4f evaluations=%s method=%s",
        system.model_name,
        system.n,
        fit.reml,
        n_iter,
        method,
    )
    return fit
