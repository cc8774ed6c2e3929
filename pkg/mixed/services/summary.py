"""
Сводки подгонки: таблица коэффициентов, edf и компоненты дисперсии,
приближённые тесты сглаживаний, текстовый отчёт в раскладке
"A. parametric coefficients / B. smooth terms".
"""

import logging

import numpy as np
import pandas as pd
from scipy import stats

from ..models import CoefficientRow, FitResult, SmoothTest, TermInfo, VarComp

logger = logging.getLogger(__name__)

# Член с edf ниже порога считается полностью сжатым
MIN_TEST_EDF = 0.5


def coefficient_table(fit: FitResult) -> list[CoefficientRow]:
    """
    Строки (имя, оценка, se, t, p) для фиксированных коэффициентов.
    se из апостериорной ковариации, p по t-распределению с n - edf степенями свободы.
    """
    return [
        CoefficientRow(
            name=name,
            estimate=float(fit.beta_hat[i]),
            se=float(fit.se[i]),
            statistic=float(fit.t_values[i]),
            p=float(fit.p_values[i]),
        )
        for i, name in enumerate(fit.fixed_names)
    ]


def edf_and_varcomp(fit: FitResult) -> tuple[dict[str, float], tuple[VarComp, ...]]:
    """edf по членам (штрафованным) и компоненты дисперсии."""
    penalized = {
        term.name: fit.edf[term.name] for term in fit.system.terms if term.kind != "fixed"
    }
    return penalized, fit.varcomp


def smooth_terms(fit: FitResult) -> list[str]:
    return [term.name for term in fit.system.terms if term.kind == "smooth"]


def _resolve_term(fit: FitResult, name: str) -> tuple[TermInfo, np.ndarray | None]:
    """
    Член по имени. Для by-сглаживания допускается имя одного уровня,
    например "s(Time):Subject3".
    """
    system = fit.system
    for term in system.terms:
        if term.name == name:
            return term, None
    for term in system.terms:
        if term.mode == "by_smooth" and name.startswith(term.name):
            label = name[len(term.name):]
            if label in system.level_labels:
                return term, np.array([system.level_labels.index(label)])
    raise KeyError(f"Член модели {name} не найден.")


def smooth_term_test(fit: FitResult, term: str) -> SmoothTest:
    """
    Приближённый тест Вальда: F = βᵀV⁻β / edf, V⁻ псевдообратная
    ранга round(edf), p по F(edf, n - edf). При edf < 0.5 тест неприменим.
    """
    info, levels = _resolve_term(fit, term)
    index = fit.system.global_columns(info, levels)
    edf = float(fit.column_edf[index].sum())
    if edf < MIN_TEST_EDF:
        logger.info("Smooth test for %s is not applicable (edf=%.3g)", term, edf)
        return SmoothTest(term=term, edf=edf, statistic=None, p=None, applicable=False)

    beta = fit.coefficients[index]
    cov = fit.coef_cov_block(index)
    eigvals, eigvecs = np.linalg.eigh(cov)
    rank = min(max(1, int(round(edf))), index.size)
    top_vals, top_vecs = eigvals[-rank:], eigvecs[:, -rank:]
    projected = top_vecs.T @ beta
    statistic = float((projected**2 / top_vals).sum() / edf)
    p = float(stats.f.sf(statistic, edf, fit.resid_df))
    return SmoothTest(term=term, edf=edf, statistic=statistic, p=p, applicable=True)


def coefficient_frame(fit: FitResult) -> pd.DataFrame:
    rows = coefficient_table(fit)
    return pd.DataFrame(
        {
            "Estimate": [row.estimate for row in rows],
            "Std. Error": [row.se for row in rows],
            "t-value": [row.statistic for row in rows],
            "p-value": [row.p for row in rows],
        },
        index=[row.name for row in rows],
    )


def smooth_frame(fit: FitResult) -> pd.DataFrame:
    tests = [smooth_term_test(fit, name) for name in smooth_terms(fit)]
    return pd.DataFrame(
        {
            "edf": [test.edf for test in tests],
            "F-value": [test.statistic if test.applicable else np.nan for test in tests],
            "p-value": [test.p if test.applicable else np.nan for test in tests],
        },
        index=[test.term for test in tests],
    )


def varcomp_frame(fit: FitResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "estimate": [c.estimate for c in fit.varcomp],
            "lower": [c.ci[0] if c.ci else np.nan for c in fit.varcomp],
            "upper": [c.ci[1] if c.ci else np.nan for c in fit.varcomp],
            "boundary": [c.boundary for c in fit.varcomp],
        },
        index=[c.name for c in fit.varcomp],
    )


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def format_fit(fit: FitResult, fmt: str = "table") -> str:
    """
    Текстовый отчёт подгонки.
    table: блоки A (параметрические коэффициенты), B (сглаживания),
    компоненты дисперсии и критерии; csv: одна длинная таблица.
    """
    coefficients = coefficient_frame(fit)
    smooths = smooth_frame(fit)
    varcomps = varcomp_frame(fit)
    criteria = pd.DataFrame(
        {
            "value": [fit.reml, fit.loglik, fit.aic, fit.total_edf, fit.sigma_hat],
        },
        index=["REML", "logLik", "AIC (conditional)", "total edf", "sigma"],
    )

    if fmt == "csv":
        blocks = []
        for section, frame in (
            ("coefficient", coefficients),
            ("smooth", smooths),
            ("varcomp", varcomps),
            ("criterion", criteria),
        ):
            long = frame.reset_index().melt(id_vars="index", var_name="field")
            long.insert(0, "section", section)
            blocks.append(long.rename(columns={"index": "name"}))
        return pd.concat(blocks, ignore_index=True).to_csv(index=False)

    lines = [
        f"Model: {fit.system.model_name}   n = {fit.system.n}",
        "",
        "A. parametric coefficients",
        coefficients.to_string(float_format=_fmt),
    ]
    if not smooths.empty:
        lines += [
            "",
            "B. smooth terms (approximate tests)",
            smooths.to_string(float_format=_fmt, na_rep="n/a"),
        ]
    lines += [
        "",
        "Variance components (sd, approximate 95% CI)",
        varcomps.to_string(float_format=_fmt, na_rep="-"),
        "",
        criteria.to_string(float_format=_fmt, header=False),
    ]
    return "\n".join(lines) + "\n"
