"""
Вывод итогов исследования: выровненная текстовая таблица (по
моделям: средняя оценка, число значимых реплик, дисперсия оценок)
и длинный CSV для построения графиков.
"""

import pandas as pd

from ..models import StudySummary


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def summary_frame(summary: StudySummary) -> pd.DataFrame:
    """Длинная таблица: section, model, name, field, value."""
    rows = summary.rows.reset_index().melt(
        id_vars=["model", "coefficient"], var_name="field"
    )
    rows = rows.rename(columns={"coefficient": "name"})
    rows.insert(0, "section", "coefficient")

    sds = summary.sd_means.reset_index().melt(id_vars="model", var_name="name")
    sds = sds.dropna(subset=["value"])
    sds.insert(0, "section", "sd_mean")
    sds.insert(3, "field", "mean")

    failures = pd.DataFrame(
        {
            "section": "failures",
            "model": list(summary.failures),
            "name": "",
            "field": "count",
            "value": list(summary.failures.values()),
        }
    )
    return pd.concat([rows, sds, failures], ignore_index=True)


def format_summary(summary: StudySummary, fmt: str = "table") -> str:
    if fmt == "csv":
        return summary_frame(summary).to_csv(index=False)

    cfg = summary.config
    header = (
        f"Study: generator={cfg.generator} reps={cfg.n_reps} "
        f"{'type I (null)' if cfg.null_mode else 'power'}"
    )
    coefficients = summary.rows.drop(index="(Intercept)", level="coefficient", errors="ignore")
    sig_columns = [f"n_sig_{alpha:g}" for alpha in cfg.alphas]
    table = coefficients[["mean", *sig_columns, "var", "n_ok"]]
    lines = [
        header,
        "",
        "Coefficients (mean estimate, significant replicates, variance of estimates)",
        table.to_string(float_format=_fmt),
        "",
        "Mean sd estimates",
        summary.sd_means.to_string(float_format=_fmt, na_rep="-"),
        "",
        "Convergence failures: "
        + ", ".join(f"{model}={count}" for model, count in summary.failures.items()),
    ]
    return "\n".join(lines) + "\n"
