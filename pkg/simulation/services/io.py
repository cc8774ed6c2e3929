"""
Чтение и запись наборов данных в CSV.
Первая строка файла: комментарий "# seed=<seed>"; строки, начинающиеся
с "#", при чтении пропускаются. Числа пишутся в представлении,
восстанавливающем значение без потерь.
"""

import io
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from config.exceptions import DataError

from ..models import CSV_COLUMNS, LATENT_COLUMNS, LongDataset

logger = logging.getLogger(__name__)

NUMERIC_COLUMNS = ("subject", "trial", "time", "response") + LATENT_COLUMNS


def dataset_to_csv(dataset: LongDataset, with_latent: bool = False) -> str:
    frame = dataset.public_frame(with_latent=with_latent)
    return f"# seed={dataset.params.seed}\n" + frame.to_csv(index=False)


def _data_lines(text: str) -> tuple[list[int], int]:
    """
    Номера физических строк с данными и число полей заголовка.
    Несовпадение числа полей даёт ошибку с номером строки.
    """
    line_numbers: list[int] = []
    header_fields = 0
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = len(stripped.split(","))
        if not header_fields:
            header_fields = fields
            continue
        if fields != header_fields:
            raise DataError(
                f"Строка {number}: ожидалось {header_fields} полей, получено {fields}."
            )
        line_numbers.append(number)
    if not header_fields:
        raise DataError("CSV не содержит заголовка.")
    return line_numbers, header_fields


def parse_dataset(text: str) -> pd.DataFrame:
    """Разбор CSV в таблицу с проверкой столбцов и типов."""
    line_numbers, _ = _data_lines(text)
    try:
        frame = pd.read_csv(
            io.StringIO(text),
            comment="#",
            float_precision="round_trip",
            dtype={"factor_within": str, "factor_between": str},
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"Не удалось разобрать CSV: {exc}") from exc

    missing = [name for name in CSV_COLUMNS if name not in frame.columns]
    if missing:
        raise DataError(f"В CSV нет столбцов: {', '.join(missing)}.")

    for name in NUMERIC_COLUMNS:
        if name not in frame.columns:
            continue
        values = pd.to_numeric(frame[name], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            raise DataError(
                f"Строка {line_numbers[bad[0]]}: столбец {name} должен быть числовым."
            )
        frame[name] = values
    return frame


def read_dataset(path: str | Path) -> pd.DataFrame:
    text = Path(path).read_text(encoding="utf-8")
    frame = parse_dataset(text)
    logger.info("Read %s rows from %s", len(frame), path)
    return frame


def read_seed(text: str) -> int | None:
    """seed из комментария-заголовка, если он есть."""
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        if line.startswith("# seed="):
            value = line.split("=", 1)[1].strip()
            return int(value) if value.isdigit() else None
    return None
