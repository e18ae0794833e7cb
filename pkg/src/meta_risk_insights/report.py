"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for writing results to disk: JSON summaries and
CSV tables. Floats are written with ``repr`` so values round-trip exactly and
repeated runs produce identical files.
"""

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

from loguru import logger

from meta_risk_insights.data_classes import RiskCurve
from meta_risk_insights.risk import RiskTable

CURVE_COLUMNS = ("tau2", "r_risk", "mc_se", "method")


def _format(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_ready(value: object) -> object:
    """Replace non-finite floats, which JSON cannot carry, by their names."""
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {key: _json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(item) for item in value]
    return value


def _prepare(path: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def write_json(path: str, payload: dict) -> Path:
    """Write ``payload`` as indented JSON.

    Args:
        path: Output file.
        payload: JSON-ready dictionary.

    Returns:
        The path written.
    """
    target = _prepare(path)
    text = json.dumps(_json_ready(payload), indent=2) + "\n"
    target.write_text(text, encoding="utf-8")
    logger.info(f"JSON report saved to: {target.absolute()}")
    return target


def write_rows(
    path: str, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> Path:
    """Write a CSV file with ``header`` and ``rows``."""
    target = _prepare(path)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(value) for value in row])
    logger.info(f"CSV saved to: {target.absolute()}")
    return target


def write_curve_csv(
    path: str, curve: RiskCurve, minimax: Optional[float] = None
) -> Path:
    """Write a risk curve: tau2, r_risk, mc_se, method and optionally minimax."""
    header = CURVE_COLUMNS + (("minimax",) if minimax is not None else ())
    return write_rows(path, header, curve.rows(minimax))


def write_table_csv(path: str, table: RiskTable) -> Path:
    """Write a RiskTable with its own column names."""
    return write_rows(path, table.columns, table.rows)


def figure1_readme(sizes: Sequence[int], s2: float) -> str:
    """Return the text describing the figure1 CSV files."""
    files = "\n".join(
        f"- figure1_n{n}.csv: n = {n}, minimax bound 2/(n-1) = {2 / (n - 1)!r}"
        for n in sizes
    )
    return (
        "R-risk of estimators of mu when every study reports the variance "
        f"s^2 = {s2!r}.\n\n"
        "Columns: tau2, dl (DerSimonian-Laird), mh (modified Hedges), delta1, "
        "ml (maximum likelihood), minimax.\n"
        "Plot every risk column against tau2 on a log axis; the minimax column is "
        "the horizontal line 2/(n-1).\n\n"
        f"{files}\n"
    )
