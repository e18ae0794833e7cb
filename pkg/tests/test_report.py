"""Copyright (c) 2023, Aydin Abdi.

Unit tests for report.py module.
"""

import csv
import json
import math
from pathlib import Path

import pytest

from meta_risk_insights.data_classes import Design, RiskCurve, RiskPoint
from meta_risk_insights.report import (
    CURVE_COLUMNS,
    figure1_readme,
    write_curve_csv,
    write_json,
    write_rows,
    write_table_csv,
)
from meta_risk_insights.risk import RiskTable


@pytest.fixture
def curve() -> RiskCurve:
    """Returns a risk curve with one simulated and one closed-form point."""
    points = [
        RiskPoint(
            tau2=1.0, r_risk=0.4, mc_std_error=0.01, n_samples=100, method="monte-carlo"
        ),
        RiskPoint(tau2=0.0, r_risk=0.1),
    ]
    design = Design((1.0, 2.0), (2, 3))
    return RiskCurve(rule="delta1", design=design, seed=3, points=points)


def _read_csv(path: Path) -> list:
    with path.open(encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_write_json_replaces_infinity(tmp_path: Path) -> None:
    """Test that infinities are written as strings."""
    payload = {"a": math.inf, "b": [1.5]}
    target = write_json(str(tmp_path / "nested" / "report.json"), payload)
    assert target.exists()
    assert json.loads(target.read_text(encoding="utf-8")) == {"a": "inf", "b": [1.5]}


def test_write_rows_keeps_full_precision(tmp_path: Path) -> None:
    """Test that floats are written with repr."""
    target = write_rows(str(tmp_path / "rows.csv"), ("x", "y"), [(0.1 + 0.2, "text")])
    rows = _read_csv(target)
    assert rows[0] == ["x", "y"]
    assert float(rows[1][0]) == 0.1 + 0.2
    assert rows[1][1] == "text"


def test_write_curve_csv(tmp_path: Path, curve: RiskCurve) -> None:
    """Test the curve columns with and without the minimax bound."""
    rows = _read_csv(write_curve_csv(str(tmp_path / "plain.csv"), curve))
    assert tuple(rows[0]) == CURVE_COLUMNS
    assert rows[1] == ["0.0", "0.1", "0.0", "closed-form"]
    assert rows[2][3] == "monte-carlo"

    rows = _read_csv(write_curve_csv(str(tmp_path / "bound.csv"), curve, 0.5))
    assert rows[0][-1] == "minimax"
    assert all(row[-1] == "0.5" for row in rows[1:])


def test_write_table_csv(tmp_path: Path) -> None:
    """Test that a RiskTable keeps its column names."""
    table = RiskTable(("tau2", "dl", "minimax"), ((0.0, 0.3, 0.5), (1.0, 0.6, 0.5)))
    rows = _read_csv(write_table_csv(str(tmp_path / "table.csv"), table))
    assert rows[0] == ["tau2", "dl", "minimax"]
    assert len(rows) == 3


def test_figure1_readme() -> None:
    """Test that the description names every file and bound."""
    text = figure1_readme((5, 15), 1.0)
    assert "figure1_n5.csv" in text
    assert "figure1_n15.csv" in text
    assert "2/(n-1) = 0.5" in text
    assert "s^2 = 1.0" in text
