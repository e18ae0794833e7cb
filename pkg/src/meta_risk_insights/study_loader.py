"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for loading study CSV files.
"""

import csv
import math
from pathlib import Path
from typing import List, Optional  # noqa: F401

from loguru import logger

from meta_risk_insights.data_classes import (
    DEFAULT_GROUPING_TOLERANCE,
    Study,
    StudySet,
)
from meta_risk_insights.exceptions import InvalidInputError

REQUIRED_COLUMNS = ("effect", "std_error")
OPTIONAL_COLUMNS = ("group_id",)


class StudyLoader:
    """Responsible for loading a CSV file of studies.

    The header is ``effect,std_error`` with an optional ``group_id`` column.

    Example:
        StudyLoader('tests/data/six_studies.csv').study_set
    """

    def __init__(
        self, csv_path: str, grouping_tolerance: float = DEFAULT_GROUPING_TOLERANCE
    ) -> None:
        """Responsible for loading a CSV file of studies.

        Args:
            csv_path: Path to the CSV file.
            grouping_tolerance: Relative tolerance passed on to the StudySet.
        """
        self.csv_path = Path(csv_path)
        self.grouping_tolerance = grouping_tolerance
        self._studies = None  # type: Optional[List[Study]]

    @staticmethod
    def _parse_float(value: Optional[str], column: str, line: int) -> float:
        if value is None or not value.strip():
            raise InvalidInputError(f"missing {column}", line=line)
        try:
            number = float(value)
        except ValueError:
            raise InvalidInputError(f"{column} is not a number: {value!r}", line=line)
        if not math.isfinite(number):
            raise InvalidInputError(f"{column} must be finite: {value!r}", line=line)
        return number

    def _parse_row(self, row: dict, line: int) -> Study:
        effect = self._parse_float(row.get("effect"), "effect", line)
        std_error = self._parse_float(row.get("std_error"), "std_error", line)
        if std_error <= 0:
            raise InvalidInputError(
                f"std_error must be positive: {std_error}", line=line
            )
        group_id = (row.get("group_id") or "").strip() or None
        return Study(effect=effect, std_error=std_error, group_id=group_id)

    @property
    def studies(self) -> List[Study]:
        """Returns the studies of the file.

        Returns:
            List of Study objects in file order.
        """
        if self._studies is None:
            if not self.csv_path.is_file():
                raise InvalidInputError(f"no such file: {self.csv_path}")
            studies = []
            with self.csv_path.open(newline="", encoding="utf-8") as handle:
                reader = csv.DictReader(handle)
                header = [name.strip() for name in reader.fieldnames or []]
                missing = [name for name in REQUIRED_COLUMNS if name not in header]
                unknown = [
                    name
                    for name in header
                    if name not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS
                ]
                if missing or unknown:
                    raise InvalidInputError(
                        f"header must be effect,std_error[,group_id], got {header}",
                        line=1,
                    )
                reader.fieldnames = header
                for row in reader:
                    if None in row:
                        raise InvalidInputError(
                            "too many fields", line=reader.line_num
                        )
                    if not any((value or "").strip() for value in row.values()):
                        continue
                    studies.append(self._parse_row(row, reader.line_num))
            logger.info(f"Loaded {len(studies)} studies from {self.csv_path}")
            self._studies = studies
        return self._studies

    @property
    def study_set(self) -> StudySet:
        """Returns the studies as a StudySet.

        Returns:
            StudySet object.
        """
        return StudySet(tuple(self.studies), self.grouping_tolerance)
