"""Copyright (c) 2023, Aydin Abdi.

Unit tests for grouping.py module.
"""

import pytest

from meta_risk_insights.data_classes import Study, StudySet
from meta_risk_insights.exceptions import InvalidInputError
from meta_risk_insights.grouping import StudyGrouper, group
from meta_risk_insights.study_loader import StudyLoader


def test_group_six_studies() -> None:
    """Test grouping of the six-study example."""
    grouped = group(StudyLoader("tests/data/six_studies.csv").study_set)
    assert grouped.group_variances == (1.0, 2.25, 4.0)
    assert grouped.multiplicities == (3, 2, 1)
    assert grouped.group_means[0] == pytest.approx(1.0 / 3.0)
    assert grouped.group_means[1] == pytest.approx(1.4)
    assert grouped.within_variances[1] == pytest.approx(0.72)
    assert grouped.within_variances[2] == 0.0
    assert grouped.grand_mean == pytest.approx(6.9 / 6.0)


def test_group_is_order_independent() -> None:
    """Test that input order does not change the grouping."""
    studies = (Study(1.0, 2.0), Study(0.0, 1.0), Study(3.0, 2.0), Study(-1.0, 1.0))
    forward = group(StudySet(studies))
    backward = group(StudySet(tuple(reversed(studies))))
    assert forward == backward


def test_group_tolerance_merges_close_variances() -> None:
    """Test that variances within the tolerance share a group."""
    studies = (Study(0.0, 1.0), Study(1.0, 1.0 + 1e-12), Study(2.0, 3.0))
    assert group(StudySet(studies)).multiplicities == (2, 1)
    assert group(StudySet(studies, grouping_tolerance=0.0)).multiplicities == (1, 1, 1)


def test_group_labels() -> None:
    """Test that group_id forces studies into one group."""
    study_set = StudyLoader("tests/data/labelled_studies.csv").study_set
    grouper = StudyGrouper(study_set)
    clusters = grouper.clusters()
    assert [len(members) for members in clusters] == [2, 2, 1]
    grouped = grouper.group()
    assert grouped.p == 3
    assert grouped.group_variances[0] == pytest.approx(1.0000001, rel=1e-9)
    assert grouped.within_variances[0] == pytest.approx(0.08)


def test_group_single_study_is_invalid() -> None:
    """Test that one study cannot be grouped."""
    with pytest.raises(InvalidInputError):
        group(StudySet((Study(0.0, 1.0),)))
