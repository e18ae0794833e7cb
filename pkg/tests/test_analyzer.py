"""Copyright (c) 2023, Aydin Abdi.

Unit tests for analyzer.py module.
"""

import pytest

from meta_risk_insights.analyzer import (
    DEFAULT_MU_RULES,
    DEFAULT_TAU_METHODS,
    MetaAnalyzer,
    analyze,
)
from meta_risk_insights.data_classes import StudySet
from meta_risk_insights.study_loader import StudyLoader


@pytest.fixture
def study_set() -> StudySet:
    """Returns the six-study example."""
    return StudyLoader("tests/data/six_studies.csv").study_set


@pytest.fixture
def analyzer(study_set: StudySet) -> MetaAnalyzer:
    """Returns a MetaAnalyzer on the six-study example."""
    return MetaAnalyzer(study_set)


def test_grouped(analyzer: MetaAnalyzer) -> None:
    """Test the grouping of the six-study example."""
    assert analyzer.grouped.p == 3
    assert analyzer.grouped.multiplicities == (3, 2, 1)
    assert not analyzer.single_group


def test_tau_estimates(analyzer: MetaAnalyzer) -> None:
    """Test that every default tau2 method is estimated."""
    assert set(analyzer.tau_estimates) == set(DEFAULT_TAU_METHODS)
    assert all(estimate.value >= 0 for estimate in analyzer.tau_estimates.values())


def test_mu_estimates(analyzer: MetaAnalyzer) -> None:
    """Test that every default rule is estimated."""
    assert set(analyzer.mu_estimates) == set(DEFAULT_MU_RULES)
    assert analyzer.mu_estimates["mean"].value == pytest.approx(1.15)


def test_summary(analyzer: MetaAnalyzer) -> None:
    """Test the keys of the summary."""
    summary = analyzer.summary()
    assert summary["n"] == 6
    assert summary["p"] == 3
    assert summary["sample_mean"] == pytest.approx(1.15)
    assert len(summary["groups"]) == 3
    assert len(summary["t2"]) == 2
    assert len(summary["b"]) == 2
    assert 0.0 <= summary["i_squared"] <= 1.0
    assert all(abs(value) < 1e-6 for value in summary["residuals"].values())
    assert summary["mu"]["dl"]["tau2"] == summary["tau2"]["dl"]["value"]
    assert "induced_tau2" in summary["mu"]["delta1"]
    assert summary["mu"]["mean"]["weights_omega"] == pytest.approx([0.5, 1 / 3, 1 / 6])


def test_single_group() -> None:
    """Test that equal variances only report the sample mean."""
    summary = analyze(StudyLoader("tests/data/equal_variances.csv").study_set)
    assert summary["single_group"]
    assert list(summary["mu"]) == ["mean"]
    assert summary["mu"]["mean"]["mu"] == pytest.approx(0.4)
    assert "tau2" not in summary


def test_two_studies_skip_shrinkage_rules() -> None:
    """Test that rules needing four studies are skipped."""
    summary = analyze(StudyLoader("tests/data/two_studies.csv").study_set)
    assert "delta1" not in summary["mu"]
    assert "delta0" not in summary["mu"]
    assert "mh" not in summary["mu"]
    assert summary["mu"]["dl"]["tau2"] == pytest.approx(0.625)


def test_analyze_one_method(study_set: StudySet) -> None:
    """Test analyze with a single tau2 method and rule."""
    summary = analyze(study_set, "reml", "delta0")
    assert list(summary["tau2"]) == ["reml"]
    assert list(summary["mu"]) == ["delta0"]
