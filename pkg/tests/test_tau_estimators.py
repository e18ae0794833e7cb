"""Copyright (c) 2023, Aydin Abdi.

Unit tests for tau_estimators.py module.
"""

import math

import numpy as np
import pytest

from meta_risk_insights.canonical import canonical_design, transform
from meta_risk_insights.data_classes import (
    CanonicalForm,
    Design,
    GroupedData,
    QuadraticFormSpec,
    Study,
    StudySet,
)
from meta_risk_insights.exceptions import InvalidForNError, InvalidInputError
from meta_risk_insights.grouping import group
from meta_risk_insights.numerics import rng_stream
from meta_risk_insights.risk import draw_canonical
from meta_risk_insights.study_loader import StudyLoader
from meta_risk_insights.tau_estimators import (
    DerSimonianLairdTau,
    FixedTau,
    HedgesTau,
    MandelPauleTau,
    ModifiedHedgesTau,
    MomentTau,
    RemlTau,
    _mp_lhs,
    dersimonian_laird,
    dersimonian_laird_from_studies,
    hedges,
    hedges_from_studies,
    i_squared,
    i_squared_from_studies,
    mandel_paule,
    mandel_paule_closed_form_p3,
    modified_hedges,
    moment_estimator,
    reml,
    reml_score,
    restricted_loglik,
    restricted_loglik_x_form,
    tau_from_weights,
    tau_method_from_name,
)


@pytest.fixture
def study_set() -> StudySet:
    """Returns the six-study example."""
    return StudyLoader("tests/data/six_studies.csv").study_set


@pytest.fixture
def heterogeneous() -> CanonicalForm:
    """Returns a canonical form with a clearly positive tau2."""
    grouped = GroupedData(
        (1.0, 2.25, 4.0), (3, 2, 1), (0.0, 3.0, -4.0), (2.5, 3.0, 0.0)
    )
    return transform(grouped)


def test_dersimonian_laird_matches_study_formula(study_set: StudySet) -> None:
    """Test the canonical DL estimate against Cochran's Q."""
    cf = transform(group(study_set))
    canonical = dersimonian_laird(cf)
    direct = dersimonian_laird_from_studies(study_set)
    assert canonical.raw_value == pytest.approx(direct.raw_value, rel=1e-9, abs=1e-12)
    assert canonical.value == pytest.approx(direct.value, abs=1e-12)


def test_hedges_matches_study_formula(study_set: StudySet) -> None:
    """Test the canonical Hedges estimate against the sample variance formula."""
    cf = transform(group(study_set))
    assert hedges(cf).raw_value == pytest.approx(
        hedges_from_studies(study_set).raw_value, rel=1e-9, abs=1e-12
    )


def test_i_squared_matches_study_formula(study_set: StudySet) -> None:
    """Test I^2 from q0 against Cochran's Q."""
    cf = transform(group(study_set))
    assert i_squared(cf) == pytest.approx(i_squared_from_studies(study_set), abs=1e-12)


def test_moment_estimator_with_equal_form(heterogeneous: CanonicalForm) -> None:
    """Test that the equal form reproduces Hedges."""
    spec = QuadraticFormSpec.equal(heterogeneous.p)
    assert moment_estimator(heterogeneous, spec).raw_value == pytest.approx(
        hedges(heterogeneous).raw_value
    )


def test_mandel_paule_solves_equation(heterogeneous: CanonicalForm) -> None:
    """Test that the Mandel-Paule estimate solves its equation."""
    estimate = mandel_paule(heterogeneous)
    assert estimate.value > 0
    h = 1.0 / (estimate.value + heterogeneous.t2)
    r = 1.0 / (estimate.value + heterogeneous.canonical.s2)
    lhs = np.sum(heterogeneous.y**2 * h) + np.sum(
        heterogeneous.canonical.within_dof * heterogeneous.u2 * r
    )
    assert lhs == pytest.approx(heterogeneous.n - 1, rel=1e-9)


def test_mandel_paule_newton_matches_brent(heterogeneous: CanonicalForm) -> None:
    """Test the vectorized Newton iteration against the bracketed solver."""
    method = MandelPauleTau()
    newton = method.values(
        heterogeneous.canonical, heterogeneous.y[None, :], heterogeneous.u2[None, :]
    )
    assert newton[0] == pytest.approx(method.estimate(heterogeneous).value, rel=1e-9)


def test_mandel_paule_closed_form_p3() -> None:
    """Test the quadratic formula for three distinct variances."""
    study_set = StudySet((Study(0.0, 1.0), Study(3.0, 1.5), Study(-2.0, 2.0)))
    cf = transform(group(study_set))
    closed = mandel_paule_closed_form_p3(cf)
    assert closed > 0
    assert mandel_paule(cf).value == pytest.approx(closed, rel=1e-8)


def test_mandel_paule_zero_when_homogeneous() -> None:
    """Test the zero estimate when the data show no heterogeneity."""
    study_set = StudySet((Study(0.0, 1.0), Study(0.1, 1.5), Study(-0.1, 2.0)))
    cf = transform(group(study_set))
    assert mandel_paule(cf).value == 0.0
    assert mandel_paule_closed_form_p3(cf) == 0.0


def test_reml_solves_score(heterogeneous: CanonicalForm) -> None:
    """Test that the REML estimate zeroes the restricted score."""
    estimate = reml(heterogeneous)
    assert estimate.value > 0
    assert estimate.iterations > 0
    assert reml_score(heterogeneous, estimate.value) == pytest.approx(0.0, abs=1e-8)


def test_reml_start_does_not_matter(heterogeneous: CanonicalForm) -> None:
    """Test that REML converges to the same value from another start."""
    first = reml(heterogeneous)
    second = reml(heterogeneous, start=mandel_paule(heterogeneous))
    assert first.value == pytest.approx(second.value, rel=1e-7)


@pytest.mark.parametrize("tau2", [0.0, 0.5, 3.0, 40.0])
def test_restricted_loglik_forms_agree(
    heterogeneous: CanonicalForm, tau2: float
) -> None:
    """Test that the y-form and the x-form of the restricted likelihood coincide."""
    y_form = restricted_loglik(heterogeneous, tau2)
    x_form = restricted_loglik_x_form(heterogeneous, tau2)
    assert abs(y_form - x_form) <= 1e-10 * max(1.0, abs(y_form))


def test_restricted_loglik_differences_ignore_shifts(study_set: StudySet) -> None:
    """Test that L(tau2) - L(tau2') does not change when every effect is shifted."""
    base = transform(group(study_set))
    shifted = transform(group(study_set.shifted(7.0)))
    for cf in (base, shifted):
        assert restricted_loglik(cf, 0.3) == pytest.approx(
            restricted_loglik_x_form(cf, 0.3), rel=1e-10
        )
    base_gap = restricted_loglik(base, 2.0) - restricted_loglik(base, 0.3)
    shifted_gap = restricted_loglik(shifted, 2.0) - restricted_loglik(shifted, 0.3)
    assert shifted_gap == pytest.approx(base_gap, abs=1e-10)


def test_modified_hedges_needs_four_studies() -> None:
    """Test that modified Hedges refuses n <= 3."""
    study_set = StudySet((Study(0.0, 1.0), Study(3.0, 1.5), Study(-2.0, 2.0)))
    with pytest.raises(InvalidForNError):
        modified_hedges(transform(group(study_set)))


def test_modified_hedges_formula(heterogeneous: CanonicalForm) -> None:
    """Test the modified Hedges estimate against its definition."""
    design = heterogeneous.canonical
    within = np.dot(design.within_dof, design.s2)
    excess = heterogeneous.q_infinity - design.t2.sum() - within
    assert modified_hedges(heterogeneous).raw_value == pytest.approx(excess / 3.0)


def test_two_studies_share_one_estimate() -> None:
    """Test that every estimator equals max(0, y^2 - t^2) for two studies."""
    cf = transform(group(StudyLoader("tests/data/two_studies.csv").study_set))
    for method in (DerSimonianLairdTau(), HedgesTau(), MandelPauleTau(), RemlTau()):
        assert method.estimate(cf).value == pytest.approx(0.625), method.name
    assert dersimonian_laird_from_studies(
        StudyLoader("tests/data/two_studies.csv").study_set
    ).value == pytest.approx(0.625)


@pytest.mark.parametrize("name", ["dl", "hedges", "mp", "reml", "mh"])
def test_gradient_matches_finite_differences(
    heterogeneous: CanonicalForm, name: str
) -> None:
    """Test the analytic gradients of the estimators."""
    method = tau_method_from_name(name)
    design = heterogeneous.canonical
    y, u2 = heterogeneous.y[None, :], heterogeneous.u2[None, :]
    gradient = method.gradient(design, y, u2)[0]
    step = 1e-4
    for j in range(design.p - 1):
        plus, minus = y.copy(), y.copy()
        plus[0, j] += step
        minus[0, j] -= step
        numeric = (
            method.values(design, plus, u2)[0] - method.values(design, minus, u2)[0]
        ) / (2.0 * step)
        assert gradient[j] == pytest.approx(numeric, rel=1e-3, abs=1e-6)


def test_fixed_tau() -> None:
    """Test the fixed estimator and its validation."""
    method = tau_method_from_name("fixed:0.5")
    assert isinstance(method, FixedTau)
    assert method.value == 0.5
    with pytest.raises(InvalidInputError):
        FixedTau(-1.0)


def test_tau_method_from_name() -> None:
    """Test name parsing of the estimators."""
    assert isinstance(tau_method_from_name("DL"), DerSimonianLairdTau)
    assert isinstance(tau_method_from_name("mh"), ModifiedHedgesTau)
    moment = tau_method_from_name("moment:q=1:1,r=1:1:1")
    assert moment.name == "moment:q=1:1,r=1:1:1"
    with pytest.raises(InvalidInputError):
        tau_method_from_name("bogus")
    with pytest.raises(InvalidInputError):
        tau_method_from_name("moment:q=1")


def test_tau_from_weights(heterogeneous: CanonicalForm) -> None:
    """Test the tau2 induced by weights."""
    assert tau_from_weights(heterogeneous, np.zeros(2)) == math.inf
    tau2 = reml(heterogeneous).value
    weights = 1.0 / (tau2 + heterogeneous.t2)
    assert tau_from_weights(heterogeneous, weights) >= 0.0


@pytest.fixture
def spread_studies() -> StudySet:
    """Returns seven studies whose effects spread far beyond their errors."""
    effects = (0.0, -1.2, 2.5, 3.1, -4.0, 1.0, 5.0)
    std_errors = (1.0, 1.0, 1.5, 1.5, 2.0, 0.8, 1.2)
    return StudySet(tuple(Study(x, s) for x, s in zip(effects, std_errors)))


def _balanced(scale: float) -> CanonicalForm:
    """Returns a canonical form with y_j^2 = scale t_j^2 and u_i^2 = scale s_i^2."""
    grouped = GroupedData(
        (1.0, 2.25, 4.0), (3, 2, 1), (0.0, 0.0, 0.0), (scale, scale * 2.25, 0.0)
    )
    cd = transform(grouped).canonical
    return CanonicalForm(grouped=grouped, canonical=cd, y=np.sqrt(scale * cd.t2))


def test_moment_estimator_with_dersimonian_laird_form(
    heterogeneous: CanonicalForm, study_set: StudySet
) -> None:
    """Test that q_j = t_j^-2 and r_i = s_i^-2 reproduce DerSimonian-Laird."""
    for cf in (heterogeneous, transform(group(study_set))):
        spec = QuadraticFormSpec.dersimonian_laird(cf.canonical)
        assert MomentTau(spec).estimate(cf).raw_value == pytest.approx(
            dersimonian_laird(cf).raw_value, rel=1e-12, abs=1e-14
        )


@pytest.mark.parametrize("tau2", [0.5, 2.0, 10.0])
def test_moment_estimator_is_unbiased(tau2: float) -> None:
    """Test E[raw tau2] = tau2 for random positive quadratic forms."""
    cd = canonical_design(Design((0.5, 1.0, 2.0, 4.0), (2, 1, 3, 2)))
    samples = 100_000
    y, u2 = draw_canonical(cd, tau2, samples, rng_stream(31))
    rng = np.random.default_rng(5)
    for _ in range(5):
        spec = QuadraticFormSpec(
            tuple(rng.uniform(0.2, 5.0, cd.p - 1)), tuple(rng.uniform(0.2, 5.0, cd.p))
        )
        raw = MomentTau(spec).raw_values(cd, y, u2)
        std_error = raw.std(ddof=1) / math.sqrt(samples)
        assert abs(raw.mean() - tau2) <= 4.0 * std_error, spec


def test_mandel_paule_closed_form_on_random_datasets() -> None:
    """Test the three-study closed form on 100 random heterogeneous datasets."""
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        variances = rng.uniform(0.2, 5.0, 3)
        effects = rng.normal(0.0, 3.0, 3)
        study_set = StudySet(
            tuple(Study(x, math.sqrt(v)) for x, v in zip(effects, variances))
        )
        cf = transform(group(study_set))
        if np.sum(cf.y**2 / cf.t2) < 2:
            continue
        closed = mandel_paule_closed_form_p3(cf)
        assert mandel_paule(cf).value == pytest.approx(closed, rel=1e-10, abs=1e-12)
        checked += 1
        if checked == 100:
            break
    assert checked == 100


def test_mandel_paule_lhs_is_decreasing() -> None:
    """Test that the Mandel-Paule left-hand side falls strictly in tau2."""
    cd = canonical_design(Design((0.5, 1.0, 2.0, 4.0), (2, 1, 3, 2)))
    y, u2 = draw_canonical(cd, 1.0, 50, rng_stream(8))
    grid = np.concatenate(([0.0], np.geomspace(1e-3, 1e3, 60)))
    values, slopes = zip(
        *(_mp_lhs(cd, y**2, u2, np.full(y.shape[0], tau2)) for tau2 in grid)
    )
    assert np.all(np.diff(np.array(values), axis=0) < 0)
    assert np.all(np.array(slopes) < 0)


@pytest.mark.parametrize("name", ["dl", "hedges", "mp", "reml", "mh"])
def test_location_and_scale(spread_studies: StudySet, name: str) -> None:
    """Test that shifts leave tau2 alone and scaling by c multiplies it by c^2."""
    method = tau_method_from_name(name)
    base = method.estimate(transform(group(spread_studies))).value
    shifted = method.estimate(transform(group(spread_studies.shifted(-6.5)))).value
    scaled = method.estimate(transform(group(spread_studies.scaled(3.0)))).value
    assert base > 0
    assert shifted == pytest.approx(base, rel=1e-8)
    assert scaled == pytest.approx(9.0 * base, rel=1e-8)


def test_i_squared_examples() -> None:
    """Test I^2 = 1/2 for T = 2 (n - 1) and 0 for T = n - 1."""
    doubled = _balanced(2.0)
    assert doubled.q_zero == pytest.approx(2.0 * (doubled.n - 1))
    assert i_squared(doubled) == pytest.approx(0.5)
    assert i_squared(_balanced(1.0)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["dl", "hedges", "mp", "reml", "mh"])
def test_balanced_data_give_zero(name: str) -> None:
    """Test that y^2 = t^2 and u^2 = s^2 balance every estimating equation."""
    estimate = tau_method_from_name(name).estimate(_balanced(1.0))
    assert estimate.raw_value == pytest.approx(0.0, abs=1e-9)
    assert estimate.value == pytest.approx(0.0, abs=1e-9)


def test_reml_iterations_live_on_the_estimate(heterogeneous: CanonicalForm) -> None:
    """Test that REML keeps no per-call state and reports iterations on the result."""
    method = RemlTau()
    state = dict(vars(method))
    method.values(
        heterogeneous.canonical, heterogeneous.y[None, :], heterogeneous.u2[None, :]
    )
    estimate = method.estimate(heterogeneous)
    assert vars(method) == state
    assert estimate.iterations > 0
