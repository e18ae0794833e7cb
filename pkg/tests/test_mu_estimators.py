"""Copyright (c) 2023, Aydin Abdi.

Unit tests for mu_estimators.py module.
"""

import math

import numpy as np
import pytest

from meta_risk_insights.canonical import (
    canonical_design,
    transform,
    weighted_mean_decomposition,
)
from meta_risk_insights.data_classes import (
    CanonicalForm,
    Design,
    GenerativeConfig,
    GroupedData,
    PriorSpec,
    QuadraticFormSpec,
    StudySet,
)
from meta_risk_insights.exceptions import InvalidForNError, InvalidInputError
from meta_risk_insights.grouping import group
from meta_risk_insights.mu_estimators import (
    BayesRule,
    Delta0Rule,
    Delta1Rule,
    GraybillDealRule,
    ModifiedHedgesRule,
    PluginRule,
    SampleMeanRule,
    SteinRule,
    bayes_estimator,
    estimate_mu,
    omega_weights,
    rule_from_name,
    stein_weights,
)
from meta_risk_insights.numerics import rng_stream
from meta_risk_insights.risk import draw_canonical, finite_difference_divergence
from meta_risk_insights.simulation import group_statistics, simulate_effects
from meta_risk_insights.study_loader import StudyLoader
from meta_risk_insights.tau_estimators import FixedTau, dersimonian_laird

SMOOTH_RULES = ["dl", "hedges", "mp", "reml", "mh", "delta1", "delta0", "bayes"]


@pytest.fixture
def study_set() -> StudySet:
    """Returns the six-study example."""
    return StudyLoader("tests/data/six_studies.csv").study_set


@pytest.fixture
def canonical_form(study_set: StudySet) -> CanonicalForm:
    """Returns the canonical form of the six-study example."""
    return transform(group(study_set))


@pytest.fixture
def heterogeneous() -> CanonicalForm:
    """Returns a canonical form whose weights are away from their clamps."""
    grouped = GroupedData(
        (1.0, 2.25, 4.0), (3, 2, 1), (0.0, 3.0, -4.0), (2.5, 3.0, 0.0)
    )
    return transform(grouped)


def test_sample_mean(canonical_form: CanonicalForm) -> None:
    """Test that zero weights give the sample mean."""
    estimate = estimate_mu(canonical_form, SampleMeanRule())
    assert estimate.value == pytest.approx(canonical_form.grand_mean)
    assert np.allclose(estimate.weights_omega, np.array([3, 2, 1]) / 6.0)
    assert estimate.induced_tau2 == math.inf


def test_graybill_deal(canonical_form: CanonicalForm) -> None:
    """Test that the Graybill-Deal rule gives the inverse-variance mean."""
    estimate = estimate_mu(canonical_form, GraybillDealRule())
    expected = weighted_mean_decomposition(canonical_form, 0.0).direct
    assert estimate.value == pytest.approx(expected, rel=1e-12)
    assert estimate.tau_estimate.value == 0.0


def test_plugin_matches_weighted_mean(heterogeneous: CanonicalForm) -> None:
    """Test that a plug-in rule is the weighted mean at the estimated tau2."""
    estimate = estimate_mu(heterogeneous, rule_from_name("dl"))
    tau2 = dersimonian_laird(heterogeneous).value
    expected = weighted_mean_decomposition(heterogeneous, tau2).direct
    assert estimate.value == pytest.approx(expected, rel=1e-12)
    assert estimate.tau_estimate.value == pytest.approx(tau2)


@pytest.mark.parametrize("name", ["mean", "gd", "dl", "reml", "mh", "delta1", "bayes"])
def test_omega_weights_reproduce_estimate(
    heterogeneous: CanonicalForm, name: str
) -> None:
    """Test that the group weights sum to one and reproduce delta."""
    estimate = estimate_mu(heterogeneous, rule_from_name(name))
    omega = np.array(estimate.weights_omega)
    assert omega.sum() == pytest.approx(1.0)
    assert np.dot(omega, heterogeneous.means) == pytest.approx(estimate.value)


@pytest.mark.parametrize("name", SMOOTH_RULES + ["mean", "gd"])
def test_weights_are_clamped(heterogeneous: CanonicalForm, name: str) -> None:
    """Test 0 <= w_j <= t_j^-2."""
    w = np.array(estimate_mu(heterogeneous, rule_from_name(name)).weights_w)
    assert np.all(w >= 0)
    assert np.all(w <= 1.0 / heterogeneous.t2 + 1e-15)


def test_delta1_weights(heterogeneous: CanonicalForm) -> None:
    """Test w_j = min((n - 3) / q-infinity, t_j^-2)."""
    w = np.array(estimate_mu(heterogeneous, Delta1Rule()).weights_w)
    expected = np.minimum(3.0 / heterogeneous.q_infinity, 1.0 / heterogeneous.t2)
    assert np.allclose(w, expected)


def test_delta0_weights(heterogeneous: CanonicalForm) -> None:
    """Test w_j = min((n - 1) / q0, 1) t_j^-2."""
    w = np.array(estimate_mu(heterogeneous, Delta0Rule()).weights_w)
    expected = min(5.0 / heterogeneous.q_zero, 1.0) / heterogeneous.t2
    assert np.allclose(w, expected)


def test_stein_form_dl_is_delta0(heterogeneous: CanonicalForm) -> None:
    """Test that the dl form with alpha = n - 1 reproduces delta0."""
    stein = estimate_mu(heterogeneous, rule_from_name("stein:form=dl,alpha=5"))
    assert stein.value == pytest.approx(estimate_mu(heterogeneous, Delta0Rule()).value)


def test_stein_weights_function(heterogeneous: CanonicalForm) -> None:
    """Test stein_weights against the rule."""
    spec = QuadraticFormSpec((1.0, 2.0), (1.0, 0.5, 1.0))
    w = stein_weights(heterogeneous, spec, 2.0)
    rule = SteinRule(spec, 2.0)
    assert np.allclose(w, estimate_mu(heterogeneous, rule).weights_w)


def test_stein_zero_form_takes_clamp() -> None:
    """Test that a vanishing quadratic form gives w_j = t_j^-2."""
    grouped = GroupedData((1.0, 2.0, 4.0), (2, 1, 1), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    cf = transform(grouped)
    estimate = estimate_mu(cf, Delta1Rule())
    assert np.allclose(estimate.weights_w, 1.0 / cf.t2)
    assert estimate.value == 0.0


def test_stein_rule_validation() -> None:
    """Test the alpha and form checks."""
    with pytest.raises(InvalidInputError):
        SteinRule(alpha=-1.0)
    with pytest.raises(InvalidInputError):
        SteinRule(form="cubic")


def test_bayes_point_prior_is_plugin(heterogeneous: CanonicalForm) -> None:
    """Test that a point-mass prior reproduces the fixed plug-in rule."""
    bayes = bayes_estimator(heterogeneous, PriorSpec.point_mass(0.8))
    plugin = estimate_mu(heterogeneous, PluginRule(FixedTau(0.8)))
    assert bayes.value == pytest.approx(plugin.value, rel=1e-12)
    assert bayes.tau_estimate is None
    assert bayes.induced_tau2 is not None


def test_bayes_moments(heterogeneous: CanonicalForm) -> None:
    """Test that the posterior moments satisfy E h^2 >= (E h)^2."""
    rule = BayesRule()
    first, second = rule.posterior_moments(
        heterogeneous.canonical, heterogeneous.y[None, :], heterogeneous.u2[None, :]
    )
    assert np.all(second >= first**2 - 1e-15)
    assert np.all(first <= 1.0 / heterogeneous.t2)


@pytest.mark.parametrize("name", SMOOTH_RULES)
def test_divergence_matches_finite_differences(
    heterogeneous: CanonicalForm, name: str
) -> None:
    """Test the analytic divergence away from the clamp kinks."""
    rule = rule_from_name(name)
    design = heterogeneous.canonical
    y, u2 = heterogeneous.y[None, :], heterogeneous.u2[None, :]
    analytic = rule.divergence(design, y, u2)
    numeric = finite_difference_divergence(design, y, u2, rule)
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-7)


@pytest.mark.parametrize("name", ["dl", "mh", "delta1", "delta0", "bayes"])
def test_location_equivariance(study_set: StudySet, name: str) -> None:
    """Test that shifting every effect shifts the estimate."""
    rule = rule_from_name(name)
    base = estimate_mu(transform(group(study_set)), rule).value
    shifted = estimate_mu(transform(group(study_set.shifted(4.0))), rule).value
    assert shifted == pytest.approx(base + 4.0, rel=1e-10)


@pytest.mark.parametrize("name", ["dl", "mh", "delta1"])
def test_scale_equivariance(study_set: StudySet, name: str) -> None:
    """Test that scaling effects and errors scales the estimate."""
    rule = rule_from_name(name)
    base = estimate_mu(transform(group(study_set)), rule).value
    scaled = estimate_mu(transform(group(study_set.scaled(2.5))), rule).value
    assert scaled == pytest.approx(2.5 * base, rel=1e-9)


def test_single_group_gives_sample_mean() -> None:
    """Test that one distinct variance falls back to the sample mean."""
    grouped = group(StudyLoader("tests/data/equal_variances.csv").study_set)
    estimate = estimate_mu(grouped, Delta1Rule())
    assert estimate.single_group
    assert estimate.rule == "mean"
    assert estimate.value == pytest.approx(0.4)


def test_shrinkage_rules_need_four_studies() -> None:
    """Test that shrinkage rules refuse n <= 3."""
    cf = transform(group(StudyLoader("tests/data/two_studies.csv").study_set))
    for rule in (Delta1Rule(), Delta0Rule(), ModifiedHedgesRule()):
        with pytest.raises(InvalidForNError):
            estimate_mu(cf, rule)
    assert estimate_mu(cf, rule_from_name("dl")).value is not None


def test_omega_weights_of_zero_vector(canonical_form: CanonicalForm) -> None:
    """Test that zero weights give nu_i / n."""
    omega = omega_weights(canonical_form.canonical, np.zeros(2))
    assert np.allclose(omega, [0.5, 1.0 / 3.0, 1.0 / 6.0])


def test_rule_from_name() -> None:
    """Test name parsing of the rules."""
    assert isinstance(rule_from_name("mean"), SampleMeanRule)
    assert isinstance(rule_from_name("GD"), GraybillDealRule)
    assert isinstance(rule_from_name("reml"), PluginRule)
    assert rule_from_name("fixed:0.3").name == "fixed:0.3"
    stein = rule_from_name("stein:q=1:1,r=1:1:1,alpha=2")
    assert isinstance(stein, SteinRule)
    assert stein.alpha == 2.0
    assert rule_from_name("stein:form=inverse-b").form == "inverse-b"
    point = rule_from_name("bayes:point=0.5")
    assert isinstance(point, BayesRule)
    assert point.prior.nodes == (0.5,)
    assert len(rule_from_name("bayes:log=0.01:10:20").prior.nodes) == 21
    assert rule_from_name("bayes").prior is None


@pytest.mark.parametrize(
    "name", ["unknown", "stein:q=1:1", "stein:form=cubic", "bayes:bogus", "stein:alpha"]
)
def test_rule_from_name_rejects(name: str) -> None:
    """Test that malformed rule names raise InvalidInputError."""
    with pytest.raises(InvalidInputError):
        rule_from_name(name)


@pytest.fixture
def simulated() -> tuple:
    """Returns a design and 20000 simulated group means and variances with mu = 2.5."""
    design = Design((1.0, 2.0, 4.0), (3, 2, 2))
    config = GenerativeConfig(
        mu=2.5,
        tau2=0.8,
        group_variances=design.group_variances,
        multiplicities=design.multiplicities,
        seed=23,
    )
    means, u2 = group_statistics(design, simulate_effects(config, 20_000))
    return design, means, u2


@pytest.mark.parametrize("name", SMOOTH_RULES + ["mean", "gd"])
def test_rules_are_unbiased(simulated: tuple, name: str) -> None:
    """Test that the mean of delta over simulated data sets equals mu."""
    design, means, u2 = simulated
    cd = canonical_design(design)
    y = means @ cd.a / cd.sqrt_b
    w = rule_from_name(name).weights(cd, y, u2)
    delta = means @ cd.nu / cd.n - (w * y) @ cd.sqrt_b
    std_error = delta.std(ddof=1) / math.sqrt(delta.size)
    assert abs(delta.mean() - 2.5) <= 4.0 * std_error


@pytest.fixture
def bayes_draws() -> tuple:
    """Returns a four-group canonical design with 300 draws at tau2 = 1."""
    cd = canonical_design(Design((0.5, 1.0, 2.0, 4.0), (2, 1, 3, 2)))
    y, u2 = draw_canonical(cd, 1.0, 300, rng_stream(41))
    return cd, y, u2


def test_bayes_weights_stay_in_range(bayes_draws: tuple) -> None:
    """Test 0 <= w_j <= t_j^-2 and w_j > w_l for t_j^2 < t_l^2 without clamping."""
    cd, y, u2 = bayes_draws
    raw = BayesRule().raw_weights(cd, y, u2)
    assert np.all(raw >= 0)
    assert np.all(raw <= (1.0 + 1e-12) / cd.t2)
    assert np.all(np.diff(raw, axis=1) < 0)


def test_bayes_weights_decrease_in_y(bayes_draws: tuple) -> None:
    """Test that inflating any y_l^2 lowers every posterior weight."""
    cd, y, u2 = bayes_draws
    rule = BayesRule()
    w = rule.weights(cd, y, u2)
    for column in range(cd.p - 1):
        inflated = y.copy()
        inflated[:, column] *= 1.5
        assert np.all(rule.weights(cd, inflated, u2) <= w + 1e-15)
    assert np.all(rule.weights(cd, 2.0 * y, u2) <= w + 1e-15)


def test_bayes_two_point_prior_mixes_plugins(bayes_draws: tuple) -> None:
    """Test that a two-point prior gives one convex mix of the two plug-in weights."""
    cd, y, u2 = bayes_draws
    w = BayesRule(PriorSpec((0.2, 3.0), (1.0, 1.0))).weights(cd, y, u2)
    low, high = 1.0 / (0.2 + cd.t2), 1.0 / (3.0 + cd.t2)
    mix = (w - high) / (low - high)
    assert np.all((mix >= -1e-12) & (mix <= 1.0 + 1e-12))
    assert np.allclose(mix, mix[:, :1], atol=1e-10)
