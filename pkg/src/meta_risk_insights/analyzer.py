"""Copyright (c) 2023, Aydin Abdi.

MetaAnalyzer runs the tau2 estimators and the estimators of mu on one set of
studies and collects the results in a JSON-ready summary.
"""

from typing import Dict, List, Optional, Sequence  # noqa: F401

from loguru import logger

from meta_risk_insights.canonical import identity_residuals, transform
from meta_risk_insights.data_classes import (
    CanonicalForm,
    GroupedData,
    MuEstimate,
    StudySet,
    TauEstimate,
)
from meta_risk_insights.exceptions import InvalidForNError
from meta_risk_insights.grouping import group
from meta_risk_insights.mu_estimators import estimate_mu, rule_from_name
from meta_risk_insights.tau_estimators import i_squared, tau_method_from_name

DEFAULT_TAU_METHODS = ("dl", "hedges", "mp", "reml")
DEFAULT_MU_RULES = (
    "mean",
    "gd",
    "dl",
    "hedges",
    "mp",
    "reml",
    "mh",
    "delta1",
    "delta0",
    "bayes",
)


class MetaAnalyzer:
    """Analyzes one set of studies with several estimators.

    Example:
        - grouped summary of the distinct variances
        - tau2 estimates per method
        - mu estimates per rule with their weights
        - I^2 and the residuals of the canonical identities
    """

    def __init__(
        self,
        study_set: StudySet,
        tau_methods: Sequence[str] = DEFAULT_TAU_METHODS,
        mu_rules: Sequence[str] = DEFAULT_MU_RULES,
    ) -> None:
        """Initialize the MetaAnalyzer.

        Args:
            study_set: The studies to analyze.
            tau_methods: Names of the tau2 estimators.
            mu_rules: Names of the weight rules.
        """
        self.study_set = study_set
        self.tau_methods = tuple(tau_methods)
        self.mu_rules = tuple(mu_rules)
        self._grouped = None  # type: Optional[GroupedData]
        self._canonical_form = None  # type: Optional[CanonicalForm]
        self._tau_estimates = {}  # type: Dict[str, TauEstimate]
        self._mu_estimates = {}  # type: Dict[str, MuEstimate]

    @property
    def grouped(self) -> GroupedData:
        """Return the studies grouped by variance."""
        if self._grouped is None:
            self._grouped = group(self.study_set)
        return self._grouped

    @property
    def single_group(self) -> bool:
        """Return True when every study reports the same variance."""
        return self.grouped.p == 1

    @property
    def canonical_form(self) -> CanonicalForm:
        """Return the canonical form; needs two distinct variances."""
        if self._canonical_form is None:
            self._canonical_form = transform(self.grouped)
        return self._canonical_form

    @property
    def tau_estimates(self) -> Dict[str, TauEstimate]:
        """Return the tau2 estimates by method name."""
        if not self._tau_estimates and not self.single_group:
            for name in self.tau_methods:
                self._tau_estimates[name] = tau_method_from_name(name).estimate(
                    self.canonical_form
                )
                logger.info(f"tau2 ({name}) = {self._tau_estimates[name].value}")
        return self._tau_estimates

    @property
    def mu_estimates(self) -> Dict[str, MuEstimate]:
        """Return the mu estimates by rule name.

        Rules undefined for the number of studies are skipped with a warning.
        """
        if not self._mu_estimates:
            if self.single_group:
                self._mu_estimates["mean"] = estimate_mu(
                    self.grouped, rule_from_name("mean")
                )
                return self._mu_estimates
            for name in self.mu_rules:
                try:
                    estimate = estimate_mu(self.canonical_form, rule_from_name(name))
                except InvalidForNError as error:
                    logger.warning(f"Skipping rule {name}: {error}")
                    continue
                self._mu_estimates[name] = estimate
                logger.info(f"mu ({name}) = {estimate.value}")
        return self._mu_estimates

    def summary(self) -> Dict[str, object]:
        """Return the analysis as a JSON-ready dictionary."""
        grouped = self.grouped
        summary = {
            "n": grouped.n,
            "p": grouped.p,
            "groups": [
                {
                    "variance": variance,
                    "multiplicity": multiplicity,
                    "mean": mean,
                    "within_variance": within,
                }
                for variance, multiplicity, mean, within in zip(
                    grouped.group_variances,
                    grouped.multiplicities,
                    grouped.group_means,
                    grouped.within_variances,
                )
            ],
            "sample_mean": grouped.grand_mean,
            "single_group": self.single_group,
        }  # type: Dict[str, object]
        if not self.single_group:
            cf = self.canonical_form
            summary["t2"] = cf.t2.tolist()
            summary["b"] = cf.b.tolist()
            summary["y"] = cf.y.tolist()
            summary["i_squared"] = i_squared(cf)
            summary["residuals"] = identity_residuals(cf)
            summary["tau2"] = {
                name: {
                    "value": estimate.value,
                    "raw_value": estimate.raw_value,
                    "iterations": estimate.iterations,
                }
                for name, estimate in self.tau_estimates.items()
            }
        summary["mu"] = {
            name: _mu_entry(estimate) for name, estimate in self.mu_estimates.items()
        }
        return summary


def _mu_entry(estimate: MuEstimate) -> Dict[str, object]:
    entry = {
        "mu": estimate.value,
        "weights_w": list(estimate.weights_w),
        "weights_omega": list(estimate.weights_omega),
    }  # type: Dict[str, object]
    if estimate.tau_estimate is not None:
        entry["tau2"] = estimate.tau_estimate.value
    elif estimate.induced_tau2 is not None:
        entry["induced_tau2"] = estimate.induced_tau2
    return entry


def analyze(
    study_set: StudySet, tau_method: Optional[str] = None, mu_rule: Optional[str] = None
) -> Dict[str, object]:
    """Return the summary of ``study_set`` for one or all estimators."""
    tau_methods = (tau_method,) if tau_method else DEFAULT_TAU_METHODS
    mu_rules = (mu_rule,) if mu_rule else DEFAULT_MU_RULES
    return MetaAnalyzer(study_set, tau_methods, mu_rules).summary()
