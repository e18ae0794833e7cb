"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for the estimators of the common mean mu. Every
estimator has the form

    delta = x-bar - sum_j sqrt(b_j) w_j y_j

for weights 0 <= w_j <= t_j^-2 produced by a WeightRule from (y, u^2). Rules
work on batches: y has shape (m, p - 1) and u^2 shape (m, p).
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger

from meta_risk_insights.canonical import transform
from meta_risk_insights.data_classes import (
    CanonicalDesign,
    CanonicalForm,
    GroupedData,
    MuEstimate,
    PriorSpec,
    QuadraticFormSpec,
    TauEstimate,
)
from meta_risk_insights.exceptions import InvalidForNError, InvalidInputError
from meta_risk_insights.numerics import posterior_weights
from meta_risk_insights.tau_estimators import (
    FixedTau,
    ModifiedHedgesTau,
    TauMethod,
    tau_from_weights,
    tau_method_from_name,
)

BAYES_GRID_NODES = 400
BAYES_BATCH = 2048
KINK_TOLERANCE = 1e-12
STEIN_FORMS = {
    "equal": lambda design: QuadraticFormSpec.equal(design.p),
    "dl": QuadraticFormSpec.dersimonian_laird,
    "inverse-b": QuadraticFormSpec.inverse_b,
}


class WeightRule:
    """Base class of the weight rules.

    Subclasses implement ``raw_weights`` and ``raw_derivative`` (d w_j / d y_j);
    the base class clamps to [0, t_j^-2] and forms the divergence
    d f_j / d y_j of f_j = y_j w_j.
    """

    name = "rule"
    min_studies = 2

    def check(self, design: CanonicalDesign) -> None:
        """Raise if the rule is undefined for the number of studies."""
        if design.n < self.min_studies:
            raise InvalidForNError(
                f"rule {self.name!r} needs n >= {self.min_studies}, got n = {design.n}"
            )

    def raw_weights(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        raise NotImplementedError

    def raw_derivative(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        raise NotImplementedError

    def weights(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return the clamped weights, shape (m, p - 1)."""
        self.check(design)
        return np.clip(self.raw_weights(design, y, u2), 0.0, 1.0 / design.t2)

    def divergence(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return d f_j / d y_j, f_j = y_j w_j; clamped entries take the clamp side."""
        self.check(design)
        raw = self.raw_weights(design, y, u2)
        upper = 1.0 / design.t2
        with np.errstate(invalid="ignore"):
            free = raw + y * self.raw_derivative(design, y, u2)
        divergence = np.where(raw >= upper, upper, free)
        return np.where(raw <= 0, 0.0, divergence)

    def kinks(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return where the raw weights sit on a clamp boundary."""
        raw = self.raw_weights(design, y, u2)
        upper = 1.0 / design.t2
        return np.isclose(raw, upper, rtol=KINK_TOLERANCE, atol=0.0) | (raw == 0)

    def tau_estimate(self, cf: CanonicalForm) -> Optional[TauEstimate]:
        """Return the plug-in tau2 estimate, if the rule has one."""
        return None


class SampleMeanRule(WeightRule):
    """w = 0, so delta is the sample mean x-bar."""

    name = "mean"

    def raw_weights(self, design, y, u2):  # type: ignore[no-untyped-def]
        return np.zeros_like(y)

    def raw_derivative(self, design, y, u2):  # type: ignore[no-untyped-def]
        return np.zeros_like(y)

    def kinks(self, design, y, u2):  # type: ignore[no-untyped-def]
        return np.zeros(y.shape, dtype=bool)


class PluginRule(WeightRule):
    """w_j = 1 / (tau2-hat + t_j^2) for a tau2 estimator."""

    def __init__(self, tau_method: TauMethod, name: Optional[str] = None) -> None:
        """Initialize the rule.

        Args:
            tau_method: The tau2 estimator plugged into the weights.
            name: Rule name; defaults to the estimator name.
        """
        self.tau_method = tau_method
        self.name = name or tau_method.name

    def raw_weights(self, design, y, u2):  # type: ignore[no-untyped-def]
        tau2 = self.tau_method.values(design, y, u2)
        return 1.0 / (tau2[:, None] + design.t2)

    def raw_derivative(self, design, y, u2):  # type: ignore[no-untyped-def]
        h = self.raw_weights(design, y, u2)
        return -(h**2) * self.tau_method.gradient(design, y, u2)

    def kinks(self, design, y, u2):  # type: ignore[no-untyped-def]
        raw = self.tau_method.raw_values(design, y, u2)
        return np.broadcast_to((raw == 0)[:, None], y.shape)

    def tau_estimate(self, cf: CanonicalForm) -> Optional[TauEstimate]:
        return self.tau_method.estimate(cf)


class GraybillDealRule(PluginRule):
    """The plug-in rule with tau2-hat = 0."""

    def __init__(self) -> None:
        """Initialize the rule."""
        super().__init__(FixedTau(0.0), name="gd")


class ModifiedHedgesRule(PluginRule):
    """The plug-in rule of the modified Hedges estimator."""

    min_studies = 4

    def __init__(self) -> None:
        """Initialize the rule."""
        super().__init__(ModifiedHedgesTau(), name="mh")


class SteinRule(WeightRule):
    """w_j = min(alpha q_j / q, t_j^-2), q = sum q_j y_j^2 + sum (nu_i - 1) r_i u_i^2.

    A vanishing q takes the clamp branch t_j^-2.
    """

    name = "stein"
    min_studies = 4

    def __init__(
        self,
        spec: Optional[QuadraticFormSpec] = None,
        alpha: Optional[float] = None,
        name: Optional[str] = None,
        form: str = "equal",
    ) -> None:
        """Initialize the rule.

        Args:
            spec: The quadratic form; built from ``form`` when omitted.
            alpha: Positive multiplier; n - 3 when omitted.
            name: Rule name.
            form: Design-dependent form used without ``spec``: equal, dl or
                inverse-b.
        """
        if alpha is not None and not (math.isfinite(alpha) and alpha > 0):
            raise InvalidInputError(f"alpha must be positive, got {alpha}")
        if form not in STEIN_FORMS:
            raise InvalidInputError(
                f"unknown quadratic form {form!r}; valid: {', '.join(STEIN_FORMS)}"
            )
        self.spec = spec
        self.form = form
        self.alpha = alpha
        if name:
            self.name = name

    def coefficients(self, design: CanonicalDesign) -> Tuple[np.ndarray, np.ndarray]:
        """Return (q, r) for ``design``."""
        spec = self.spec or STEIN_FORMS[self.form](design)
        spec.check_dimensions(design.p)
        return spec.q_array, spec.r_array

    def multiplier(self, design: CanonicalDesign) -> float:
        """Return alpha for ``design``."""
        return float(design.n - 3) if self.alpha is None else self.alpha

    def quadratic_form(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return q for every row, shape (m,)."""
        q, r = self.coefficients(design)
        return (y**2) @ q + u2 @ (design.within_dof * r)

    def raw_weights(self, design, y, u2):  # type: ignore[no-untyped-def]
        q, _ = self.coefficients(design)
        form = self.quadratic_form(design, y, u2)[:, None]
        with np.errstate(divide="ignore"):
            return np.where(form > 0, self.multiplier(design) * q / form, np.inf)

    def raw_derivative(self, design, y, u2):  # type: ignore[no-untyped-def]
        q, _ = self.coefficients(design)
        form = self.quadratic_form(design, y, u2)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return -2.0 * self.multiplier(design) * q**2 * y / form**2


class Delta1Rule(SteinRule):
    """w_j = min((n - 3) / q-infinity, t_j^-2)."""

    name = "delta1"

    def __init__(self) -> None:
        """Initialize the rule."""
        super().__init__(None, None)


class Delta0Rule(SteinRule):
    """w_j = min((n - 1) / q0, 1) t_j^-2: the Stein rule of q0 with alpha = n - 1."""

    name = "delta0"

    def __init__(self) -> None:
        """Initialize the rule."""
        super().__init__(None, None, form="dl")

    def multiplier(self, design: CanonicalDesign) -> float:
        return float(design.n - 1)


class BayesRule(WeightRule):
    """Generalized Bayes rule: w_j is the posterior mean of 1/(tau2 + t_j^2).

    The posterior of tau2 on the prior nodes is proportional to the prior mass
    times exp(-L(tau2)), L the negative restricted log-likelihood.
    """

    name = "bayes"

    def __init__(
        self, prior: Optional[PriorSpec] = None, name: Optional[str] = None
    ) -> None:
        """Initialize the rule.

        Args:
            prior: Discrete prior on tau2; the least favorable prior
                d tau2 / (tau2 + s^2) on the default grid when omitted.
            name: Rule name.
        """
        self.prior = prior
        if name:
            self.name = name

    def prior_for(self, design: CanonicalDesign) -> PriorSpec:
        """Return the prior used for ``design``."""
        if self.prior is not None:
            return self.prior
        return PriorSpec.least_favorable(design.design.s2_bar, BAYES_GRID_NODES)

    def posterior_moments(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return posterior E[h_j] and E[h_j^2], each of shape (m, p - 1)."""
        prior = self.prior_for(design)
        nodes = prior.node_array
        h = 1.0 / (nodes[:, None] + design.t2)
        r = 1.0 / (nodes[:, None] + design.s2)
        within = design.within_dof
        constant = 0.5 * (np.log(h).sum(axis=1) + (within * np.log(r)).sum(axis=1))
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior.weight_array)
        first = np.empty_like(y, dtype=float)
        second = np.empty_like(y, dtype=float)
        for start in range(0, y.shape[0], BAYES_BATCH):
            rows = slice(start, start + BAYES_BATCH)
            log_likelihood = constant - 0.5 * (
                (y[rows] ** 2) @ h.T + (u2[rows] * within) @ r.T
            )
            posterior = posterior_weights(log_prior, log_likelihood)
            first[rows] = posterior @ h
            second[rows] = posterior @ h**2
        return first, second

    def raw_weights(self, design, y, u2):  # type: ignore[no-untyped-def]
        return self.posterior_moments(design, y, u2)[0]

    def raw_derivative(self, design, y, u2):  # type: ignore[no-untyped-def]
        first, second = self.posterior_moments(design, y, u2)
        return -y * (second - first**2)


def omega_weights(
    cf: Union[CanonicalForm, CanonicalDesign], weights: np.ndarray
) -> np.ndarray:
    """Return the group weights omega_i = nu_i / n - sum_j w_j A_ij.

    delta = sum_i omega_i x_i over the group means, sum_i omega_i = 1; a single
    study of group i carries omega_i / nu_i.
    """
    design = cf.canonical if isinstance(cf, CanonicalForm) else cf
    return design.nu / design.n - design.a @ np.asarray(weights, dtype=float)


def _single_group_estimate(grouped: GroupedData) -> MuEstimate:
    logger.warning("All studies share one variance; only the sample mean is available.")
    return MuEstimate(
        value=grouped.grand_mean,
        rule="mean",
        weights_w=(),
        weights_omega=(1.0,),
        single_group=True,
    )


def estimate_mu(
    data: Union[CanonicalForm, GroupedData], rule: WeightRule
) -> MuEstimate:
    """Return the estimate of mu produced by ``rule``.

    Args:
        data: Canonical form, or grouped data (one group yields the sample mean).
        rule: The weight rule.

    Returns:
        MuEstimate with both weight vectors.
    """
    if isinstance(data, GroupedData):
        if data.p == 1:
            return _single_group_estimate(data)
        data = transform(data)
    cf = data
    design = cf.canonical
    w = rule.weights(design, cf.y[None, :], cf.u2[None, :])[0]
    value = cf.grand_mean - float(np.sum(design.sqrt_b * w * cf.y))
    tau_estimate = rule.tau_estimate(cf)
    induced = None if tau_estimate is not None else tau_from_weights(cf, w)
    logger.debug(f"Rule {rule.name}: weights {w}, delta {value}")
    return MuEstimate(
        value=value,
        rule=rule.name,
        weights_w=tuple(w),
        weights_omega=tuple(omega_weights(cf, w)),
        tau_estimate=tau_estimate,
        induced_tau2=induced,
    )


def stein_weights(
    cf: CanonicalForm, spec: QuadraticFormSpec, alpha: float
) -> np.ndarray:
    """Return w_j = min(alpha q_j / q, t_j^-2) for the observed data."""
    rule = SteinRule(spec, alpha)
    design = cf.canonical
    return np.clip(
        rule.raw_weights(design, cf.y[None, :], cf.u2[None, :])[0], 0.0, 1.0 / design.t2
    )


def bayes_estimator(cf: CanonicalForm, prior: Optional[PriorSpec] = None) -> MuEstimate:
    """Return the generalized Bayes estimate of mu under ``prior``."""
    return estimate_mu(cf, BayesRule(prior))


def _parse_options(text: str) -> Dict[str, str]:
    options = {}
    for item in filter(None, text.split(",")):
        key, separator, value = item.partition("=")
        if not separator:
            raise InvalidInputError(f"expected key=value, got {item!r}")
        options[key.strip().lower()] = value.strip()
    return options


def _floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(value) for value in text.split(":"))
    except ValueError:
        raise InvalidInputError(f"invalid number list {text!r}")


def _stein_from_options(name: str, options: Dict[str, str]) -> SteinRule:
    alpha = float(options["alpha"]) if "alpha" in options else None
    if "q" in options or "r" in options:
        if not ("q" in options and "r" in options):
            raise InvalidInputError("stein rules need both q=... and r=...")
        spec = QuadraticFormSpec(_floats(options["q"]), _floats(options["r"]))
        return SteinRule(spec, alpha, name)
    return SteinRule(None, alpha, name, form=options.get("form", "equal"))


def _bayes_from_options(name: str, argument: str) -> BayesRule:
    if argument in ("", "grid"):
        return BayesRule(None, name)
    options = _parse_options(argument)
    if "point" in options:
        return BayesRule(PriorSpec.point_mass(float(options["point"])), name)
    if "log" in options:
        lower, upper, nodes = _floats(options["log"])
        return BayesRule(PriorSpec.log_uniform(lower, upper, int(nodes)), name)
    raise InvalidInputError(f"unknown prior {argument!r}")


SIMPLE_RULES = {
    "mean": SampleMeanRule,
    "gd": GraybillDealRule,
    "delta1": Delta1Rule,
    "delta0": Delta0Rule,
    "mh": ModifiedHedgesRule,
}

RULE_NAMES = (
    "mean, gd, dl, hedges, mp, reml, mh, delta1, delta0, moment:q=...,r=..., "
    "stein:[q=...,r=...|form=equal|dl|inverse-b,][alpha=...], "
    "bayes[:grid|:point=T|:log=LO:HI:K]"
)


def rule_from_name(name: str) -> WeightRule:
    """Return the weight rule named ``name`` (see RULE_NAMES)."""
    text = name.strip()
    key, _, argument = text.partition(":")
    key = key.lower()
    if key in SIMPLE_RULES and not argument:
        return SIMPLE_RULES[key]()
    if key in ("dl", "hedges", "mp", "reml", "moment", "fixed"):
        return PluginRule(tau_method_from_name(text), name=text)
    if key == "stein":
        return _stein_from_options(text, _parse_options(argument))
    if key == "bayes":
        return _bayes_from_options(text, argument)
    raise InvalidInputError(f"unknown rule {name!r}; valid: {RULE_NAMES}")
