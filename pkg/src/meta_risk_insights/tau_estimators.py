"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for the estimators of the heterogeneity variance
tau2: moment estimators (DerSimonian-Laird, Hedges, general quadratic forms,
modified Hedges), Mandel-Paule and REML, plus the I^2 index and the restricted
likelihood they are built on.

Every estimator works on arrays of canonical variables, y of shape (m, p - 1)
and u^2 of shape (m, p), so the same code serves a single data set and a Monte
Carlo batch.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from loguru import logger

from meta_risk_insights.data_classes import (
    CanonicalDesign,
    CanonicalForm,
    QuadraticFormSpec,
    StudySet,
    TauEstimate,
)
from meta_risk_insights.exceptions import (
    InvalidForNError,
    InvalidInputError,
    NonConvergenceError,
    NumericalFailureError,
)
from meta_risk_insights.numerics import RootBracket, solve_bracketed

REML_TOL = 1e-10
REML_MAX_ITER = 500
MANDEL_PAULE_TOL = 1e-12
NEWTON_MAX_ITER = 200


def _rows(cf: CanonicalForm) -> Tuple[np.ndarray, np.ndarray]:
    return cf.y[None, :], cf.u2[None, :]


class TauMethod:
    """Base class of the tau2 estimators.

    Subclasses implement ``_raw_values`` and ``gradient``; the base class adds
    truncation at zero and the n = p = 2 shortcut, where every estimator of the
    family equals max(0, y^2 - t^2).
    """

    name = "tau"
    pair_shortcut = True

    def _raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        raise NotImplementedError

    def raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return the untruncated estimates, shape (m,)."""
        if self.pair_shortcut and design.n == 2:
            return y[:, 0] ** 2 - design.t2[0]
        return self._raw_values(design, y, u2)

    def values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return the estimates truncated at zero, shape (m,)."""
        return np.maximum(self.raw_values(design, y, u2), 0.0)

    def gradient(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        """Return d tau2-hat / d y_j, shape (m, p - 1); zero where tau2-hat is 0."""
        raise NotImplementedError

    def _pair_gradient(self, design: CanonicalDesign, y: np.ndarray) -> np.ndarray:
        return np.where(y**2 > design.t2, 2.0 * y, 0.0)

    def estimate(self, cf: CanonicalForm) -> TauEstimate:
        """Return the estimate for one observed canonical form."""
        y, u2 = _rows(cf)
        raw = float(self.raw_values(cf.canonical, y, u2)[0])
        return TauEstimate(value=max(raw, 0.0), raw_value=raw, method=self.name)


class MomentTau(TauMethod):
    """Moment estimator from a quadratic form with positive coefficients.

    tau2 = [sum_j q_j (y_j^2 - t_j^2) + sum_i (nu_i - 1) r_i (u_i^2 - s_i^2)]
           / [sum_j q_j + sum_i (nu_i - 1) r_i]
    """

    name = "moment"

    def __init__(self, spec: Optional[QuadraticFormSpec] = None) -> None:
        """Initialize the estimator.

        Args:
            spec: The quadratic form; subclasses derive it from the design.
        """
        self.spec = spec

    def coefficients(self, design: CanonicalDesign) -> Tuple[np.ndarray, np.ndarray]:
        """Return (q, r) for ``design``."""
        if self.spec is None:
            raise InvalidInputError("a moment estimator needs a quadratic form")
        self.spec.check_dimensions(design.p)
        return self.spec.q_array, self.spec.r_array

    def _denominator(self, design: CanonicalDesign) -> float:
        q, r = self.coefficients(design)
        return float(q.sum() + np.dot(design.within_dof, r))

    def _raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        q, r = self.coefficients(design)
        numerator = (y**2 - design.t2) @ q + (u2 - design.s2) @ (design.within_dof * r)
        return numerator / self._denominator(design)

    def gradient(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        if self.pair_shortcut and design.n == 2:
            return self._pair_gradient(design, y)
        q, _ = self.coefficients(design)
        positive = (self.raw_values(design, y, u2) > 0)[:, None]
        return np.where(positive, 2.0 * q * y / self._denominator(design), 0.0)


class DerSimonianLairdTau(MomentTau):
    """The moment estimator of the form q0 (q_j = t_j^-2, r_i = s_i^-2)."""

    name = "dl"

    def coefficients(self, design: CanonicalDesign) -> Tuple[np.ndarray, np.ndarray]:
        return 1.0 / design.t2, 1.0 / design.s2


class HedgesTau(MomentTau):
    """The moment estimator with equal coefficients; its denominator is n - 1."""

    name = "hedges"

    def coefficients(self, design: CanonicalDesign) -> Tuple[np.ndarray, np.ndarray]:
        return np.ones(design.p - 1), np.ones(design.p)


class ModifiedHedgesTau(TauMethod):
    """tau2 = [q-infinity - sum_j t_j^2 - sum_i (nu_i - 1) s_i^2]_+ / (n - 3)."""

    name = "mh"
    pair_shortcut = False

    @staticmethod
    def _check(design: CanonicalDesign) -> None:
        if design.n <= 3:
            raise InvalidForNError(
                f"the modified Hedges estimator needs n > 3, got n = {design.n}"
            )

    def _raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        self._check(design)
        excess = (y**2).sum(axis=1) + u2 @ design.within_dof
        excess -= design.t2.sum() + np.dot(design.within_dof, design.s2)
        return excess / (design.n - 3)

    def gradient(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        positive = (self.raw_values(design, y, u2) > 0)[:, None]
        return np.where(positive, 2.0 * y / (design.n - 3), 0.0)


class FixedTau(TauMethod):
    """A data-free tau2, e.g. 0 for the Graybill-Deal estimator."""

    name = "fixed"
    pair_shortcut = False

    def __init__(self, value: float = 0.0) -> None:
        """Initialize the estimator.

        Args:
            value: The constant tau2, non-negative.
        """
        if not (math.isfinite(value) and value >= 0):
            raise InvalidInputError(f"fixed tau2 must be non-negative, got {value}")
        self.value = value

    def _raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        return np.full(y.shape[0], self.value)

    def gradient(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        return np.zeros_like(y)


def _mp_lhs(
    design: CanonicalDesign, y2: np.ndarray, u2: np.ndarray, tau2: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Return F(tau2) = sum y^2 h + sum (nu - 1) u^2 r - (n - 1) and F'(tau2)."""
    h = 1.0 / (tau2[:, None] + design.t2)
    r = 1.0 / (tau2[:, None] + design.s2)
    weighted_u2 = design.within_dof * u2
    value = (y2 * h).sum(axis=1) + (weighted_u2 * r).sum(axis=1) - (design.n - 1)
    slope = -(y2 * h**2).sum(axis=1) - (weighted_u2 * r**2).sum(axis=1)
    return value, slope


class MandelPauleTau(TauMethod):
    """Solves sum y_j^2/(tau2 + t_j^2) + sum (nu_i - 1) u_i^2/(tau2 + s_i^2) = n - 1.

    The left-hand side is convex and strictly decreasing, so Newton's method
    started at 0 increases monotonically to the root.
    """

    name = "mp"

    def __init__(self, tol: float = MANDEL_PAULE_TOL) -> None:
        """Initialize the estimator.

        Args:
            tol: Relative tolerance on the root.
        """
        self.tol = tol

    def _raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        y2 = y**2
        tau2 = np.zeros(y.shape[0])
        active = _mp_lhs(design, y2, u2, tau2)[0] > 0
        for _ in range(NEWTON_MAX_ITER):
            if not active.any():
                return tau2
            value, slope = _mp_lhs(design, y2[active], u2[active], tau2[active])
            step = -value / slope
            tau2[active] += step
            done = np.abs(step) <= self.tol * np.maximum(tau2[active], design.t2[0])
            active[np.flatnonzero(active)[done]] = False
        if active.any():
            raise NonConvergenceError(
                "Mandel-Paule Newton iteration did not converge",
                last_iterate=float(tau2[active][0]),
                iterations=NEWTON_MAX_ITER,
            )
        return tau2

    def gradient(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        if design.n == 2:
            return self._pair_gradient(design, y)
        tau2 = self.values(design, y, u2)
        h = 1.0 / (tau2[:, None] + design.t2)
        r = 1.0 / (tau2[:, None] + design.s2)
        curvature = (y**2 * h**2).sum(axis=1) + (design.within_dof * u2 * r**2).sum(
            axis=1
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = 2.0 * y * h / curvature[:, None]
        return np.where((tau2 > 0)[:, None], grad, 0.0)

    def estimate(self, cf: CanonicalForm) -> TauEstimate:
        """Solve the equation for one data set by bracketed root finding."""
        design = cf.canonical
        if design.n == 2:
            return super().estimate(cf)
        y2, u2 = cf.y[None, :] ** 2, cf.u2[None, :]
        evaluations = [0]

        def lhs(tau2: float) -> float:
            evaluations[0] += 1
            return float(_mp_lhs(design, y2, u2, np.array([tau2]))[0][0])

        if lhs(0.0) <= 0:
            return TauEstimate(value=0.0, raw_value=0.0, method=self.name, iterations=1)
        hi = max(float(design.s2.max()), 1.0)
        while lhs(hi) > 0:
            hi *= 2.0
            if not math.isfinite(hi):
                raise NumericalFailureError("could not bracket the Mandel-Paule root")
        root = solve_bracketed(lhs, RootBracket(0.0, hi, self.tol))
        logger.debug(f"Mandel-Paule root {root} after {evaluations[0]} evaluations")
        return TauEstimate(
            value=root, raw_value=root, method=self.name, iterations=evaluations[0]
        )


def _reml_terms(
    design: CanonicalDesign, y2: np.ndarray, u2: np.ndarray, tau2: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Return numerator and denominator of the REML fixed-point map."""
    h2 = 1.0 / (tau2[:, None] + design.t2) ** 2
    r2 = design.within_dof / (tau2[:, None] + design.s2) ** 2
    numerator = ((y2 - design.t2) * h2).sum(axis=1)
    numerator += ((u2 - design.s2) * r2).sum(axis=1)
    denominator = h2.sum(axis=1) + r2.sum(axis=1)
    return numerator, denominator


class RemlTau(TauMethod):
    """REML by the fixed-point iteration started at the DerSimonian-Laird value.

    tau2 <- [sum_j (y_j^2 - t_j^2) h_j^2 + sum_i (nu_i - 1)(u_i^2 - s_i^2) r_i^2]
            / [sum_j h_j^2 + sum_i (nu_i - 1) r_i^2],
    with h_j = 1/(tau2 + t_j^2), r_i = 1/(tau2 + s_i^2) and iterates clamped at 0.
    """

    name = "reml"

    def __init__(self, tol: float = REML_TOL, max_iter: int = REML_MAX_ITER) -> None:
        """Initialize the estimator.

        Args:
            tol: Relative tolerance on successive iterates.
            max_iter: Iteration budget.
        """
        self.tol = tol
        self.max_iter = max_iter

    def iterate(
        self,
        design: CanonicalDesign,
        y: np.ndarray,
        u2: np.ndarray,
        start: Optional[np.ndarray] = None,
    ) -> Tuple[np.ndarray, int]:
        """Run the fixed-point iteration; returns the values and the iterations used."""
        y2 = y**2
        if start is None:
            start = DerSimonianLairdTau().values(design, y, u2)
        tau2 = np.maximum(np.asarray(start, dtype=float).copy(), 0.0)
        active = np.ones(tau2.shape[0], dtype=bool)
        for iteration in range(1, self.max_iter + 1):
            numerator, denominator = _reml_terms(
                design, y2[active], u2[active], tau2[active]
            )
            updated = np.maximum(numerator / denominator, 0.0)
            done = np.abs(updated - tau2[active]) <= self.tol * (1.0 + updated)
            tau2[active] = updated
            active[np.flatnonzero(active)[done]] = False
            if not active.any():
                return tau2, iteration
        raise NonConvergenceError(
            "REML iteration did not converge",
            last_iterate=float(tau2[active][0]),
            iterations=self.max_iter,
        )

    def _raw_values(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        return self.iterate(design, y, u2)[0]

    def gradient(
        self, design: CanonicalDesign, y: np.ndarray, u2: np.ndarray
    ) -> np.ndarray:
        if design.n == 2:
            return self._pair_gradient(design, y)
        tau2 = self.values(design, y, u2)
        h = 1.0 / (tau2[:, None] + design.t2)
        r = 1.0 / (tau2[:, None] + design.s2)
        weighted = design.within_dof
        score_slope = (
            2.0 * (y**2 * h**3).sum(axis=1)
            - (h**2).sum(axis=1)
            + 2.0 * (weighted * u2 * r**3).sum(axis=1)
            - (weighted * r**2).sum(axis=1)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = 2.0 * y * h**2 / score_slope[:, None]
        return np.where((tau2 > 0)[:, None], grad, 0.0)

    def estimate(
        self, cf: CanonicalForm, start: Optional[TauEstimate] = None
    ) -> TauEstimate:
        """Return the REML estimate of one data set."""
        design = cf.canonical
        if design.n == 2:
            return super().estimate(cf)
        y, u2 = _rows(cf)
        initial = None if start is None else np.array([start.value])
        if start is not None and start.value < 0:
            raise InvalidInputError("the REML starting point must be non-negative")
        tau2, iterations = self.iterate(design, y, u2, initial)
        logger.debug(f"REML converged to {tau2[0]} in {iterations} iterations")
        return TauEstimate(
            value=float(tau2[0]),
            raw_value=float(tau2[0]),
            method=self.name,
            iterations=iterations,
        )


def dersimonian_laird(cf: CanonicalForm) -> TauEstimate:
    """Return the DerSimonian-Laird estimate from the canonical variables."""
    return DerSimonianLairdTau().estimate(cf)


def hedges(cf: CanonicalForm) -> TauEstimate:
    """Return the Hedges estimate from the canonical variables."""
    return HedgesTau().estimate(cf)


def moment_estimator(cf: CanonicalForm, spec: QuadraticFormSpec) -> TauEstimate:
    """Return the moment estimate defined by ``spec``."""
    return MomentTau(spec).estimate(cf)


def modified_hedges(cf: CanonicalForm) -> TauEstimate:
    """Return the modified Hedges estimate (n > 3)."""
    return ModifiedHedgesTau().estimate(cf)


def mandel_paule(cf: CanonicalForm) -> TauEstimate:
    """Return the Mandel-Paule estimate."""
    return MandelPauleTau().estimate(cf)


def mandel_paule_closed_form_p3(cf: CanonicalForm) -> float:
    """Return the Mandel-Paule estimate for n = p = 3 by the quadratic formula.

    With three studies of distinct variances the equation reduces to
    2 tau^4 + B tau^2 + C = 0, B = 2(t1 + t2) - y1^2 - y2^2,
    C = 2 t1 t2 - y1^2 t2 - y2^2 t1; the estimate is its larger root when
    y1^2/t1 + y2^2/t2 >= 2 and 0 otherwise.
    """
    if not (cf.n == 3 and cf.p == 3):
        raise InvalidInputError("the closed form applies to three distinct variances")
    y1, y2 = cf.y**2
    t1, t2 = cf.t2
    if y1 / t1 + y2 / t2 < 2:
        return 0.0
    linear = 2.0 * (t1 + t2) - y1 - y2
    constant = 2.0 * t1 * t2 - y1 * t2 - y2 * t1
    discriminant = linear**2 - 8.0 * constant
    return max((-linear + math.sqrt(max(discriminant, 0.0))) / 4.0, 0.0)


def reml(
    cf: CanonicalForm,
    start: Optional[TauEstimate] = None,
    tol: float = REML_TOL,
    max_iter: int = REML_MAX_ITER,
) -> TauEstimate:
    """Return the REML estimate, started at ``start`` or the DerSimonian-Laird value."""
    return RemlTau(tol, max_iter).estimate(cf, start)


def i_squared(cf: CanonicalForm) -> float:
    """Return I^2 = max(0, (T - n + 1) / T) with T = q0."""
    statistic = cf.q_zero
    if statistic <= 0:
        return 0.0
    return max(0.0, (statistic - cf.n + 1) / statistic)


def restricted_loglik(cf: CanonicalForm, tau2: float) -> float:
    """Return the negative restricted log-likelihood in canonical variables.

    L = [sum_j y_j^2/(tau2 + t_j^2) + sum_j log(tau2 + t_j^2)
         + sum_i (nu_i - 1) u_i^2/(tau2 + s_i^2) + sum_i (nu_i - 1) log(tau2 + s_i^2)
         + log n] / 2
    """
    design = cf.canonical
    within = design.within_dof
    value = np.sum(cf.y**2 / (tau2 + design.t2)) + np.sum(np.log(tau2 + design.t2))
    value += np.sum(within * cf.u2 / (tau2 + design.s2))
    value += np.sum(within * np.log(tau2 + design.s2)) + math.log(design.n)
    return 0.5 * float(value)


def restricted_loglik_x_form(cf: CanonicalForm, tau2: float) -> float:
    """Return the same quantity from the group means and the weighted mean x-tilde.

    Q(v) = n prod_j (v + t_j^2) = M(v) sum_i nu_i / (v + s_i^2), so the log terms
    of both forms coincide and no additive constant separates them.
    """
    design = cf.canonical
    weights = design.nu / (tau2 + design.s2)
    x_tilde = np.dot(weights, cf.means) / weights.sum()
    value = np.sum(weights * (cf.means - x_tilde) ** 2)
    value += np.sum(design.within_dof * cf.u2 / (tau2 + design.s2))
    value += np.sum(design.nu * np.log(tau2 + design.s2)) + math.log(weights.sum())
    return 0.5 * float(value)


def reml_score(cf: CanonicalForm, tau2: float) -> float:
    """Return dL/d tau2 of :func:`restricted_loglik`."""
    design = cf.canonical
    h = 1.0 / (tau2 + design.t2)
    r = 1.0 / (tau2 + design.s2)
    within = design.within_dof
    value = -np.sum(cf.y**2 * h**2) + np.sum(h)
    value += -np.sum(within * cf.u2 * r**2) + np.sum(within * r)
    return 0.5 * float(value)


def tau_from_weights(cf: CanonicalForm, weights: np.ndarray) -> float:
    """Return the tau2 a weight vector induces, [sum w^2 (y^2 - t^2)]_+ / sum w^2.

    Zero weights (the sample mean) induce an infinite tau2.
    """
    weights = np.asarray(weights, dtype=float)
    norm = float(np.sum(weights**2))
    if norm == 0:
        return math.inf
    return max(float(np.sum(weights**2 * (cf.y**2 - cf.t2))) / norm, 0.0)


def dersimonian_laird_from_studies(study_set: StudySet) -> TauEstimate:
    """Return the DerSimonian-Laird estimate computed from the raw studies."""
    effects, weights = study_set.effects, 1.0 / study_set.variances
    graybill_deal = np.dot(weights, effects) / weights.sum()
    cochran = float(np.sum(weights * (effects - graybill_deal) ** 2))
    scale = weights.sum() - np.sum(weights**2) / weights.sum()
    raw = (cochran - (study_set.n - 1)) / scale
    return TauEstimate(value=max(raw, 0.0), raw_value=raw, method="dl")


def hedges_from_studies(study_set: StudySet) -> TauEstimate:
    """Return the Hedges estimate from raw studies and the sample mean."""
    effects = study_set.effects
    spread = float(np.sum((effects - effects.mean()) ** 2)) / (study_set.n - 1)
    raw = spread - float(study_set.variances.mean())
    return TauEstimate(value=max(raw, 0.0), raw_value=raw, method="hedges")


def i_squared_from_studies(study_set: StudySet) -> float:
    """Return I^2 from Cochran's Q of the raw studies."""
    effects, weights = study_set.effects, 1.0 / study_set.variances
    graybill_deal = np.dot(weights, effects) / weights.sum()
    cochran = float(np.sum(weights * (effects - graybill_deal) ** 2))
    if cochran <= 0:
        return 0.0
    return max(0.0, (cochran - study_set.n + 1) / cochran)


def _parse_coefficients(text: str) -> QuadraticFormSpec:
    """Parse ``q=1:2,r=1:1:1`` into a QuadraticFormSpec."""
    fields = {}  # type: Dict[str, Tuple[float, ...]]
    for item in text.split(","):
        key, _, values = item.partition("=")
        try:
            fields[key.strip()] = tuple(float(value) for value in values.split(":"))
        except ValueError:
            raise InvalidInputError(f"invalid coefficient list {item!r}")
    if set(fields) != {"q", "r"}:
        raise InvalidInputError(f"expected q=...,r=..., got {text!r}")
    return QuadraticFormSpec(fields["q"], fields["r"])


TAU_METHODS = {
    "dl": DerSimonianLairdTau,
    "hedges": HedgesTau,
    "mp": MandelPauleTau,
    "reml": RemlTau,
    "mh": ModifiedHedgesTau,
}  # type: Dict[str, Callable[[], TauMethod]]


def tau_method_from_name(name: str) -> TauMethod:
    """Return the estimator named ``name``.

    Accepted names: dl, hedges, mp, reml, mh, moment:q=...,r=... and fixed:VALUE.
    """
    key, _, argument = name.strip().partition(":")
    key = key.lower()
    if key in TAU_METHODS and not argument:
        return TAU_METHODS[key]()
    if key == "moment" and argument:
        method = MomentTau(_parse_coefficients(argument))
        method.name = name.strip()
        return method
    if key == "fixed" and argument:
        try:
            return FixedTau(float(argument))
        except ValueError:
            raise InvalidInputError(f"invalid fixed tau2 {argument!r}")
    valid = ", ".join(list(TAU_METHODS) + ["moment:q=...,r=...", "fixed:VALUE"])
    raise InvalidInputError(f"unknown tau method {name!r}; valid: {valid}")
