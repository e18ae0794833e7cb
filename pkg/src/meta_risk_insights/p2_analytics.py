"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for the analytics of designs with two distinct
variances (p = 2): the R-risks of delta1, delta0 and DerSimonian-Laird at
tau2 = 0, the Okamoto lower bound for delta1, the exact conditions under which
one rule beats another at tau2 = 0, and the exact risk for n = p = 2.

For p = 2 there is a single root t^2 = (nu_2 s_1^2 + nu_1 s_2^2) / n.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from loguru import logger
from scipy import integrate

from meta_risk_insights.canonical import canonical_design
from meta_risk_insights.data_classes import CanonicalDesign, Design
from meta_risk_insights.exceptions import InvalidForNError, InvalidInputError
from meta_risk_insights.mu_estimators import WeightRule
from meta_risk_insights.numerics import (
    RootBracket,
    chi2_cdf,
    chi2_combination_sf,
    chi2_pdf,
    chi2_sf,
    solve_bracketed,
)

P2_RULES = ("delta1", "delta0", "dl")
THRESHOLD_BRACKET = (1e-3, 0.999)
OKAMOTO_BRACKET = (1e-6, 1.0)


def _p2_design(design: Design, shrinkage: bool = True) -> CanonicalDesign:
    if design.p != 2:
        raise InvalidInputError(f"expected two distinct variances, got p = {design.p}")
    if shrinkage and design.n <= 3:
        raise InvalidForNError(f"the risk at tau2 = 0 needs n > 3, got n = {design.n}")
    return canonical_design(design)


def kappa(design: Design) -> float:
    """Return kappa = 1 + t^2 [(nu_1 - 1) / s_1^2 + (nu_2 - 1) / s_2^2]."""
    cd = _p2_design(design, shrinkage=False)
    return 1.0 + float(cd.t2[0]) * float(np.sum(cd.within_dof / cd.s2))


def delta1_risk_at_zero(design: Design) -> float:
    """Return R(delta1, 0) = E[(1 - (n - 3) / V)_+^2].

    V = chi2_3 + (s_1^2 / t^2) chi2_{nu_1 - 1} + (s_2^2 / t^2) chi2_{nu_2 - 1}.
    Integration by parts gives the integral of 2 (n - 3)(v - n + 3) / v^3
    against the survival function of V from n - 3 to infinity.
    """
    cd = _p2_design(design)
    n, t2 = cd.n, float(cd.t2[0])
    scales = [1.0] + list(cd.s2 / t2)
    dofs = [3] + [int(m) - 1 for m in cd.design.multiplicities]
    lower = n - 3.0

    def integrand(v: float) -> float:
        slope = 2.0 * lower * (v - lower) / v**3
        return slope * chi2_combination_sf(scales, dofs, v)

    value, error = integrate.quad(integrand, lower, np.inf, limit=200, epsabs=1e-10)
    logger.debug(f"R(delta1, 0) = {value} (quadrature error {error})")
    return value


def dersimonian_laird_risk_at_zero(design: Design) -> float:
    """Return R(DL, 0) = int_{n-1}^inf [1 / (1 + (v - n + 1) / kappa) - 1]^2 dG_{n+1}.

    The integral is taken numerically with the chi-square density of n + 1 dof.
    """
    cd = _p2_design(design)
    n, k = cd.n, kappa(design)

    def integrand(v: float) -> float:
        return (1.0 / (1.0 + (v - n + 1.0) / k) - 1.0) ** 2 * chi2_pdf(n + 1, v)

    value, _ = integrate.quad(integrand, n - 1.0, np.inf, limit=200, epsabs=1e-12)
    return value


def delta0_risk_at_zero(design: Design) -> float:
    """Return R(delta0, 0) = int_{n-1}^inf ((n - 1) / v - 1)^2 dG_{n+1}(v).

    In closed form (n - 1) / (n - 3) [1 - G_{n-3}] - 2 [1 - G_{n-1}] + 1 - G_{n+1},
    all at n - 1; it does not depend on the variances.
    """
    n = _p2_design(design).n
    xi = n - 1.0
    return (
        (n - 1.0) / (n - 3.0) * chi2_sf(n - 3, xi)
        - 2.0 * chi2_sf(n - 1, xi)
        + chi2_sf(n + 1, xi)
    )


def p2_risk_at_zero(design: Design, rule: str) -> float:
    """Return the R-risk at tau2 = 0 of ``delta1``, ``delta0`` or ``dl`` for p = 2."""
    if rule == "delta1":
        return delta1_risk_at_zero(design)
    if rule == "delta0":
        return delta0_risk_at_zero(design)
    if rule == "dl":
        return dersimonian_laird_risk_at_zero(design)
    raise InvalidInputError(f"unknown rule {rule!r}; valid: {', '.join(P2_RULES)}")


def okamoto_constant(design: Design) -> float:
    """Return a = t^2 / [t^6 s_1^{2(nu_1 - 1)} s_2^{2(nu_2 - 1)}]^{1/(n+1)}."""
    cd = _p2_design(design, shrinkage=False)
    t2 = float(cd.t2[0])
    log_mean = 3.0 * math.log(t2) + float(np.dot(cd.within_dof, np.log(cd.s2)))
    return t2 / math.exp(log_mean / (cd.n + 1))


def okamoto_bound(design: Design, v: float) -> Tuple[float, float]:
    """Return (G_{n+1}(a v), a), an upper bound on P(V <= v) for the V of delta1."""
    a = okamoto_constant(design)
    return chi2_cdf(design.n + 1, a * v), a


def delta1_statistic_cdf(design: Design, v: float) -> float:
    """Return P(V <= v) for the statistic behind R(delta1, 0).

    V = chi2_3 + (s_1^2 / t^2) chi2_{nu_1 - 1} + (s_2^2 / t^2) chi2_{nu_2 - 1}.
    """
    cd = _p2_design(design, shrinkage=False)
    t2 = float(cd.t2[0])
    scales = [1.0] + list(cd.s2 / t2)
    dofs = [3] + [int(m) - 1 for m in cd.design.multiplicities]
    return 1.0 - chi2_combination_sf(scales, dofs, v)


def okamoto_lower_risk(n: int, a: float) -> float:
    """Return the lower bound on R(delta1, 0) implied by the Okamoto inequality.

    1 - G_{n+1}(xi) - 2 (n - 3) a [1 - G_{n-1}(xi)] / (n - 1)
      + (n - 3) a^2 [1 - G_{n-3}(xi)] / (n - 1),  xi = a (n - 3).
    """
    if n <= 3:
        raise InvalidForNError(f"the Okamoto bound needs n > 3, got n = {n}")
    xi = a * (n - 3)
    return (
        1.0
        - chi2_cdf(n + 1, xi)
        - 2.0 * (n - 3) * a * chi2_sf(n - 1, xi) / (n - 1)
        + (n - 3) * a**2 * chi2_sf(n - 3, xi) / (n - 1)
    )


def okamoto_threshold(n: int) -> float:
    """Return a_0(n); below it the Okamoto bound puts R(delta1, 0) above 2 / (n - 1)."""
    bound = 2.0 / (n - 1)
    return solve_bracketed(
        lambda a: okamoto_lower_risk(n, a) - bound,
        RootBracket(*OKAMOTO_BRACKET, tol=1e-10),
    )


def delta1_zero_threshold_ratio(nu1: int, nu2: int) -> float:
    """Return the ratio s_1^2 / s_2^2 at which R(delta1, 0) = 2 / (n - 1).

    Group 1 has the smaller variance; R(delta1, 0) <= 2 / (n - 1) for larger ratios.
    """
    n = nu1 + nu2
    bound = 2.0 / (n - 1)

    def excess(ratio: float) -> float:
        return delta1_risk_at_zero(Design((ratio, 1.0), (nu1, nu2))) - bound

    ratio = solve_bracketed(excess, RootBracket(*THRESHOLD_BRACKET, tol=1e-6))
    logger.info(f"R(delta1, 0) = 2/(n-1) at ratio {ratio}, nu = ({nu1}, {nu2})")
    return ratio


def delta0_improvement_condition(design: Design) -> bool:
    """Return True if R(delta0, 0) < R(DL, 0), i.e. kappa < n - 1.

    With rho = s_1^2 / s_2^2 the condition reads
    (nu_2 - 1) rho / nu_1 + (nu_1 - 1) / (nu_2 rho) < n (n - 1) / (nu_1 nu_2) - 2.
    """
    if design.p != 2:
        raise InvalidInputError(f"expected two distinct variances, got p = {design.p}")
    nu1, nu2 = design.multiplicities
    n = design.n
    rho = design.group_variances[0] / design.group_variances[1]
    lhs = (nu2 - 1) * rho / nu1 + (nu1 - 1) / (nu2 * rho)
    return lhs < n * (n - 1) / (nu1 * nu2) - 2.0


def mh_beats_delta1_at_zero(nu1: int, nu2: int, s1_sq: float, s2_sq: float) -> bool:
    """Return True if modified Hedges has R-risk at tau2 = 0 no larger than delta1.

    The groups are relabelled so that nu_1 <= nu_2. The condition is n >= 5,
    nu_1 <= n (n - 4) / (2n - 5) and
    [n (n - 1) - nu_1 (2n - 5)] s_2^2 >= [n (n - 4) - nu_1 (2n - 5)] s_1^2.
    """
    if min(nu1, nu2) < 1 or min(s1_sq, s2_sq) <= 0:
        raise InvalidInputError("multiplicities and variances must be positive")
    if nu1 > nu2:
        nu1, nu2, s1_sq, s2_sq = nu2, nu1, s2_sq, s1_sq
    n = nu1 + nu2
    if n < 5:
        return False
    if nu1 > n * (n - 4) / (2 * n - 5):
        return False
    slope = nu1 * (2 * n - 5)
    return (n * (n - 1) - slope) * s2_sq >= (n * (n - 4) - slope) * s1_sq


def _pair_weight(cd: CanonicalDesign, rule: WeightRule, y: float) -> float:
    return float(rule.weights(cd, np.array([[y]]), np.zeros((1, 2)))[0, 0])


def _pair_design(design: Design) -> CanonicalDesign:
    if design.p != 2 or design.n != 2:
        raise InvalidInputError(f"expected two single studies, got n = {design.n}")
    return canonical_design(design)


def p2_risk_quad(design: Design, rule: WeightRule, tau2: float) -> float:
    """Return the exact R-risk E[(w(y) - h)^2 y^2 / h], y ~ N(0, 1/h), for n = p = 2.

    The integral over z = y sqrt(h) is split at z0 = t sqrt(h), where the
    n = 2 estimators leave zero, and uses a log scale on [z0, 1].
    """
    cd = _pair_design(design)
    if not (math.isfinite(tau2) and tau2 >= 0):
        raise InvalidInputError(f"tau2 must be finite and non-negative, got {tau2}")
    rule.check(cd)
    sigma = tau2 + float(cd.t2[0])
    scale = math.sqrt(sigma)
    density = math.sqrt(2.0 / math.pi)

    def integrand(z: float) -> float:
        w = _pair_weight(cd, rule, scale * z)
        gauss = density * math.exp(-0.5 * z**2)
        return (w - 1.0 / sigma) ** 2 * z**2 * sigma**2 * gauss

    z0 = math.sqrt(float(cd.t2[0]) / sigma)
    head, _ = integrate.quad(integrand, 0.0, z0, limit=200)
    middle = 0.0
    if z0 < 1.0:
        middle, _ = integrate.quad(
            lambda s: integrand(math.exp(s)) * math.exp(s), math.log(z0), 0.0, limit=200
        )
    tail, _ = integrate.quad(integrand, max(z0, 1.0), np.inf, limit=200)
    return head + middle + tail


def p2_asymptotic_slope(design: Design, rule: WeightRule) -> float:
    """Return lim R / tau for n = p = 2, sqrt(2 / pi) int_0^inf y^2 w(y)^2 dy."""
    cd = _pair_design(design)
    rule.check(cd)
    t = math.sqrt(float(cd.t2[0]))

    def integrand(y: float) -> float:
        return y**2 * _pair_weight(cd, rule, y) ** 2

    head, _ = integrate.quad(integrand, 0.0, t, limit=200)
    tail, _ = integrate.quad(integrand, t, np.inf, limit=200)
    return math.sqrt(2.0 / math.pi) * (head + tail)
