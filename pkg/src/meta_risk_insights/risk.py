"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for the R-risk engine: the loss of a weight rule,
Monte Carlo risk points and curves, the variance decomposition and unbiased
risk checks, the large-tau2 limit of Stein-type rules, and the closed forms for
equal uncertainties and the Graybill-Deal estimator.

The R-risk is E(delta - x-tilde)^2 / [Var(x-bar) - Var(x-tilde)], so the sample
mean has risk 1 for every tau2.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import integrate

from meta_risk_insights.canonical import (
    canonical_design,
    variance_gap_direct,
    weighted_mean_decomposition,
)
from meta_risk_insights.data_classes import (
    CanonicalDesign,
    CanonicalForm,
    Design,
    QuadraticFormSpec,
    RiskCurve,
    RiskPoint,
)
from meta_risk_insights.exceptions import InvalidForNError, InvalidInputError
from meta_risk_insights.log import log_execution_time
from meta_risk_insights.mu_estimators import (
    GraybillDealRule,
    SampleMeanRule,
    WeightRule,
    estimate_mu,
)
from meta_risk_insights.numerics import (
    RandomStream,
    chi2_cdf,
    chi2_pdf,
    chi2_sf,
    rng_stream,
)

MC_CHUNK = 16384
DEFAULT_SAMPLES = 1_000_000
SAMPLES_ENV = "META_RISK_SAMPLES"
DEFAULT_GRID_POINTS = 40
DEFAULT_WORKERS = 4
FINITE_DIFFERENCE_STEP = 1e-5

DesignInput = Union[Design, CanonicalDesign]


def default_samples() -> int:
    """Return the Monte Carlo sample count from META_RISK_SAMPLES, 10^6 if unset."""
    value = os.environ.get(SAMPLES_ENV)
    if not value:
        return DEFAULT_SAMPLES
    try:
        samples = int(float(value))
    except ValueError:
        raise InvalidInputError(f"{SAMPLES_ENV} must be a number, got {value!r}")
    if samples < 1:
        raise InvalidInputError(f"{SAMPLES_ENV} must be positive, got {samples}")
    return samples


def default_grid(design: Design, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Return 0 and ``points`` log-spaced tau2 values in [1e-3 s^2, 1e3 s^2]."""
    s2_bar = design.s2_bar
    return np.concatenate(([0.0], np.geomspace(1e-3 * s2_bar, 1e3 * s2_bar, points)))


def _canonical(design: DesignInput) -> CanonicalDesign:
    if isinstance(design, CanonicalDesign):
        return design
    return canonical_design(design)


def _check_tau2(tau2: float) -> None:
    if not (math.isfinite(tau2) and tau2 >= 0):
        raise InvalidInputError(f"tau2 must be finite and non-negative, got {tau2}")


def _samples(n_samples: Optional[int]) -> int:
    samples = default_samples() if n_samples is None else int(n_samples)
    if samples < 1:
        raise InvalidInputError(f"n_samples must be positive, got {samples}")
    return samples


def _chunks(n_samples: int) -> Iterator[int]:
    for start in range(0, n_samples, MC_CHUNK):
        yield min(MC_CHUNK, n_samples - start)


@dataclass
class RunningMoments:
    """Mean and variance of a stream of batches, merged pairwise."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, values: np.ndarray) -> None:
        """Merge a batch of values."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return
        batch_mean = float(values.mean())
        batch_m2 = float(np.sum((values - batch_mean) ** 2))
        total = self.count + values.size
        delta = batch_mean - self.mean
        self.mean += delta * values.size / total
        self.m2 += batch_m2 + delta**2 * self.count * values.size / total
        self.count = total

    @property
    def std_error(self) -> float:
        """Return the standard error of the mean."""
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.count - 1) / self.count)


@dataclass(frozen=True)
class PairedCheck:
    """Two Monte Carlo estimates of the same quantity from shared draws.

    Args:
        lhs: The first estimate.
        rhs: The second estimate.
        diff: lhs - rhs.
        std_error: Standard error of the paired difference.
    """

    lhs: float
    rhs: float
    diff: float
    std_error: float

    def agrees(self, bands: float = 3.0) -> bool:
        """Return True if |diff| is within ``bands`` standard errors."""
        return abs(self.diff) <= bands * self.std_error + 1e-12


def draw_canonical(
    design: CanonicalDesign, tau2: float, size: int, stream: RandomStream
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw y_j ~ N(0, tau2 + t_j^2) and the within-group variances u_i^2.

    u_i^2 ~ (tau2 + s_i^2) chi2(nu_i - 1) / (nu_i - 1).

    Args:
        design: The canonical design.
        tau2: Heterogeneity variance.
        size: Number of draws.
        stream: Random stream to consume.

    Returns:
        Tuple of y (size, p - 1) and u^2 (size, p); u_i^2 = 0 when nu_i = 1.
    """
    y = stream.normal((size, design.p - 1)) * np.sqrt(tau2 + design.t2)
    u2 = np.zeros((size, design.p))
    for i, dof in enumerate(design.design.multiplicities):
        if dof > 1:
            draws = stream.chisquare(dof - 1, size)
            u2[:, i] = (tau2 + design.s2[i]) * draws / (dof - 1)
    return y, u2


def _as_rows(y: np.ndarray, u2: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
    y = np.asarray(y, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    single = y.ndim == 1
    return np.atleast_2d(y), np.atleast_2d(u2), single


def loss(
    design: DesignInput,
    tau2: float,
    y: np.ndarray,
    u2: np.ndarray,
    rule: WeightRule,
) -> Union[float, np.ndarray]:
    """Return L = sum (w_j - h_j)^2 b_j y_j^2 / sum b_j h_j, h_j = 1 / (tau2 + t_j^2).

    Args:
        design: The design or its canonical form.
        tau2: Heterogeneity variance.
        y: Canonical variables, shape (p - 1,) or (m, p - 1).
        u2: Within-group variances, shape (p,) or (m, p).
        rule: The weight rule.

    Returns:
        The loss, a float for a single realization.
    """
    _check_tau2(tau2)
    cd = _canonical(design)
    rows_y, rows_u2, single = _as_rows(y, u2)
    h = cd.h(tau2)
    w = rule.weights(cd, rows_y, rows_u2)
    value = ((w - h) ** 2 * rows_y**2) @ cd.b / float(np.dot(cd.b, h))
    return float(value[0]) if single else value


def loss_from_means(cf: CanonicalForm, tau2: float, rule: WeightRule) -> float:
    """Return (delta - x-tilde)^2 / [Var(x-bar) - Var(x-tilde)] from the group means.

    For p = 2 it equals :func:`loss` pointwise; for p > 2 the two agree in
    expectation, since the cross terms of (delta - x-tilde)^2 have mean zero.
    """
    delta = estimate_mu(cf, rule).value
    x_tilde = weighted_mean_decomposition(cf, tau2).direct
    return (delta - x_tilde) ** 2 / variance_gap_direct(cf, tau2)


def r_risk_mc(
    design: DesignInput,
    tau2: float,
    rule: WeightRule,
    n_samples: Optional[int] = None,
    seed: int = 0,
    stream_id: int = 0,
) -> RiskPoint:
    """Return the Monte Carlo R-risk of ``rule`` at ``tau2``.

    Args:
        design: The design or its canonical form.
        tau2: Heterogeneity variance.
        rule: The weight rule.
        n_samples: Number of draws; META_RISK_SAMPLES or 10^6 when omitted.
        seed: Seed of the random stream.
        stream_id: Stream index; risk curves use the grid index.

    Returns:
        RiskPoint with the standard error of the mean loss.
    """
    _check_tau2(tau2)
    cd = _canonical(design)
    samples = _samples(n_samples)
    rule.check(cd)
    stream = rng_stream(seed, stream_id)
    moments = RunningMoments()
    for size in _chunks(samples):
        y, u2 = draw_canonical(cd, tau2, size, stream)
        moments.add(loss(cd, tau2, y, u2, rule))
    logger.debug(
        f"R({rule.name}, {tau2}) = {moments.mean} +- {moments.std_error} "
        f"({samples} draws)"
    )
    return RiskPoint(
        tau2=tau2,
        r_risk=moments.mean,
        mc_std_error=moments.std_error,
        n_samples=samples,
        method="monte-carlo",
    )


def risk_difference_mc(
    design: DesignInput,
    tau2: float,
    first: WeightRule,
    second: WeightRule,
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> PairedCheck:
    """Compare the R-risks of two rules on shared draws.

    Args:
        design: The design or its canonical form.
        tau2: Heterogeneity variance.
        first: The rule whose risk is ``lhs``.
        second: The rule whose risk is ``rhs``.
        n_samples: Number of draws; META_RISK_SAMPLES or 10^6 when omitted.
        seed: Seed of the random stream.

    Returns:
        PairedCheck of R(first) against R(second); ``diff`` is negative when
        ``first`` has the smaller risk.
    """
    _check_tau2(tau2)
    cd = _canonical(design)
    samples = _samples(n_samples)
    first.check(cd)
    second.check(cd)
    stream = rng_stream(seed)
    lhs, rhs, diff = RunningMoments(), RunningMoments(), RunningMoments()
    for size in _chunks(samples):
        y, u2 = draw_canonical(cd, tau2, size, stream)
        first_loss = loss(cd, tau2, y, u2, first)
        second_loss = loss(cd, tau2, y, u2, second)
        lhs.add(first_loss)
        rhs.add(second_loss)
        diff.add(first_loss - second_loss)
    logger.debug(
        f"R({first.name}) - R({second.name}) at {tau2} = {diff.mean} "
        f"+- {diff.std_error}"
    )
    return PairedCheck(lhs.mean, rhs.mean, diff.mean, diff.std_error)


def variance_decomposition_check(
    design: DesignInput,
    tau2: float,
    rule: WeightRule,
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> PairedCheck:
    """Check Var(delta) = Var(x-tilde) + E(delta - x-tilde)^2 by simulation.

    x-tilde ~ N(0, 1/W) is drawn independently of (y, u^2) and
    delta = x-tilde - sum_j sqrt(b_j) (w_j - h_j) y_j, with mu = 0.

    Returns:
        PairedCheck of E delta^2 against 1/W + E(delta - x-tilde)^2.
    """
    _check_tau2(tau2)
    cd = _canonical(design)
    samples = _samples(n_samples)
    rule.check(cd)
    stream = rng_stream(seed)
    variance_tilde = 1.0 / cd.group_precision(tau2)
    h = cd.h(tau2)
    lhs, rhs, diff = RunningMoments(), RunningMoments(), RunningMoments()
    for size in _chunks(samples):
        y, u2 = draw_canonical(cd, tau2, size, stream)
        x_tilde = stream.normal(size) * math.sqrt(variance_tilde)
        gap = (rule.weights(cd, y, u2) - h) * y @ cd.sqrt_b
        delta = x_tilde - gap
        lhs.add(delta**2)
        rhs.add(gap**2 + variance_tilde)
        diff.add(x_tilde**2 - 2.0 * x_tilde * gap - variance_tilde)
    return PairedCheck(lhs.mean, rhs.mean, diff.mean, diff.std_error)


def _unbiased_statistic(
    cd: CanonicalDesign,
    y: np.ndarray,
    u2: np.ndarray,
    divergence: np.ndarray,
    rule: WeightRule,
) -> np.ndarray:
    f = y * rule.weights(cd, y, u2)
    return (f**2 - 2.0 * divergence) @ cd.b


def finite_difference_divergence(
    design: CanonicalDesign, y: np.ndarray, u2: np.ndarray, rule: WeightRule
) -> np.ndarray:
    """Return d f_j / d y_j by central differences, step 1e-5 times the local scale."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    u2 = np.atleast_2d(np.asarray(u2, dtype=float))
    divergence = np.empty_like(y)
    for j in range(design.p - 1):
        floor = math.sqrt(design.t2[j])
        step = FINITE_DIFFERENCE_STEP * np.maximum(np.abs(y[:, j]), floor)
        plus, minus = y.copy(), y.copy()
        plus[:, j] += step
        minus[:, j] -= step
        f_plus = plus[:, j] * rule.weights(design, plus, u2)[:, j]
        f_minus = minus[:, j] * rule.weights(design, minus, u2)[:, j]
        divergence[:, j] = (f_plus - f_minus) / (2.0 * step)
    return divergence


def unbiased_risk_estimate(
    cf: CanonicalForm, rule: WeightRule, finite_difference: bool = False
) -> float:
    """Return sum_j b_j (f_j^2 - 2 d f_j / d y_j) with f_j = y_j w_j.

    Its expectation is Var(delta) - Var(x-bar) for every tau2.

    Args:
        cf: The observed canonical form.
        rule: The weight rule.
        finite_difference: Use central differences instead of the analytic divergence.

    Returns:
        The statistic; evaluations on a clamp kink log a warning.
    """
    cd = cf.canonical
    y, u2 = cf.y[None, :], cf.u2[None, :]
    if np.any(rule.kinks(cd, y, u2)):
        logger.warning(f"Rule {rule.name} hit a kink; one-sided derivative used")
    if finite_difference:
        divergence = finite_difference_divergence(cd, y, u2, rule)
    else:
        divergence = rule.divergence(cd, y, u2)
    return float(_unbiased_statistic(cd, y, u2, divergence, rule)[0])


def unbiased_risk_check(
    design: DesignInput,
    tau2: float,
    rule: WeightRule,
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> PairedCheck:
    """Compare the mean unbiased risk statistic with E sum b (w - h)^2 y^2 - sum b h.

    Both sides estimate Var(delta) - Var(x-bar).
    """
    _check_tau2(tau2)
    cd = _canonical(design)
    samples = _samples(n_samples)
    rule.check(cd)
    stream = rng_stream(seed)
    h = cd.h(tau2)
    gap = float(np.dot(cd.b, h))
    lhs, rhs, diff = RunningMoments(), RunningMoments(), RunningMoments()
    for size in _chunks(samples):
        y, u2 = draw_canonical(cd, tau2, size, stream)
        statistic = _unbiased_statistic(cd, y, u2, rule.divergence(cd, y, u2), rule)
        reference = ((rule.weights(cd, y, u2) - h) ** 2 * y**2) @ cd.b - gap
        lhs.add(statistic)
        rhs.add(reference)
        diff.add(statistic - reference)
    return PairedCheck(lhs.mean, rhs.mean, diff.mean, diff.std_error)


def minimax_bound(n: int) -> float:
    """Return 2 / (n - 1), the smallest achievable supremum of the R-risk."""
    if n <= 3:
        raise InvalidForNError(f"the minimax bound needs n > 3, got n = {n}")
    return 2.0 / (n - 1)


def theorem1_limit(
    design: DesignInput,
    spec: QuadraticFormSpec,
    alphas: Union[float, Sequence[float]],
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> RiskPoint:
    """Return lim R(delta, tau2) as tau2 -> inf for rules with w_j ~ alpha_j / q.

    The limit is
    1 - sum_j b_j [2 alpha_j E(z_j^2 / Q) - alpha_j^2 E(z_j^2 / Q^2)] / sum_j b_j
    with Q = sum_j q_j z_j^2 + sum_i r_i chi2(nu_i - 1), evaluated by simulation.
    A Stein rule with multiplier alpha has alpha_j = alpha q_j.

    Args:
        design: The design or its canonical form, n > 3.
        spec: The quadratic form q.
        alphas: alpha_j, a scalar or one value per canonical variable.
        n_samples: Number of draws.
        seed: Seed of the random stream.

    Returns:
        RiskPoint with tau2 = inf and method ``asymptotic``.
    """
    cd = _canonical(design)
    if cd.n <= 3:
        raise InvalidForNError(f"the large-tau2 limit needs n > 3, got n = {cd.n}")
    spec.check_dimensions(cd.p)
    alpha = np.broadcast_to(np.asarray(alphas, dtype=float), (cd.p - 1,))
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise InvalidInputError("alpha_j must be positive and finite")
    q, r = spec.q_array, spec.r_array
    weights = cd.b / cd.b.sum()
    samples = _samples(n_samples)
    stream = rng_stream(seed)
    moments = RunningMoments()
    for size in _chunks(samples):
        z2 = stream.normal((size, cd.p - 1)) ** 2
        form = z2 @ q
        for i, dof in enumerate(cd.design.multiplicities):
            if dof > 1:
                form = form + r[i] * stream.chisquare(dof - 1, size)
        ratio = z2 / form[:, None]
        gain = (2.0 * alpha * ratio - alpha**2 * ratio / form[:, None]) @ weights
        moments.add(1.0 - gain)
    bound = 2.0 / (cd.n - 1)
    if moments.mean < bound - 3.0 * moments.std_error:
        logger.warning(
            f"Limit {moments.mean} is below 2/(n-1) = {bound} beyond Monte Carlo error"
        )
    return RiskPoint(
        tau2=math.inf,
        r_risk=moments.mean,
        mc_std_error=moments.std_error,
        n_samples=samples,
        method="asymptotic",
    )


def xbar_improvement_alpha(design: DesignInput, spec: QuadraticFormSpec) -> float:
    """Return the largest alpha for which the Stein rule of ``spec`` improves on x-bar.

    alpha <= 2 (n - 3) min(c) sum_j b_j q_j / (max(c) sum_j b_j q_j^2), where c
    collects q_j^2 t_j^4 and r_i^2 s_i^4 over the groups with nu_i >= 2.
    """
    cd = _canonical(design)
    if cd.n <= 3:
        raise InvalidForNError(f"no Stein rule improves on x-bar for n = {cd.n}")
    spec.check_dimensions(cd.p)
    q, r = spec.q_array, spec.r_array
    scales = list(q**2 * cd.t2**2)
    repeated = cd.nu >= 2
    scales.extend(r[repeated] ** 2 * cd.s2[repeated] ** 2)
    ratio = min(scales) / max(scales)
    return 2.0 * (cd.n - 3) * ratio * float(np.dot(cd.b, q)) / float(np.dot(cd.b, q**2))


def graybill_deal_risk(design: DesignInput, tau2: float) -> float:
    """Return the R-risk of Graybill-Deal, tau2^2 sum b h t^-4 / sum b h."""
    _check_tau2(tau2)
    cd = _canonical(design)
    h = cd.h(tau2)
    return tau2**2 * float(np.dot(cd.b, h / cd.t2**2)) / float(np.dot(cd.b, h))


def _check_equal_uncertainty(n: int, s2: float, tau2: float) -> None:
    if n <= 3:
        raise InvalidForNError(f"equal-uncertainty risk needs n > 3, got n = {n}")
    if not (math.isfinite(s2) and s2 > 0):
        raise InvalidInputError(f"s2 must be positive, got {s2}")
    _check_tau2(tau2)


def equal_uncertainty_risk(n: int, s2: float, tau2: float, alpha: float) -> float:
    """Return the R-risk of w(v) = min(alpha / v, 1 / s^2) when every variance is s^2.

    R = 1 - (1 - tau2^2 / s^4) G_{n+1}(xi) - 2 alpha [1 - G_{n-1}(xi)] / (n - 1)
          + alpha^2 [1 - G_{n-3}(xi)] / ((n - 1)(n - 3)),

    with xi = alpha s^2 / (tau2 + s^2).
    """
    _check_equal_uncertainty(n, s2, tau2)
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    xi = alpha * s2 / (tau2 + s2)
    return (
        1.0
        - (1.0 - (tau2 / s2) ** 2) * chi2_cdf(n + 1, xi)
        - 2.0 * alpha * chi2_sf(n - 1, xi) / (n - 1)
        + alpha**2 * chi2_sf(n - 3, xi) / ((n - 1) * (n - 3))
    )


@dataclass(frozen=True)
class EqualUncertaintyWeight:
    """A weight as a function of v = sum_j y_j^2 for equal uncertainties.

    Args:
        name: Rule name.
        function: Vectorized map v -> w(v).
        kinks: Points where w is not differentiable.
    """

    name: str
    function: Callable[[np.ndarray], np.ndarray]
    kinks: Tuple[float, ...] = field(default_factory=tuple)


def stein_weight(
    n: int, s2: float, alpha: float, name: str = "stein"
) -> EqualUncertaintyWeight:
    """Return w(v) = min(alpha / v, 1 / s^2)."""

    def function(v: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.minimum(alpha / np.asarray(v, dtype=float), 1.0 / s2)

    return EqualUncertaintyWeight(name, function, (alpha * s2,))


def modified_hedges_weight(n: int, s2: float) -> EqualUncertaintyWeight:
    """Return w(v) = 1 / ([v - (n - 1) s^2]_+ / (n - 3) + s^2)."""
    if n <= 3:
        raise InvalidForNError(f"the modified Hedges rule needs n > 3, got n = {n}")

    def function(v: np.ndarray) -> np.ndarray:
        excess = np.maximum(np.asarray(v, dtype=float) - (n - 1) * s2, 0.0)
        return 1.0 / (excess / (n - 3) + s2)

    return EqualUncertaintyWeight("mh", function, ((n - 1) * s2,))


EQUAL_UNCERTAINTY_ALPHAS = {
    "dl": lambda n: n - 1.0,
    "delta1": lambda n: n - 3.0,
    "ml": lambda n: n + 1.0,
}  # type: Dict[str, Callable[[int], float]]


def equal_uncertainty_rule(name: str, n: int, s2: float) -> EqualUncertaintyWeight:
    """Return the equal-uncertainty weight of ``dl``, ``delta1``, ``ml`` or ``mh``."""
    if name == "mh":
        return modified_hedges_weight(n, s2)
    if name not in EQUAL_UNCERTAINTY_ALPHAS:
        raise InvalidInputError(
            f"unknown equal-uncertainty rule {name!r}; valid: dl, delta1, ml, mh"
        )
    return stein_weight(n, s2, EQUAL_UNCERTAINTY_ALPHAS[name](n), name)


def equal_uncertainty_risk_quad(
    n: int, s2: float, tau2: float, weight: EqualUncertaintyWeight
) -> float:
    """Return sigma^2 E[(w(sigma chi2_{n+1}) - 1 / sigma)^2] by quadrature.

    sigma = tau2 + s^2.
    """
    _check_equal_uncertainty(n, s2, tau2)
    sigma = tau2 + s2

    def integrand(x: float) -> float:
        gap = float(weight.function(np.array([sigma * x]))[0]) - 1.0 / sigma
        return sigma**2 * gap**2 * float(chi2_pdf(n + 1, x))

    cuts = sorted({kink / sigma for kink in weight.kinks if kink > 0})
    edges = [0.0] + cuts + [math.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(
            integrand, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-10
        )
        total += value
    return total


def equal_uncertainty_risk_mc(
    n: int,
    s2: float,
    tau2: float,
    weight: EqualUncertaintyWeight,
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> RiskPoint:
    """Return the equal-uncertainty R-risk by simulating v = sigma chi2_{n-1}.

    The loss is (w(v) - 1/sigma)^2 v sigma / (n - 1).
    """
    _check_equal_uncertainty(n, s2, tau2)
    sigma = tau2 + s2
    samples = _samples(n_samples)
    stream = rng_stream(seed)
    moments = RunningMoments()
    for size in _chunks(samples):
        v = sigma * stream.chisquare(n - 1, size)
        moments.add((weight.function(v) - 1.0 / sigma) ** 2 * v * sigma / (n - 1))
    return RiskPoint(
        tau2=tau2,
        r_risk=moments.mean,
        mc_std_error=moments.std_error,
        n_samples=samples,
        method="monte-carlo",
    )


def _closed_form_point(
    cd: CanonicalDesign, tau2: float, rule: WeightRule
) -> Optional[RiskPoint]:
    if isinstance(rule, SampleMeanRule):
        return RiskPoint(tau2=tau2, r_risk=1.0)
    if isinstance(rule, GraybillDealRule):
        return RiskPoint(tau2=tau2, r_risk=graybill_deal_risk(cd, tau2))
    return None


@log_execution_time
def risk_curve(
    design: DesignInput,
    rule: WeightRule,
    tau2_grid: Optional[Sequence[float]] = None,
    n_samples: Optional[int] = None,
    seed: int = 0,
    workers: int = DEFAULT_WORKERS,
) -> RiskCurve:
    """Return the R-risk of ``rule`` over a tau2 grid.

    Grid point k uses stream k of ``seed``, so the curve does not depend on
    ``workers``. The sample mean and Graybill-Deal use their closed forms.

    Args:
        design: The design or its canonical form.
        rule: The weight rule.
        tau2_grid: tau2 values; 0 plus 40 log-spaced values when omitted.
        n_samples: Draws per point.
        seed: Seed of the random streams.
        workers: Thread pool size.

    Returns:
        RiskCurve sorted by tau2.
    """
    cd = _canonical(design)
    if tau2_grid is None:
        grid = default_grid(cd.design)
    else:
        grid = np.asarray(tau2_grid, dtype=float)
    if grid.size == 0:
        raise InvalidInputError("the tau2 grid is empty")
    for tau2 in grid:
        _check_tau2(float(tau2))
    if workers < 1:
        raise InvalidInputError(f"workers must be positive, got {workers}")
    rule.check(cd)
    samples = _samples(n_samples)
    logger.info(f"Computing R-risk of {rule.name} on {grid.size} tau2 values")

    points = []  # type: List[RiskPoint]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = []
        for index, tau2 in enumerate(grid):
            closed = _closed_form_point(cd, float(tau2), rule)
            if closed is not None:
                points.append(closed)
                continue
            futures.append(
                executor.submit(r_risk_mc, cd, float(tau2), rule, samples, seed, index)
            )
        points.extend(future.result() for future in futures)
    return RiskCurve(rule=rule.name, design=cd.design, seed=seed, points=points)


def supremum(curve: RiskCurve, limit: Optional[RiskPoint] = None) -> RiskPoint:
    """Return the largest point of ``curve`` and of the large-tau2 ``limit``."""
    candidates = list(curve.points) + ([limit] if limit is not None else [])
    return max(candidates, key=lambda point: point.r_risk)


FIGURE1_RULES = ("dl", "mh", "delta1", "ml")


@dataclass(frozen=True)
class RiskTable:
    """Columns of R-risks over a common tau2 grid.

    Args:
        columns: Column names, ``tau2`` first.
        rows: One tuple of values per tau2.
    """

    columns: Tuple[str, ...]
    rows: Tuple[Tuple[float, ...], ...]

    def column(self, name: str) -> np.ndarray:
        """Return the column called ``name``."""
        index = self.columns.index(name)
        return np.array([row[index] for row in self.rows])


@log_execution_time
def figure1_dataset(
    n: int, s2: float = 1.0, tau2_grid: Optional[Sequence[float]] = None
) -> RiskTable:
    """Return the equal-uncertainty R-risks of DL, modified Hedges, delta1 and ML.

    The DL, delta1 and ML columns use the closed form; modified Hedges uses
    quadrature. The last column is the minimax bound 2 / (n - 1).
    """
    if tau2_grid is None:
        grid = np.concatenate(([0.0], np.geomspace(1e-2 * s2, 1e2 * s2, 60)))
    else:
        grid = np.asarray(tau2_grid, dtype=float)
    bound = minimax_bound(n)
    weights = {name: equal_uncertainty_rule(name, n, s2) for name in FIGURE1_RULES}
    rows = []
    for tau2 in grid:
        row = [float(tau2)]
        for name in FIGURE1_RULES:
            if name == "mh":
                risk = equal_uncertainty_risk_quad(n, s2, float(tau2), weights[name])
                row.append(risk)
            else:
                alpha = EQUAL_UNCERTAINTY_ALPHAS[name](n)
                row.append(equal_uncertainty_risk(n, s2, float(tau2), alpha))
        row.append(bound)
        rows.append(tuple(row))
    logger.info(f"Equal-uncertainty risk table for n={n}: {len(rows)} rows")
    return RiskTable(("tau2",) + FIGURE1_RULES + ("minimax",), tuple(rows))
