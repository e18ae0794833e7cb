"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for the canonical representation of grouped studies:
the polynomial Q, its roots t_j^2, the matrix A, the coefficients b_j and the
transformed variables y_j, together with the identities they satisfy.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger
from numpy.polynomial import Polynomial

from meta_risk_insights.data_classes import (
    CanonicalDesign,
    CanonicalForm,
    Design,
    GroupedData,
)
from meta_risk_insights.exceptions import NumericalFailureError, UnsupportedInputError
from meta_risk_insights.numerics import RootBracket, solve_bracketed

ROOT_TOLERANCE = 1e-13
CONDITIONING_TOLERANCE = 1e-14
B_AGREEMENT_TOLERANCE = 1e-8

DesignLike = Union[Design, GroupedData]


@dataclass(frozen=True)
class MeanDecomposition:
    """x-tilde computed two ways for one tau2.

    Args:
        tau2: The heterogeneity variance.
        direct: sum_i nu_i x_i / (tau2 + s_i^2) normalized.
        representation: x-bar minus the per-root terms.
        grand_mean: x-bar.
        terms: sqrt(b_j) y_j / (tau2 + t_j^2).
    """

    tau2: float
    direct: float
    representation: float
    grand_mean: float
    terms: Tuple[float, ...]

    @property
    def residual(self) -> float:
        """Return |direct - representation|."""
        return abs(self.direct - self.representation)


def _design_of(data: DesignLike) -> Design:
    design = data if isinstance(data, Design) else data.design
    if design.p < 2:
        raise UnsupportedInputError(
            "the canonical representation needs at least two distinct variances"
        )
    return design


def q_polynomial(data: DesignLike) -> Polynomial:
    """Return Q(v) = sum_i nu_i prod_{k != i} (v + s_k^2).

    Args:
        data: A design or grouped data with p >= 2.

    Returns:
        Polynomial of degree p - 1 with leading coefficient n.
    """
    design = _design_of(data)
    q = Polynomial([0.0])
    for i, nu in enumerate(design.multiplicities):
        others = [-s2 for k, s2 in enumerate(design.group_variances) if k != i]
        q = q + nu * Polynomial.fromroots(others)
    return q


def m_polynomial(data: DesignLike) -> Polynomial:
    """Return M(v) = prod_i (v + s_i^2) over the distinct variances."""
    design = _design_of(data)
    return Polynomial.fromroots([-s2 for s2 in design.group_variances])


def _partial_fraction(design: Design, t: float) -> float:
    """Return Q(-t) / M(-t) = sum_i nu_i / (s_i^2 - t)."""
    return float(np.sum(design.nu / (design.s2 - t)))


def _isolate_root(design: Design, left: float, right: float) -> float:
    """Return the root of the partial fraction inside (left, right).

    The partial fraction increases from -inf to +inf on the interval, so the
    bracket only has to be pulled towards the poles until it changes sign.
    """
    gap = right - left
    offset = 1e-3
    while True:
        lo = left + offset * gap
        hi = right - offset * gap
        if _partial_fraction(design, lo) < 0 < _partial_fraction(design, hi):
            break
        offset /= 16.0
        if offset < 1e-17:
            raise NumericalFailureError(
                f"could not bracket the root of Q in ({left}, {right})"
            )
    logger.debug(f"Q root bracket [{lo}, {hi}]")
    return solve_bracketed(
        lambda t: _partial_fraction(design, t), RootBracket(lo, hi, ROOT_TOLERANCE)
    )


def find_roots(data: DesignLike) -> np.ndarray:
    """Return the p - 1 values t_j^2 with Q(-t_j^2) = 0, ascending.

    Exactly one root lies between each pair of adjacent group variances.
    """
    design = _design_of(data)
    s2 = design.group_variances
    return np.array(
        [_isolate_root(design, s2[i], s2[i + 1]) for i in range(design.p - 1)]
    )


def q_derivative_over_m(design: Design, v: np.ndarray) -> np.ndarray:
    """Return Q'(v) / M(v) by the product rule.

    Q'/M = (sum_k 1/(v + s_k^2)) (sum_i nu_i/(v + s_i^2)) - sum_i nu_i/(v + s_i^2)^2.
    """
    v = np.asarray(v, dtype=float)[..., None]
    inverse = 1.0 / (v + design.s2)
    return inverse.sum(axis=-1) * (design.nu * inverse).sum(axis=-1) - (
        design.nu * inverse**2
    ).sum(axis=-1)


def a_matrix(data: DesignLike, t2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return the matrix A and the coefficients b for the roots ``t2``.

    A_ij = nu_i b_j / (s_i^2 - t_j^2) with b_j = -M(-t_j^2) / Q'(-t_j^2).

    Args:
        data: A design or grouped data with p >= 2.
        t2: The roots from :func:`find_roots`.

    Returns:
        Tuple of A (p x (p - 1)) and b (p - 1).
    """
    design = _design_of(data)
    t2 = np.asarray(t2, dtype=float)
    differences = design.s2[:, None] - t2[None, :]
    if np.any(np.abs(differences) <= CONDITIONING_TOLERANCE * design.s2.max()):
        raise NumericalFailureError("a root coincides with a group variance")
    b = -1.0 / q_derivative_over_m(design, -t2)
    if np.any(b <= 0):
        raise NumericalFailureError("non-positive b coefficient")
    a = design.nu[:, None] * b[None, :] / differences
    b_from_a = np.sum(a**2 / design.nu[:, None], axis=0)
    if np.any(np.abs(b_from_a - b) > B_AGREEMENT_TOLERANCE * b):
        raise NumericalFailureError(f"b coefficients disagree: {b} vs {b_from_a}")
    return a, b


@functools.lru_cache(maxsize=256)
def canonical_design(design: Design) -> CanonicalDesign:
    """Return the canonical design (roots, A and b) of ``design``."""
    t2 = find_roots(design)
    a, b = a_matrix(design, t2)
    logger.debug(f"canonical design for p={design.p}, n={design.n}: t2={t2}")
    return CanonicalDesign(design=design, t2=t2, a=a, b=b)


def transform(grouped: GroupedData) -> CanonicalForm:
    """Return the canonical form of ``grouped``.

    y_j = sum_i A_ij x_i / sqrt(b_j), where x_i are the group means.
    """
    canonical = canonical_design(_design_of(grouped))
    y = canonical.a.T @ grouped.means / canonical.sqrt_b
    return CanonicalForm(grouped=grouped, canonical=canonical, y=y)


def weighted_mean_decomposition(cf: CanonicalForm, tau2: float) -> MeanDecomposition:
    """Return x-tilde for ``tau2`` directly and through the canonical variables."""
    design = cf.canonical
    weights = design.nu / (tau2 + design.s2)
    direct = float(np.dot(weights, cf.means) / weights.sum())
    terms = design.sqrt_b * cf.y * design.h(tau2)
    representation = cf.grand_mean - float(terms.sum())
    return MeanDecomposition(
        tau2=tau2,
        direct=direct,
        representation=representation,
        grand_mean=cf.grand_mean,
        terms=tuple(terms),
    )


def variance_gap(cf: Union[CanonicalForm, CanonicalDesign], tau2: float) -> float:
    """Return Var(x-bar) - Var(x-tilde) = sum_j b_j / (tau2 + t_j^2)."""
    design = cf.canonical if isinstance(cf, CanonicalForm) else cf
    return float(np.sum(design.b * design.h(tau2)))


def variance_gap_direct(
    cf: Union[CanonicalForm, CanonicalDesign], tau2: float
) -> float:
    """Return (tau2 + s^2) / n - [sum_i nu_i / (tau2 + s_i^2)]^-1."""
    design = cf.canonical if isinstance(cf, CanonicalForm) else cf
    return (tau2 + design.design.s2_bar) / design.n - 1.0 / design.group_precision(tau2)


def quadratic_form_identity_check(
    cf: CanonicalForm, tau2: float, x: Optional[np.ndarray] = None
) -> float:
    """Return the residual of sum_i nu_i (x_i - x~)^2/(tau2 + s_i^2) = sum_j y_j^2 h_j.

    Args:
        cf: Canonical form, used for its design.
        tau2: Heterogeneity variance.
        x: Group means to use instead of those of ``cf``.
    """
    design = cf.canonical
    means = cf.means if x is None else np.asarray(x, dtype=float)
    y = cf.y if x is None else design.a.T @ means / design.sqrt_b
    weights = design.nu / (tau2 + design.s2)
    x_tilde = np.dot(weights, means) / weights.sum()
    lhs = float(np.sum(weights * (means - x_tilde) ** 2))
    rhs = float(np.sum(y**2 * design.h(tau2)))
    return abs(lhs - rhs)


def column_sum_residual(design: CanonicalDesign) -> float:
    """Return max_j |sum_i A_ij| / ||A_.j||."""
    norms = np.linalg.norm(design.a, axis=0)
    return float(np.max(np.abs(design.a.sum(axis=0)) / norms))


def row_sum_residual(design: CanonicalDesign) -> float:
    """Return the residual of sum_j A_ij = nu_i (s_i^2 - s^2) / n over max s_i^2."""
    expected = design.nu * (design.s2 - design.design.s2_bar) / design.n
    return float(np.max(np.abs(design.a.sum(axis=1) - expected)) / design.s2.max())


def diagonality_residual(design: CanonicalDesign) -> float:
    """Return the relative deviation of A'J^-1 A and A'SA from diag(b), diag(b t2)."""
    a_scaled = design.a / design.nu[:, None]
    gram = design.a.T @ a_scaled
    gram_s = design.a.T @ (a_scaled * design.s2[:, None])
    first = np.abs(gram - np.diag(design.b)) / design.b.max()
    bt2 = design.b * design.t2
    second = np.abs(gram_s - np.diag(bt2)) / bt2.max()
    return float(max(first.max(), second.max()))


def b_residual(design: CanonicalDesign) -> float:
    """Return the relative spread of the three expressions for b_j."""
    from_polynomial = -1.0 / q_derivative_over_m(design.design, -design.t2)
    from_a = np.sum(design.a**2 / design.nu[:, None], axis=0)
    weighted = design.s2[:, None] * design.a**2 / design.nu[:, None]
    from_s = np.sum(weighted, axis=0) / design.t2
    spread = np.maximum(
        np.abs(from_polynomial - from_a), np.abs(from_polynomial - from_s)
    )
    return float(np.max(spread / from_polynomial))


def projection_residual(design: CanonicalDesign) -> float:
    """Return the residual of A (A'J^-1 A)^-1 A' = J - J e e' J / n over max nu_i."""
    lhs = design.a @ np.diag(1.0 / design.b) @ design.a.T
    rhs = np.diag(design.nu) - np.outer(design.nu, design.nu) / design.n
    return float(np.max(np.abs(lhs - rhs)) / design.nu.max())


def covariance_residual(design: CanonicalDesign, tau2: float) -> float:
    """Return the residual of A'J^-1 C^-1 J^-1 A = diag(b h) + W (b h)(b h)'.

    C = tau2 J^-1 + S is the covariance of the group means.
    """
    bh = design.b * design.h(tau2)
    lhs = design.a.T @ (design.a / (design.nu * (tau2 + design.s2))[:, None])
    rhs = np.diag(bh) + design.group_precision(tau2) * np.outer(bh, bh)
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))


def variance_gap_residual(design: CanonicalDesign, tau2: float) -> float:
    """Return the relative residual between the two variance gap formulas."""
    gap = variance_gap(design, tau2)
    return abs(gap - variance_gap_direct(design, tau2)) / gap


def identity_residuals(cf: CanonicalForm, tau2: float = 1.0) -> Dict[str, float]:
    """Return every identity residual of ``cf`` at ``tau2``, keyed by identity."""
    design = cf.canonical
    decomposition = weighted_mean_decomposition(cf, tau2)
    scale = max(float(np.max(np.abs(cf.means))), math.sqrt(design.s2.max()))
    quadratic_scale = max(float(np.sum(cf.y**2 * design.h(tau2))), 1.0)
    return {
        "column_sums": column_sum_residual(design),
        "row_sums": row_sum_residual(design),
        "diagonality": diagonality_residual(design),
        "projection": projection_residual(design),
        "variance_gap": variance_gap_residual(design, tau2),
        "b_coefficients": b_residual(design),
        "quadratic_form": quadratic_form_identity_check(cf, tau2) / quadratic_scale,
        "covariance": covariance_residual(design, tau2),
        "representation": decomposition.residual / scale,
    }


def canonical_dump(cf: CanonicalForm, tau2: float = 1.0) -> Dict[str, object]:
    """Return a JSON-ready description of ``cf`` with its identity residuals."""
    design = cf.canonical
    return {
        "group_variances": list(cf.grouped.group_variances),
        "multiplicities": list(cf.grouped.multiplicities),
        "group_means": list(cf.grouped.group_means),
        "within_variances": list(cf.grouped.within_variances),
        "q_polynomial": q_polynomial(cf.grouped).coef.tolist(),
        "t2": design.t2.tolist(),
        "A": design.a.tolist(),
        "b": design.b.tolist(),
        "y": cf.y.tolist(),
        "residual_tau2": tau2,
        "residuals": identity_residuals(cf, tau2),
    }
