"""Copyright (c) 2023, Aydin Abdi.

This file contains the data classes used in the meta-risk-insights package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from meta_risk_insights.exceptions import InvalidInputError

DEFAULT_GROUPING_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Study:
    """Represents a single study.

    Args:
        effect: Reported treatment effect x_i.
        std_error: Reported standard error s_i, treated as known.
        group_id: Optional label forcing the study into a variance group.
    """

    effect: float
    std_error: float
    group_id: Optional[str] = None

    def __post_init__(self) -> None:
        """Validate the study values."""
        if not math.isfinite(self.effect):
            raise InvalidInputError(f"effect must be finite, got {self.effect!r}")
        if not (math.isfinite(self.std_error) and self.std_error > 0):
            raise InvalidInputError(
                f"std_error must be positive and finite, got {self.std_error!r}"
            )

    @property
    def variance(self) -> float:
        """Return s_i squared."""
        return self.std_error**2


@dataclass(frozen=True)
class StudySet:
    """Represents an ordered collection of studies.

    Args:
        studies: The studies, in input order.
        grouping_tolerance: Relative tolerance for declaring two variances equal.
    """

    studies: Tuple[Study, ...]
    grouping_tolerance: float = DEFAULT_GROUPING_TOLERANCE

    def __post_init__(self) -> None:
        """Validate the tolerance and freeze the study list."""
        object.__setattr__(self, "studies", tuple(self.studies))
        if not self.grouping_tolerance >= 0:
            raise InvalidInputError("grouping_tolerance must be non-negative")

    @property
    def n(self) -> int:
        """Return the number of studies."""
        return len(self.studies)

    @property
    def effects(self) -> np.ndarray:
        """Return the effects as an array."""
        return np.array([study.effect for study in self.studies], dtype=float)

    @property
    def variances(self) -> np.ndarray:
        """Return the reported variances as an array."""
        return np.array([study.variance for study in self.studies], dtype=float)

    def shifted(self, constant: float) -> StudySet:
        """Return a copy with ``constant`` added to every effect."""
        return StudySet(
            tuple(
                Study(study.effect + constant, study.std_error, study.group_id)
                for study in self.studies
            ),
            self.grouping_tolerance,
        )

    def scaled(self, factor: float) -> StudySet:
        """Return a copy with effects and standard errors multiplied by ``factor``."""
        return StudySet(
            tuple(
                Study(
                    study.effect * factor, study.std_error * abs(factor), study.group_id
                )
                for study in self.studies
            ),
            self.grouping_tolerance,
        )


@dataclass(frozen=True)
class Design:
    """Distinct variances and their multiplicities, without any data.

    Args:
        group_variances: Distinct s_i squared, strictly increasing.
        multiplicities: Number of studies nu_i sharing each variance.
    """

    group_variances: Tuple[float, ...]
    multiplicities: Tuple[int, ...]

    def __post_init__(self) -> None:
        """Validate the design."""
        object.__setattr__(
            self, "group_variances", tuple(float(v) for v in self.group_variances)
        )
        object.__setattr__(
            self, "multiplicities", tuple(int(m) for m in self.multiplicities)
        )
        if len(self.group_variances) != len(self.multiplicities):
            raise InvalidInputError(
                "group_variances and multiplicities differ in length"
            )
        if not self.group_variances:
            raise InvalidInputError("a design needs at least one group")
        if any(not (math.isfinite(v) and v > 0) for v in self.group_variances):
            raise InvalidInputError("group variances must be positive and finite")
        if any(m < 1 for m in self.multiplicities):
            raise InvalidInputError("multiplicities must be at least 1")
        if any(a >= b for a, b in zip(self.group_variances, self.group_variances[1:])):
            raise InvalidInputError("group variances must be strictly increasing")

    @property
    def p(self) -> int:
        """Return the number of distinct variances."""
        return len(self.group_variances)

    @property
    def n(self) -> int:
        """Return the number of studies."""
        return sum(self.multiplicities)

    @property
    def s2(self) -> np.ndarray:
        """Return the group variances as an array."""
        return np.asarray(self.group_variances, dtype=float)

    @property
    def nu(self) -> np.ndarray:
        """Return the multiplicities as a float array."""
        return np.asarray(self.multiplicities, dtype=float)

    @property
    def s2_bar(self) -> float:
        """Return s^2 = sum nu_i s_i^2 / n."""
        return float(np.dot(self.nu, self.s2) / self.n)


@dataclass(frozen=True)
class GroupedData:
    """Studies reduced to their sufficient statistics per distinct variance.

    Args:
        group_variances: Distinct s_i squared, ascending.
        multiplicities: nu_i, summing to n.
        group_means: Mean effect of each group.
        within_variances: Unbiased sample variance u_i^2 of each group, 0 if nu_i = 1.
    """

    group_variances: Tuple[float, ...]
    multiplicities: Tuple[int, ...]
    group_means: Tuple[float, ...]
    within_variances: Tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate the reduction."""
        design = Design(self.group_variances, self.multiplicities)
        object.__setattr__(self, "group_variances", design.group_variances)
        object.__setattr__(self, "multiplicities", design.multiplicities)
        means = tuple(float(x) for x in self.group_means)
        object.__setattr__(self, "group_means", means)
        object.__setattr__(
            self, "within_variances", tuple(float(u) for u in self.within_variances)
        )
        if not (len(self.group_means) == len(self.within_variances) == design.p):
            raise InvalidInputError(
                "group statistics do not match the number of groups"
            )
        for nu, u2 in zip(self.multiplicities, self.within_variances):
            if u2 < 0 or (nu == 1 and u2 != 0.0):
                raise InvalidInputError(
                    "within-group variance must be non-negative and 0 for singletons"
                )

    @property
    def design(self) -> Design:
        """Return the data-free design."""
        return Design(self.group_variances, self.multiplicities)

    @property
    def p(self) -> int:
        """Return the number of groups."""
        return len(self.group_variances)

    @property
    def n(self) -> int:
        """Return the number of studies."""
        return sum(self.multiplicities)

    @property
    def means(self) -> np.ndarray:
        """Return the group means as an array."""
        return np.asarray(self.group_means, dtype=float)

    @property
    def u2(self) -> np.ndarray:
        """Return the within-group variances as an array."""
        return np.asarray(self.within_variances, dtype=float)

    @property
    def grand_mean(self) -> float:
        """Return the sample mean of all studies, sum nu_i x_i / n."""
        return float(np.dot(self.design.nu, self.means) / self.n)


@dataclass(frozen=True)
class GenerativeConfig:
    """Parameters of the random-effects model used for simulation.

    Args:
        mu: Common mean.
        tau2: Heterogeneity variance.
        group_variances: Distinct s_i squared.
        multiplicities: Studies per variance.
        seed: Seed of the random stream.
    """

    mu: float
    tau2: float
    group_variances: Tuple[float, ...]
    multiplicities: Tuple[int, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate the configuration."""
        if not (math.isfinite(self.tau2) and self.tau2 >= 0):
            raise InvalidInputError("tau2 must be non-negative and finite")
        if not math.isfinite(self.mu):
            raise InvalidInputError("mu must be finite")
        object.__setattr__(self, "group_variances", tuple(self.group_variances))
        object.__setattr__(self, "multiplicities", tuple(self.multiplicities))
        self.design  # validates

    @property
    def design(self) -> Design:
        """Return the design of the simulated studies."""
        return Design(self.group_variances, self.multiplicities)


@dataclass(frozen=True)
class QuadraticFormSpec:
    """Coefficients of q = sum_j q_j y_j^2 + sum_i (nu_i - 1) r_i u_i^2.

    Args:
        q: p - 1 positive coefficients on y_j^2.
        r: p positive coefficients on (nu_i - 1) u_i^2.
    """

    q: Tuple[float, ...]
    r: Tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate the coefficients."""
        object.__setattr__(self, "q", tuple(float(c) for c in self.q))
        object.__setattr__(self, "r", tuple(float(c) for c in self.r))
        if any(not (math.isfinite(c) and c > 0) for c in self.q + self.r):
            raise InvalidInputError("quadratic form coefficients must be positive")

    @property
    def q_array(self) -> np.ndarray:
        """Return q as an array."""
        return np.asarray(self.q, dtype=float)

    @property
    def r_array(self) -> np.ndarray:
        """Return r as an array."""
        return np.asarray(self.r, dtype=float)

    def check_dimensions(self, p: int) -> None:
        """Raise if the coefficients do not fit a design with ``p`` groups."""
        if len(self.q) != p - 1 or len(self.r) != p:
            raise InvalidInputError(
                f"quadratic form needs {p - 1} q and {p} r coefficients, "
                f"got {len(self.q)} and {len(self.r)}"
            )

    @classmethod
    def equal(cls, p: int) -> QuadraticFormSpec:
        """Return the form with q_j = r_i = 1 (the form of q-infinity)."""
        return cls((1.0,) * (p - 1), (1.0,) * p)

    @classmethod
    def dersimonian_laird(cls, canonical: CanonicalDesign) -> QuadraticFormSpec:
        """Return the form with q_j = t_j^-2 and r_i = s_i^-2 (the form of q0)."""
        return cls(tuple(1.0 / canonical.t2), tuple(1.0 / canonical.s2))

    @classmethod
    def inverse_b(cls, canonical: CanonicalDesign) -> QuadraticFormSpec:
        """Return the form with q_j = 1 / b_j and r_i = s_i^-2."""
        return cls(tuple(1.0 / canonical.b), tuple(1.0 / canonical.s2))


@dataclass(frozen=True)
class TauEstimate:
    """An estimate of the heterogeneity variance.

    Args:
        value: Estimate truncated at zero.
        raw_value: Estimate before truncation.
        method: Name of the estimator.
        iterations: Number of iterations, 0 for closed forms.
    """

    value: float
    raw_value: float
    method: str
    iterations: int = 0

    def __post_init__(self) -> None:
        """Validate non-negativity."""
        if not self.value >= 0:
            raise InvalidInputError(
                f"tau2 estimate must be non-negative, got {self.value}"
            )


@dataclass(frozen=True)
class MuEstimate:
    """An estimate of the common mean with the weights that produced it.

    Args:
        value: The estimate delta.
        rule: Name of the weight rule.
        weights_w: Shrinkage weights w_j on the canonical variables.
        weights_omega: Normalized weights on the group means.
        tau_estimate: The plug-in tau2 estimate, for plug-in rules.
        induced_tau2: tau2 implied by the weights, for non plug-in rules.
        single_group: True when all studies share one variance.
    """

    value: float
    rule: str
    weights_w: Tuple[float, ...]
    weights_omega: Tuple[float, ...]
    tau_estimate: Optional[TauEstimate] = None
    induced_tau2: Optional[float] = None
    single_group: bool = False


@dataclass(frozen=True)
class PriorSpec:
    """A discrete prior on tau2.

    Args:
        nodes: tau2 support points, non-negative.
        weights: Prior masses, non-negative, normalized to 1.
    """

    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate and normalize the prior."""
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.size == 0 or nodes.shape != weights.shape:
            raise InvalidInputError(
                "a prior needs matching, non-empty nodes and weights"
            )
        if np.any(nodes < 0) or not np.all(np.isfinite(nodes)):
            raise InvalidInputError("prior nodes must be non-negative and finite")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise InvalidInputError(
                "prior weights must be non-negative with positive sum"
            )
        object.__setattr__(self, "nodes", tuple(nodes.tolist()))
        object.__setattr__(self, "weights", tuple((weights / weights.sum()).tolist()))

    @classmethod
    def point_mass(cls, tau2: float) -> PriorSpec:
        """Return the prior concentrated at ``tau2``."""
        return cls((tau2,), (1.0,))

    @classmethod
    def log_uniform(
        cls, lower: float, upper: float, num_nodes: int, include_zero: bool = True
    ) -> PriorSpec:
        """Return equal masses on a log-spaced grid, optionally with a node at 0."""
        nodes = np.geomspace(lower, upper, num_nodes)
        if include_zero:
            nodes = np.concatenate(([0.0], nodes))
        return cls(tuple(nodes), tuple(np.ones_like(nodes)))

    @classmethod
    def least_favorable(
        cls, s2_bar: float, num_nodes: int = 400, include_zero: bool = True
    ) -> PriorSpec:
        """Return d tau2 / (tau2 + s^2) discretised on the default log grid.

        The grid spans [1e-6 s^2, 1e4 s^2]; masses are trapezoid widths times the
        density, so the node at 0 receives half of the first interval.
        """
        nodes = np.geomspace(1e-6 * s2_bar, 1e4 * s2_bar, num_nodes)
        if include_zero:
            nodes = np.concatenate(([0.0], nodes))
        widths = np.zeros_like(nodes)
        gaps = np.diff(nodes)
        widths[:-1] += gaps / 2
        widths[1:] += gaps / 2
        return cls(tuple(nodes), tuple(widths / (nodes + s2_bar)))

    @property
    def node_array(self) -> np.ndarray:
        """Return the nodes as an array."""
        return np.asarray(self.nodes, dtype=float)

    @property
    def weight_array(self) -> np.ndarray:
        """Return the masses as an array."""
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class RiskPoint:
    """R-risk of a rule at one heterogeneity variance.

    Args:
        tau2: Heterogeneity variance, ``inf`` for limits.
        r_risk: The R-risk.
        mc_std_error: Monte Carlo standard error, 0 for closed forms.
        n_samples: Number of Monte Carlo samples, 0 for closed forms.
        method: One of ``monte-carlo``, ``closed-form`` or ``asymptotic``.
    """

    tau2: float
    r_risk: float
    mc_std_error: float = 0.0
    n_samples: int = 0
    method: str = "closed-form"

    def __post_init__(self) -> None:
        """Validate the point."""
        if self.method not in ("monte-carlo", "closed-form", "asymptotic"):
            raise InvalidInputError(f"unknown risk method {self.method!r}")
        if self.method == "closed-form" and self.mc_std_error != 0.0:
            raise InvalidInputError("closed-form risk points carry no standard error")


@dataclass
class RiskCurve:
    """R-risk of one rule over a grid of heterogeneity variances.

    Args:
        rule: Name of the weight rule.
        design: The design the risk was computed for.
        seed: Seed of the Monte Carlo streams.
        points: Points sorted by tau2.
    """

    rule: str
    design: Design
    seed: int
    points: List[RiskPoint] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Sort the points by tau2."""
        self.points = sorted(self.points, key=lambda point: point.tau2)

    @property
    def tau2(self) -> np.ndarray:
        """Return the tau2 grid."""
        return np.array([point.tau2 for point in self.points])

    @property
    def r_risk(self) -> np.ndarray:
        """Return the R-risk values."""
        return np.array([point.r_risk for point in self.points])

    def rows(self, minimax: Optional[float] = None) -> List[Sequence[object]]:
        """Return CSV rows: tau2, r_risk, mc_se, method and optionally the bound."""
        rows = []  # type: List[Sequence[object]]
        for point in self.points:
            row = [point.tau2, point.r_risk, point.mc_std_error, point.method]
            if minimax is not None:
                row.append(minimax)
            rows.append(row)
        return rows


@dataclass(frozen=True, eq=False)
class CanonicalDesign:
    """The data-free part of the canonical representation.

    Args:
        design: Distinct variances and multiplicities, p >= 2.
        t2: The p - 1 roots t_j^2, ascending.
        a: The p x (p - 1) matrix A.
        b: The p - 1 coefficients b_j.
    """

    design: Design
    t2: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def p(self) -> int:
        """Return the number of groups."""
        return self.design.p

    @property
    def n(self) -> int:
        """Return the number of studies."""
        return self.design.n

    @property
    def s2(self) -> np.ndarray:
        """Return the group variances."""
        return self.design.s2

    @property
    def nu(self) -> np.ndarray:
        """Return the multiplicities."""
        return self.design.nu

    @property
    def sqrt_b(self) -> np.ndarray:
        """Return the positive square roots of b."""
        return np.sqrt(self.b)

    @property
    def within_dof(self) -> np.ndarray:
        """Return nu_i - 1."""
        return self.nu - 1.0

    def h(self, tau2: float) -> np.ndarray:
        """Return the oracle weights 1 / (tau2 + t_j^2)."""
        return 1.0 / (tau2 + self.t2)

    def group_precision(self, tau2: float) -> float:
        """Return W = sum_i nu_i / (tau2 + s_i^2), the inverse of Var(x-tilde)."""
        return float(np.sum(self.nu / (tau2 + self.s2)))


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """Canonical representation of observed grouped data.

    Args:
        grouped: The grouped studies.
        canonical: The canonical design of ``grouped``.
        y: The p - 1 transformed variables y_j.
    """

    grouped: GroupedData
    canonical: CanonicalDesign
    y: np.ndarray

    @property
    def t2(self) -> np.ndarray:
        """Return the roots t_j^2."""
        return self.canonical.t2

    @property
    def a(self) -> np.ndarray:
        """Return the matrix A."""
        return self.canonical.a

    @property
    def b(self) -> np.ndarray:
        """Return the coefficients b_j."""
        return self.canonical.b

    @property
    def u2(self) -> np.ndarray:
        """Return the within-group variances u_i^2."""
        return self.grouped.u2

    @property
    def means(self) -> np.ndarray:
        """Return the group means x_i."""
        return self.grouped.means

    @property
    def grand_mean(self) -> float:
        """Return x-bar."""
        return self.grouped.grand_mean

    @property
    def n(self) -> int:
        """Return the number of studies."""
        return self.grouped.n

    @property
    def p(self) -> int:
        """Return the number of groups."""
        return self.grouped.p

    @property
    def q_infinity(self) -> float:
        """Return q-infinity = sum_j y_j^2 + sum_i (nu_i - 1) u_i^2."""
        return float(
            np.sum(self.y**2) + np.dot(self.canonical.within_dof, self.u2)
        )

    @property
    def q_zero(self) -> float:
        """Return q0 = sum_j y_j^2 / t_j^2 + sum_i (nu_i - 1) u_i^2 / s_i^2."""
        return float(
            np.sum(self.y**2 / self.t2)
            + np.dot(self.canonical.within_dof, self.u2 / self.canonical.s2)
        )
