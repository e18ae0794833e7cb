"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for the shared numerical kernels: bracketed root
finding, chi-square distribution functions, reproducible random streams and
log-sum-exp posterior weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import integrate, optimize, special

from meta_risk_insights.exceptions import InvalidInputError, NumericalFailureError

ArrayLike = Union[float, np.ndarray]

# Sum of squares is used for chi-square draws up to this many degrees of freedom.
SMALL_DOF = 4


@dataclass(frozen=True)
class RootBracket:
    """An interval on which a continuous function changes sign.

    Args:
        lo: Left end point.
        hi: Right end point.
        tol: Relative tolerance on the root.
    """

    lo: float
    hi: float
    tol: float = 1e-12

    def __post_init__(self) -> None:
        """Validate the interval."""
        finite = math.isfinite(self.lo) and math.isfinite(self.hi)
        if not (finite and self.lo < self.hi):
            raise InvalidInputError(f"invalid bracket [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise InvalidInputError("bracket tolerance must be positive")


def solve_bracketed(function: Callable[[float], float], bracket: RootBracket) -> float:
    """Find a root of ``function`` inside ``bracket``.

    Brent's method keeps the iterate inside the bracket and falls back to
    bisection steps, so it converges whenever the end points differ in sign.

    Args:
        function: Continuous scalar function.
        bracket: Interval with f(lo) * f(hi) <= 0.

    Returns:
        The root, always within [lo, hi].
    """
    f_lo = function(bracket.lo)
    f_hi = function(bracket.hi)
    if f_lo == 0:
        return bracket.lo
    if f_hi == 0:
        return bracket.hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise InvalidInputError(
            f"no sign change on [{bracket.lo}, {bracket.hi}]: f = ({f_lo}, {f_hi})"
        )
    scale = max(abs(bracket.lo), abs(bracket.hi), np.finfo(float).tiny)
    try:
        root = optimize.brentq(
            function,
            bracket.lo,
            bracket.hi,
            xtol=bracket.tol * scale * 1e-3,
            rtol=max(bracket.tol, 4 * np.finfo(float).eps),
            maxiter=1000,
        )
    except RuntimeError as error:
        raise NumericalFailureError(f"root finding failed: {error}") from error
    return float(min(max(root, bracket.lo), bracket.hi))


def chi2_cdf(k: int, x: ArrayLike) -> ArrayLike:
    """Return G_k(x), the chi-square distribution function with k degrees of freedom.

    Args:
        k: Degrees of freedom, at least 1.
        x: Non-negative argument, scalar or array; ``inf`` gives 1.

    Returns:
        The regularized lower incomplete gamma P(k/2, x/2).
    """
    if k < 1:
        raise InvalidInputError(f"degrees of freedom must be at least 1, got {k}")
    value = special.gammainc(k / 2.0, np.maximum(np.asarray(x, dtype=float), 0.0) / 2.0)
    return float(value) if np.ndim(value) == 0 else value


def chi2_sf(k: int, x: ArrayLike) -> ArrayLike:
    """Return 1 - G_k(x) without cancellation for large x."""
    if k < 1:
        raise InvalidInputError(f"degrees of freedom must be at least 1, got {k}")
    half = np.maximum(np.asarray(x, dtype=float), 0.0) / 2.0
    value = special.gammaincc(k / 2.0, half)
    return float(value) if np.ndim(value) == 0 else value


def chi2_pdf(k: int, x: ArrayLike) -> ArrayLike:
    """Return the chi-square density with k degrees of freedom."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_pdf = special.xlogy(k / 2.0 - 1.0, x) - x / 2.0
        log_pdf = log_pdf - (k / 2.0) * math.log(2.0) - special.gammaln(k / 2.0)
        value = np.where(x > 0, np.exp(log_pdf), 0.0)
    return float(value) if np.ndim(value) == 0 else value


class RandomStream:
    """Reproducible source of normal and chi-square draws.

    Every (seed, stream_id) pair selects an independent Philox key, so draws do
    not depend on which worker consumes the stream.
    """

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        """Initialize the stream.

        Args:
            seed: Non-negative seed below 2**64.
            stream_id: Non-negative stream index below 2**64.
        """
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise InvalidInputError("seed and stream id must lie in [0, 2**64)")
        self.seed = seed
        self.stream_id = stream_id
        self._generator = np.random.Generator(
            np.random.Philox(key=(seed << 64) | stream_id)
        )

    @property
    def generator(self) -> np.random.Generator:
        """Return the underlying numpy generator."""
        return self._generator

    def normal(self, size: Union[int, Tuple[int, ...]]) -> np.ndarray:
        """Return standard normal draws."""
        return self._generator.standard_normal(size)

    def chisquare(self, dof: int, size: int) -> np.ndarray:
        """Return chi-square draws; zero degrees of freedom gives zeros.

        Args:
            dof: Degrees of freedom, non-negative.
            size: Number of draws.

        Returns:
            Array of draws.
        """
        if dof < 0:
            raise InvalidInputError("degrees of freedom must be non-negative")
        if dof == 0:
            return np.zeros(size)
        if dof <= SMALL_DOF:
            return np.square(self._generator.standard_normal((size, dof))).sum(axis=1)
        return self._generator.chisquare(dof, size)


def rng_stream(seed: int, stream_id: int = 0) -> RandomStream:
    """Return the random stream for ``(seed, stream_id)``."""
    return RandomStream(seed, stream_id)


def posterior_weights(log_prior: np.ndarray, log_likelihood: np.ndarray) -> np.ndarray:
    """Normalize ``prior * likelihood`` along the last axis with log-sum-exp.

    Args:
        log_prior: Log prior masses, shape (K,).
        log_likelihood: Log likelihoods, shape (..., K).

    Returns:
        Posterior masses with the shape of ``log_likelihood``.
    """
    log_joint = log_likelihood + log_prior
    log_norm = special.logsumexp(log_joint, axis=-1, keepdims=True)
    if not np.all(np.isfinite(log_norm)):
        raise NumericalFailureError(
            "posterior mass underflows on every prior node; widen the prior grid"
        )
    return np.exp(log_joint - log_norm)


def chi2_combination_sf(
    weights: Sequence[float], dofs: Sequence[int], x: float
) -> float:
    """Return P(sum_k weights[k] * chi2(dofs[k]) > x).

    Imhof's inversion of the characteristic function. The oscillating tail is
    handled by scipy's Fourier-weighted quadrature.

    Args:
        weights: Positive scale of each component.
        dofs: Degrees of freedom of each component; zero entries are dropped.
        x: Threshold.

    Returns:
        The survival function at ``x``.
    """
    pairs = [(float(lam), int(h)) for lam, h in zip(weights, dofs) if h > 0]
    if not pairs:
        return 0.0 if x >= 0 else 1.0
    if any(lam <= 0 for lam, _ in pairs):
        raise InvalidInputError("chi-square combination weights must be positive")
    if x <= 0:
        return 1.0
    lam = np.array([pair[0] for pair in pairs])
    dof = np.array([pair[1] for pair in pairs], dtype=float)
    if lam.size == 1:
        return float(chi2_sf(int(dof[0]), x / lam[0]))

    def phase(u: float) -> float:
        return 0.5 * float(np.dot(dof, np.arctan(lam * u)))

    def log_rho(u: float) -> float:
        return 0.25 * float(np.dot(dof, np.log1p(np.square(lam * u))))

    def integrand(u: float) -> float:
        if u == 0.0:
            return 0.5 * (float(np.dot(dof, lam)) - x)
        return math.sin(phase(u) - 0.5 * x * u) / (u * math.exp(log_rho(u)))

    omega = 0.5 * x
    split = 1.0 / float(lam.max())
    head, _ = integrate.quad(integrand, 0.0, split, limit=200, epsabs=1e-11)
    cos_part, _ = integrate.quad(
        lambda u: math.sin(phase(u)) / (u * math.exp(log_rho(u))),
        split,
        np.inf,
        weight="cos",
        wvar=omega,
        limlst=100,
    )
    sin_part, _ = integrate.quad(
        lambda u: math.cos(phase(u)) / (u * math.exp(log_rho(u))),
        split,
        np.inf,
        weight="sin",
        wvar=omega,
        limlst=100,
    )
    value = 0.5 + (head + cos_part - sin_part) / math.pi
    logger.debug(f"chi2 combination sf at {x}: {value}")
    return float(min(max(value, 0.0), 1.0))
