"""Copyright (c) 2023, Aydin Abdi.

This module is responsible for drawing studies from the random-effects model
x_i = mu + b_i + e_i.
"""

from typing import Tuple

import numpy as np

from meta_risk_insights.data_classes import (
    Design,
    GenerativeConfig,
    Study,
    StudySet,
)
from meta_risk_insights.numerics import rng_stream


def study_variances(design: Design) -> np.ndarray:
    """Return s_i^2 for every study, groups in ascending order."""
    return np.repeat(design.s2, design.multiplicities)


def simulate_effects(config: GenerativeConfig, replications: int = 1) -> np.ndarray:
    """Return simulated effects of shape (replications, n).

    Each row draws b_i ~ N(0, tau2) and e_i ~ N(0, s_i^2) once per study.
    """
    stream = rng_stream(config.seed)
    variances = study_variances(config.design)
    between = stream.normal((replications, variances.size)) * np.sqrt(config.tau2)
    within = stream.normal((replications, variances.size)) * np.sqrt(variances)
    return config.mu + between + within


def simulate(config: GenerativeConfig) -> StudySet:
    """Return one simulated StudySet; identical for identical configs."""
    effects = simulate_effects(config)[0]
    std_errors = np.sqrt(study_variances(config.design))
    return StudySet(
        tuple(
            Study(effect=float(effect), std_error=float(std_error))
            for effect, std_error in zip(effects, std_errors)
        )
    )


def group_statistics(
    design: Design, effects: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Return group means and within-group variances of simulated effects.

    Args:
        design: The design the effects were drawn from.
        effects: Array of shape (replications, n), studies in design order.

    Returns:
        Tuple of means (replications, p) and u^2 (replications, p).
    """
    effects = np.atleast_2d(effects)
    bounds = np.cumsum((0,) + design.multiplicities)
    means = np.empty((effects.shape[0], design.p))
    within = np.zeros((effects.shape[0], design.p))
    for i in range(design.p):
        block = effects[:, bounds[i] : bounds[i + 1]]
        means[:, i] = block.mean(axis=1)
        if block.shape[1] > 1:
            within[:, i] = block.var(axis=1, ddof=1)
    return means, within
