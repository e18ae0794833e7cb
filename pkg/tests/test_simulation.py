"""Copyright (c) 2023, Aydin Abdi.

Unit tests for simulation.py module.
"""

import numpy as np
import pytest

from meta_risk_insights.data_classes import Design, GenerativeConfig
from meta_risk_insights.simulation import (
    group_statistics,
    simulate,
    simulate_effects,
    study_variances,
)


@pytest.fixture
def config() -> GenerativeConfig:
    """Returns a generative configuration with three groups."""
    return GenerativeConfig(
        mu=1.5,
        tau2=0.5,
        group_variances=(1.0, 2.0, 4.0),
        multiplicities=(2, 3, 1),
        seed=5,
    )


def test_study_variances() -> None:
    """Test the per-study variances."""
    design = Design((1.0, 3.0), (2, 1))
    assert np.array_equal(study_variances(design), [1.0, 1.0, 3.0])


def test_simulate_is_reproducible(config: GenerativeConfig) -> None:
    """Test that identical configurations give identical studies."""
    first = simulate(config)
    second = simulate(config)
    assert first == second
    assert first.n == 6
    assert np.allclose(first.variances, [1.0, 1.0, 2.0, 2.0, 2.0, 4.0])


def test_simulate_effects_moments(config: GenerativeConfig) -> None:
    """Test the mean and variance of simulated effects."""
    effects = simulate_effects(config, replications=100_000)
    assert effects.shape == (100_000, 6)
    assert np.allclose(effects.mean(axis=0), 1.5, atol=0.04)
    expected = 0.5 + np.array([1.0, 1.0, 2.0, 2.0, 2.0, 4.0])
    assert np.allclose(effects.var(axis=0), expected, rtol=0.03)


def test_group_statistics(config: GenerativeConfig) -> None:
    """Test group means and within-group variances of simulated effects."""
    effects = simulate_effects(config, replications=3)
    means, within = group_statistics(config.design, effects)
    assert means.shape == (3, 3)
    assert np.allclose(means[:, 0], effects[:, :2].mean(axis=1))
    assert np.allclose(within[:, 1], effects[:, 2:5].var(axis=1, ddof=1))
    assert np.array_equal(within[:, 2], np.zeros(3))
