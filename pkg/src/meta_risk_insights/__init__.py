"""Copyright (c) 2023, Aydin Abdi.

This module estimates the common mean and the heterogeneity variance of a
random-effects meta-analysis through the canonical representation of the
restricted likelihood, and analyzes the R-risk of the resulting estimators.
"""

try:
    from meta_risk_insights._version import version
except ImportError:  # not built by hatch-vcs
    version = "0.0.0"

__author__ = "Aydin Abdi"
__license__ = "MIT"
__version__ = version
