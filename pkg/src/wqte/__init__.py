"""Population and weighted quantile treatment effect estimation.

Estimators, inference, simulation data generators, and a benchmark harness
for quantile treatment effects under balancing weights built from the
propensity score.
"""

__version__ = "0.1.0"
