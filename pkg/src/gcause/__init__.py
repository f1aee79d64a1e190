"""Group-level causal discovery for multivariate time series.

A probabilistic recurrent forecaster is trained on all variables. The
context of one variable group is then replaced by Gaussian knockoffs, and a
Kolmogorov-Smirnov test checks whether the forecast residuals of another
group change.
"""

__version__ = "0.1.0"

from .forecaster import ForecasterConfig, TrainedForecaster, predict, train  # noqa: E402
from .invariance import DecisionMatrix, InferenceConfig, discover, ks_two_sample  # noqa: E402
from .knockoff import KnockoffModel, fit_gaussian, sample_knockoffs, solve_s  # noqa: E402
from .series import GroupPartition, MultivariateSeries, load_csv, make_windows, standardize  # noqa: E402
from .synthgen import CausalGraph, SimConfig, sample_graph, score_decisions, simulate  # noqa: E402

__all__ = [
    "CausalGraph", "DecisionMatrix", "ForecasterConfig", "GroupPartition", "InferenceConfig",
    "KnockoffModel", "MultivariateSeries", "SimConfig", "TrainedForecaster", "discover",
    "fit_gaussian", "ks_two_sample", "load_csv", "make_windows", "predict", "sample_graph",
    "sample_knockoffs", "score_decisions", "simulate", "solve_s", "standardize", "train",
]
