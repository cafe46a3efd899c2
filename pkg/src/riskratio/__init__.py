"""Risk ratios of extreme events and their confidence intervals.

Interval methods for the ratio of event probabilities under factual and
counterfactual ensembles: delta, likelihood ratio, Koopman score, Wilson,
Wang-Shan exact, five bootstrap variants, and profile likelihood from
point-process extreme value fits.
"""
from .core import (UNDEFINED, BinomialCount, ConvergenceError, DegenerateSampleError,
                   EventDefinition, InfeasibleSizeError, InsufficientExceedancesError,
                   NotComputableError, RatioInterval, RawSample, RiskRatioError, ScenarioPair,
                   Side, Tail, TotalDegeneracyError, far_from_rr, log_risk_ratio,
                   risk_ratio_estimate)
from .estimation import (ProbabilityEstimate, Source, estimate_nonparametric,
                         estimate_parametric_normal)
from .ratio_intervals import (constrained_binomial_mle, delta_interval, koopman_interval,
                              koopman_statistic, lr_statistic, lrt_interval, wang_shan_interval,
                              wilson_interval)
from .bootstrap import BootstrapConfig, DegeneratePolicy, bootstrap_interval, resample_pair
from .wang_shan import WangShanTable, build_table
from .eva import GevParams, PotFit, eva_delta_interval, eva_lrt_interval, eva_probability, fit_pot
from .internal_variability import (EnsembleSeries, time_averaged_delta_interval, time_averaged_p,
                                   year_block_bootstrap)
from .simstudy import MethodMetrics, ScenarioGrid, emit_figures, exact_coverage, run_grid

__version__ = "0.1.0"

__all__ = [
    "UNDEFINED", "BinomialCount", "BootstrapConfig", "ConvergenceError",
    "DegeneratePolicy", "DegenerateSampleError", "EnsembleSeries", "EventDefinition",
    "GevParams", "InfeasibleSizeError", "InsufficientExceedancesError", "MethodMetrics",
    "NotComputableError", "PotFit", "ProbabilityEstimate", "RatioInterval", "RawSample",
    "RiskRatioError", "ScenarioGrid", "ScenarioPair", "Side", "Source", "Tail",
    "TotalDegeneracyError", "WangShanTable", "bootstrap_interval", "build_table",
    "constrained_binomial_mle", "delta_interval", "emit_figures", "estimate_nonparametric",
    "estimate_parametric_normal", "eva_delta_interval", "eva_lrt_interval", "eva_probability",
    "exact_coverage", "far_from_rr", "fit_pot", "koopman_interval", "koopman_statistic",
    "log_risk_ratio", "lr_statistic", "lrt_interval", "resample_pair", "risk_ratio_estimate",
    "run_grid", "time_averaged_delta_interval", "time_averaged_p", "wang_shan_interval",
    "wilson_interval", "year_block_bootstrap",
]
