"""Doubly robust estimation of treatment effects on cause-specific hazards.

Under the additive model ``h_j(t | A, Z) = beta_j A + lambda_j(t, Z)`` the
package estimates the hazard differences ``beta_j`` from right-censored
competing-risks data with two doubly robust scores, a regression comparator,
model-based or bootstrap standard errors, and a simulation harness.
"""

__version__ = "0.1.0"

from .data import CompetingRisksSample, DataError, EventGrid, build_event_grid, load_csv, write_csv
from .nuisance import (
    CoxCensoring, ExternalCensoring, ExternalPropensity, NuisanceError, NuisanceSet, PropensityModel,
    UnitCensoring, fit_censoring_cox, fit_outcome_baseline, fit_outcome_gamma, fit_propensity_logistic,
    inject_external_nuisance, read_external_nuisance,
)
from .pipeline import fit, fit_nuisance, fit_point
from .scores import (
    HazardDiffEstimate, ScoreConfig, ScoreError, eval_score1, eval_score2, regression_beta, score1_beta,
    score2_beta, score_simplified,
)
from .simulate import (
    MonteCarloSummary, ScenarioSpec, TruthSet, generate_scenario, oracle_efficient_score, run_monte_carlo,
    summarize_to_table,
)
from .variance import CovarianceEstimate, VarianceError, bootstrap, sandwich_score1, sandwich_score2

__all__ = [
    "CompetingRisksSample", "CovarianceEstimate", "CoxCensoring", "DataError", "EventGrid", "ExternalCensoring",
    "ExternalPropensity", "HazardDiffEstimate", "MonteCarloSummary", "NuisanceError", "NuisanceSet",
    "PropensityModel", "ScenarioSpec", "ScoreConfig", "ScoreError", "TruthSet", "UnitCensoring", "VarianceError",
    "bootstrap", "build_event_grid", "eval_score1", "eval_score2", "fit", "fit_censoring_cox", "fit_nuisance",
    "fit_outcome_baseline", "fit_outcome_gamma", "fit_point", "fit_propensity_logistic", "generate_scenario",
    "inject_external_nuisance", "load_csv", "oracle_efficient_score", "read_external_nuisance", "regression_beta",
    "run_monte_carlo", "sandwich_score1", "sandwich_score2", "score1_beta", "score2_beta", "score_simplified",
    "summarize_to_table", "write_csv",
]
