"""End-to-end estimation: nuisance fits, point estimate and variance."""

from __future__ import annotations

from .data import CompetingRisksSample
from .nuisance import (
    NuisanceError, NuisanceSet, UnitCensoring, fit_censoring_cox, fit_outcomes,
    fit_propensity_logistic, nuisance_grid,
)
from .scores import (
    HazardDiffEstimate, ScoreConfig, ScoreError, ScoreWorkspace, regression_beta,
    score1_beta, score2_beta,
)


def default_censor(config: ScoreConfig, external=None) -> str:
    if config.simplified or config.method == "regression":
        return "none"
    return "external" if external is not None and external[1] is not None else "cox"


def fit_nuisance(sample: CompetingRisksSample, config: ScoreConfig, ps_spec=None, censor: str | None = None,
                 external=None) -> NuisanceSet:
    """Fit (or wrap) propensity, censoring and outcome models for ``config``.

    Parameters
    ----------
    ps_spec : str or sequence, optional
        Propensity terms such as ``"z1,z2,z1:z2"``; default all main effects.
    censor : {"none", "cox", "external"}, optional
        Defaults to ``"none"`` for the simplified scores and ``"cox"``
        otherwise.
    external : tuple, optional
        ``(propensity, censoring)`` from
        :func:`~hazdiff.nuisance.inject_external_nuisance`; either entry may be
        ``None`` to fall back to the fitted model.
    """
    censor = censor or default_censor(config, external)
    ext_ps, ext_sc = external if external is not None else (None, None)
    propensity = ext_ps if ext_ps is not None else fit_propensity_logistic(sample, ps_spec)
    if censor == "none":
        censoring = UnitCensoring()
    elif censor == "cox":
        censoring = fit_censoring_cox(sample)
    elif censor == "external":
        if ext_sc is None:
            raise NuisanceError("censor='external' needs an injected censoring table")
        censoring = ext_sc
    else:
        raise NuisanceError(f"unknown censoring model {censor!r}")
    if config.simplified and not isinstance(censoring, UnitCensoring):
        raise ScoreError("simplified scores need the Unit censoring model")
    grid = nuisance_grid(sample, censoring)
    outcomes = fit_outcomes(sample, propensity, censoring, config.baseline_method, config.gamma_design, grid)
    return NuisanceSet(propensity, censoring, outcomes)


def fit_point(sample: CompetingRisksSample, config: ScoreConfig, ps_spec=None, censor=None,
              external=None, with_variance: bool = False) -> HazardDiffEstimate:
    """Point estimate (and, optionally, model-based covariance)."""
    if config.method == "regression":
        return regression_beta(sample, config)
    nuisance = fit_nuisance(sample, config, ps_spec, censor, external)
    ws = ScoreWorkspace(sample, nuisance)
    if config.variant == 1:
        est = score1_beta(sample, nuisance, config, ws)
    else:
        est = score2_beta(sample, nuisance, config, ws)
    if with_variance:
        from .variance import sandwich_score1, sandwich_score2

        if config.variant == 1:
            cov = sandwich_score1(sample, nuisance, est.beta, ws)
        else:
            cov = sandwich_score2(sample, nuisance, est.beta, ws, config.quadrature)
        est = est.with_covariance(cov.matrix, "model")
    return est


def fit(sample: CompetingRisksSample, config: ScoreConfig | str = "score2s", ps_spec=None, censor=None,
        variance: str = "model", boot_b: int = 100, seed: int = 0, jobs: int = 1,
        external=None) -> HazardDiffEstimate:
    """Estimate the cause-specific hazard differences.

    Parameters
    ----------
    sample : CompetingRisksSample
    config : ScoreConfig or str
        Estimator, e.g. ``"score1"``, ``"score2s"`` or ``"regression"``.
    variance : {"model", "bootstrap", "none"}
    boot_b, seed, jobs : int
        Bootstrap replicate count, seed and worker processes.

    Examples
    --------
    >>> est = fit(sample, "score1s", ps_spec="z1,z2")      # doctest: +SKIP
    >>> est.beta, est.se, est.ci95                          # doctest: +SKIP
    """
    if isinstance(config, str):
        config = ScoreConfig(config)
    est = fit_point(sample, config, ps_spec, censor, external, with_variance=(variance == "model"))
    if variance == "bootstrap":
        from .variance import bootstrap

        cov = bootstrap(sample, config, boot_b, seed, jobs, ps_spec=ps_spec, censor=censor, external=external)
        est = est.with_covariance(cov.matrix, "bootstrap")
        est.diagnostics["bootstrap"] = {"B": boot_b, "used": cov.replicates, "failed": cov.failed, "seed": seed}
    elif variance not in ("model", "bootstrap", "none"):
        raise ValueError(f"unknown variance {variance!r}")
    return est
