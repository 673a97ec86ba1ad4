"""Model-based sandwich covariances and the nonparametric bootstrap."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._integrals import exp_integral
from .data import CompetingRisksSample
from .nuisance import NuisanceSet
from .scores import ScoreConfig, ScoreWorkspace
from ._rng import stream


class VarianceError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    source: str
    replicates: int | None = None
    failed: int = 0
    estimates: np.ndarray | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))


def _sandwich(W: float, V: np.ndarray, n: int) -> np.ndarray:
    if not W > 0:
        raise VarianceError("non-invertible W")
    if np.any(V == 0):
        warnings.warn("no events for some cause: standard error is 0", RuntimeWarning, stacklevel=3)
    return np.diag(V / W**2) / n


def _workspace(sample, nuisance, workspace):
    return workspace if workspace is not None else ScoreWorkspace(sample, nuisance)


def sandwich_score1(sample: CompetingRisksSample, nuisance: NuisanceSet, beta_hat,
                    workspace: ScoreWorkspace | None = None) -> CovarianceEstimate:
    """Sandwich covariance for the Score-1 estimator.

    ``W = mean_i A_i (A_i - pi_i) int_0^{X_i} exp(b t) / S_c(t-) dt`` and
    ``V_jj = mean_i 1{cause j} exp(2 b A_i X_i) (A_i - pi_i)^2 / S_c(X_i-)^2``
    with ``b = sum(beta_hat)``; the covariance is ``diag(V) / W^2 / n``.
    """
    ws = _workspace(sample, nuisance, workspace)
    g = ws.grid
    b = float(np.sum(beta_hat))
    grow = exp_integral(b, g.starts, g.widths)
    treated = ws.A == 1
    integral = (ws.sc_inv * grow[None, :] * ws.live)[treated].sum(axis=1)
    W = float(np.sum((1 - ws.pi[treated]) * integral)) / ws.n

    k = g.position
    own_inv = np.ones(ws.n) if ws.unit else ws.sc_inv[np.arange(ws.n), k]
    term = np.exp(2 * b * ws.A * g.exit_time) * own_inv**2 * (ws.A - ws.pi) ** 2
    V = np.array([term[ws.event_cause == j].sum() for j in range(1, ws.J + 1)]) / ws.n
    return CovarianceEstimate(_sandwich(W, V, ws.n), "model")


def sandwich_score2(sample: CompetingRisksSample, nuisance: NuisanceSet, beta_hat,
                    workspace: ScoreWorkspace | None = None, quadrature: str = "exact") -> CovarianceEstimate:
    """Sandwich covariance for the Score-2 estimator.

    ``W = mean_i A_i int_0^{X_i} (A_i - E_i(t)) dt`` and
    ``V_jj = mean_i 1{cause j} (A_i - E_i(X_i-))^2``.
    """
    ws = _workspace(sample, nuisance, workspace)
    g = ws.grid
    treated = ws.A == 1
    e_int = ws.e_integrals(beta_hat, quadrature)
    length = (g.widths[None, :] * ws.live).sum(axis=1)
    W = float(np.sum(length[treated] - e_int[treated])) / ws.n
    resid = (ws.A - ws.e_at_exit(beta_hat)) ** 2
    V = np.array([resid[ws.event_cause == j].sum() for j in range(1, ws.J + 1)]) / ws.n
    return CovarianceEstimate(_sandwich(W, V, ws.n), "model")


def _replicate(args):
    sample, config, seed, b, fit_kwargs = args
    from .pipeline import fit_point

    rng = stream(seed, b)
    idx = rng.integers(0, sample.n, sample.n)
    external = fit_kwargs.get("external")
    if external is not None:
        fit_kwargs = dict(fit_kwargs, external=tuple(e.subset(idx) if e is not None else None for e in external))
    try:
        return fit_point(sample.subset(idx), config, **fit_kwargs).beta
    except (ValueError, ArithmeticError, RuntimeError):
        return None


def bootstrap(sample: CompetingRisksSample, config: ScoreConfig, B: int = 100, seed: int = 0,
              jobs: int = 1, max_fail: float = 0.10, **fit_kwargs) -> CovarianceEstimate:
    """Nonparametric bootstrap covariance of the full estimation pipeline.

    Whole records are resampled with replacement; every replicate refits the
    nuisance models.  Replicate ``b`` draws from the stream keyed by
    ``(seed, b)``, so the result does not depend on ``jobs``.  Failed
    replicates are dropped; more than ``max_fail`` of them is an error.
    """
    if B < 2:
        raise VarianceError("bootstrap needs B >= 2")
    tasks = [(sample, config, seed, b, fit_kwargs) for b in range(B)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, B // (4 * jobs))))
    else:
        results = [_replicate(t) for t in tasks]
    good = [r for r in results if r is not None]
    failed = B - len(good)
    if failed > max_fail * B:
        raise VarianceError(f"{failed} of {B} bootstrap replicates failed")
    est = np.array(good)
    cov = np.atleast_2d(np.cov(est, rowvar=False, ddof=1))
    return CovarianceEstimate(cov, "bootstrap", len(good), failed, est)
