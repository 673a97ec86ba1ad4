"""Doubly robust estimating scores for the hazard difference and their solutions.

Two scores are provided.  Score 1 weights the outcome-model martingale
residuals by ``exp(sum(beta) A t) (A - pi(Z)) / S_c(t- | A, Z)`` and, with the
weighted Breslow baseline, has a closed-form root.  Score 2 weights them by
``A - E(t; beta)`` where ``E`` is the treated fraction expected in the risk
set, and is solved numerically.  The simplified variants set ``S_c = 1``.

All integrals are exact on the event grid: between grid times the
integrands are either constant, ``exp(b t)``, or a logistic curve in ``t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from ._integrals import exp_integral, logistic_integral, logistic_integral_gl
from .data import CompetingRisksSample, build_event_grid
from .nuisance import NuisanceSet, UnitCensoring, lin_ying, nuisance_grid
from .solvers import ConvergenceError, solve

PI_CLAMP = 1e-8
SC_FLOOR = 1e-12
Z_975 = 1.959963984540054

METHOD_ALIASES = {
    "1": "score1", "score1": "score1",
    "2": "score2", "score2": "score2",
    "1s": "score1s", "score1s": "score1s",
    "2s": "score2s", "score2s": "score2s",
    "reg": "regression", "regression": "regression",
}


class ScoreError(ValueError):
    """An estimator is undefined for the given data or nuisances."""


@dataclass(frozen=True)
class ScoreConfig:
    """Estimator choice and solver controls.

    ``baseline`` defaults to ``"weighted"`` for Score 1 and ``"plain"`` for
    Score 2.  ``quadrature`` selects how the Score-2 curve is integrated over
    grid intervals: ``"exact"`` (closed-form antiderivative) or
    ``"gauss-legendre"`` (16 nodes).
    """

    method: str = "score2s"
    baseline: str | None = None
    gamma_design: str = "z"
    tol: float = 1e-9
    max_iter: int = 100
    beta_init: tuple[float, ...] | None = None
    quadrature: str = "exact"

    def __post_init__(self):
        if self.method not in METHOD_ALIASES:
            raise ScoreError(f"unknown method {self.method!r}; choose from {sorted(set(METHOD_ALIASES.values()))}")
        object.__setattr__(self, "method", METHOD_ALIASES[self.method])
        if self.tol <= 0:
            raise ScoreError("tol must be positive")
        if self.max_iter < 1:
            raise ScoreError("max_iter must be at least 1")
        if self.baseline not in (None, "plain", "weighted"):
            raise ScoreError(f"unknown baseline {self.baseline!r}")
        if self.quadrature not in ("exact", "gauss-legendre"):
            raise ScoreError(f"unknown quadrature {self.quadrature!r}")

    @property
    def variant(self) -> int | None:
        return {"score1": 1, "score1s": 1, "score2": 2, "score2s": 2}.get(self.method)

    @property
    def simplified(self) -> bool:
        return self.method in ("score1s", "score2s")

    @property
    def baseline_method(self) -> str:
        if self.baseline:
            return self.baseline
        return "weighted" if self.variant == 1 else "plain"


@dataclass
class HazardDiffEstimate:
    """Estimated hazard differences with their covariance."""

    beta: np.ndarray
    covariance: np.ndarray | None = None
    method: str = ""
    diagnostics: dict = field(default_factory=dict)
    nuisance: dict = field(default_factory=dict)
    variance_source: str | None = None

    @property
    def se(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(self.beta.shape, np.nan)
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def ci95(self) -> np.ndarray:
        se = self.se
        return np.column_stack([self.beta - Z_975 * se, self.beta + Z_975 * se])

    def with_covariance(self, cov, source: str) -> "HazardDiffEstimate":
        return replace(self, covariance=np.asarray(cov, dtype=float), variance_source=source)


def e_curve(b: float, pi, sc1, sc0, t):
    """Expected treated fraction ``E(t)`` for total hazard difference ``b``."""
    num = np.exp(-b * np.asarray(t, dtype=float)) * sc1 * pi
    return num / (num + sc0 * (1.0 - pi))


def eval_E_curve(beta, nuisance: NuisanceSet, z, t: float) -> float:
    """``E(t; beta, S_c, pi)`` at covariate vector ``z``, using ``S_c(t-)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    pi = float(nuisance.propensity.predict(z)[0])
    sc1 = nuisance.censoring.survival(t, 1, z, left=True)
    sc0 = nuisance.censoring.survival(t, 0, z, left=True)
    return float(e_curve(float(np.sum(beta)), pi, sc1, sc0, t))


class ScoreWorkspace:
    """Grid-level quantities shared by all score evaluations for one fit.

    Parameters
    ----------
    sample : CompetingRisksSample
    nuisance : NuisanceSet
        Must carry one outcome model per cause.
    """

    def __init__(self, sample: CompetingRisksSample, nuisance: NuisanceSet, grid=None):
        if len(nuisance.outcomes) != sample.n_causes:
            raise ScoreError("nuisance set needs one outcome model per cause")
        self.sample = sample
        self.nuisance = nuisance
        self.grid = grid or nuisance_grid(sample, nuisance.censoring)
        g = self.grid
        pi = np.asarray(nuisance.propensity.evaluate(sample), dtype=float)
        if np.any((pi < PI_CLAMP) | (pi > 1 - PI_CLAMP)):
            warnings.warn("propensity clamped to [1e-8, 1-1e-8]", RuntimeWarning, stacklevel=2)
            pi = np.clip(pi, PI_CLAMP, 1 - PI_CLAMP)
        self.pi = pi
        self.A = sample.treatment.astype(float)
        self.n = sample.n
        self.J = sample.n_causes
        self.mask = g.risk_mask()

        cens = nuisance.censoring
        log_own = cens.log_survival_left(sample, g)
        self.unit = log_own.shape == (1, 1)
        if self.unit:
            self.sc_inv = np.ones((1, 1))
            self.log_ratio = np.zeros((1, 1))
        else:
            # only at-risk cells are ever used
            if np.any((log_own < np.log(SC_FLOOR)) & self.mask):
                raise ScoreError("censoring survival underflow")
            self.sc_inv = np.exp(-log_own)
            self.log_ratio = cens.log_survival_left(sample, g, 1) - cens.log_survival_left(sample, g, 0)
        self.log_own = log_own

        self.tables = [m.baseline for m in nuisance.outcomes]
        self.gammas = np.array([m.gamma for m in nuisance.outcomes]).reshape(self.J, -1)
        self.gz = sample.covariates @ self.gammas.T  # (n, J)
        valid = np.logical_and.reduce([t.valid for t in self.tables])
        self.valid = valid
        live = self.mask & valid[None, :]
        self.live = live
        self.event_cause = np.where(valid[g.position], g.status, 0)
        self._cells = None
        self._s2_cache: dict[float, tuple] = {}

    def _live_cells(self):
        """Flat ``(row, column)`` indices of the live cells, computed once."""
        if self._cells is None:
            self._cells = np.nonzero(self.live)
        return self._cells

    @property
    def _lr(self):
        return self._live_cells()[0]

    @property
    def _lc(self):
        return self._live_cells()[1]

    def _own_sc_inv(self) -> np.ndarray:
        """``1 / S_c(X_i-)`` at each subject's exit interval."""
        if self.unit:
            return np.ones(self.n)
        return self.sc_inv[np.arange(self.n), self.grid.position]

    @property
    def upper(self) -> float:
        """Upper integration limit in use (end of the last valid interval)."""
        idx = np.flatnonzero(self.valid)
        return float(self.grid.times[idx[-1]]) if idx.size else 0.0

    # ---------------------------------------------------------------- Score 1

    def score1(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        b = float(beta.sum())
        g = self.grid
        grow = exp_integral(b, g.starts, g.widths)
        grow_end = np.exp(b * g.times)
        if self.unit:
            col_int, col_end, row_int, own_end = self._score1_sums_unit(grow, grow_end)
        else:
            col_int, col_end, row_int, own_end = self._score1_sums_dense(grow, grow_end)
        out = np.empty(self.J)
        for j in range(self.J):
            jump = own_end[self.event_cause == j + 1].sum() - col_end @ self.tables[j].jumps
            own = beta[j] * (self.A @ row_int) + self.gz[:, j] @ row_int
            base = col_int @ (beta[j] * self.tables[j].q_rate + self.tables[j].r_rate)
            out[j] = (jump - own + base) / self.n
        return out

    def _score1_sums_unit(self, grow, grow_end):
        # with S_c = 1 every weight factors into a row part and a column part,
        # so column sums are risk-set sums and row sums are prefix sums
        g = self.grid
        valid = self.valid.astype(float)
        w = self.A - self.pi
        rs_t = g.risk_sum(w * self.A)
        rs_c = g.risk_sum(w * (1 - self.A))
        col_int = valid * (grow * rs_t + g.widths * rs_c)
        col_end = valid * (grow_end * rs_t + rs_c)
        k = g.position
        cum_t = np.cumsum(grow * valid)[k]
        cum_c = np.cumsum(g.widths * valid)[k]
        row_int = w * np.where(self.A == 1, cum_t, cum_c)
        own_end = w * np.where(self.A == 1, grow_end[k], 1.0) * valid[k]
        return col_int, col_end, row_int, own_end

    def _score1_sums_dense(self, grow, grow_end):
        g = self.grid
        treated = self.A[:, None] == 1
        w = self.sc_inv * (self.A - self.pi)[:, None]
        omega_int = w * np.where(treated, grow[None, :], g.widths[None, :]) * self.live
        omega_end = w * np.where(treated, grow_end[None, :], 1.0) * self.live
        own_end = omega_end[np.arange(self.n), g.position]
        return omega_int.sum(axis=0), omega_end.sum(axis=0), omega_int.sum(axis=1), own_end

    def score1_closed_form(self) -> np.ndarray:
        """Root of Score 1 under the weighted Breslow baseline, from its ratio form."""
        g = self.grid
        A, pi = self.A, self.pi
        if np.all(A == 1):
            raise ScoreError("degenerate: no controls")
        if np.all(A == 0):
            raise ScoreError("degenerate: no treated subjects")
        Z = self.sample.covariates
        w_row = A * (1 - pi)
        v_row = (1 - A) * pi
        if self.unit:
            w_tot = g.risk_sum(w_row)
            v_tot = g.risk_sum(v_row)
            wz = g.risk_sum(w_row[:, None] * Z)
            vz = g.risk_sum(v_row[:, None] * Z)
        else:
            w = w_row[:, None] * self.sc_inv * self.mask
            v = v_row[:, None] * self.sc_inv * self.mask
            w_tot, v_tot = w.sum(axis=0), v.sum(axis=0)
            wz, vz = w.T @ Z, v.T @ Z
        ok = w_tot > 0
        denom = float(np.sum((v_tot * g.widths)[ok]))
        if denom <= 0:
            raise ScoreError("degenerate: no controls at risk while treated are at risk")
        safe = np.where(ok, w_tot, 1.0)
        zbar_w = wz / safe[:, None]
        own_sc = self._own_sc_inv()
        w_own = w_row * own_sc
        v_own = v_row * own_sc
        beta = np.empty(self.J)
        for j in range(self.J):
            gamma = self.gammas[j]
            hit = (g.status == j + 1) & ok[g.position]
            own = v_own[hit].sum()
            drift = np.sum((g.widths * (vz @ gamma - v_tot * (zbar_w @ gamma)))[ok])
            dnbar = g.event_sum(w_own, j + 1) / safe
            jumps = np.sum((v_tot * dnbar)[ok])
            beta[j] = -(own - drift - jumps) / denom
        return beta

    # ---------------------------------------------------------------- Score 2

    def _live_base(self) -> np.ndarray:
        """``logit(pi_i) + log S_c(t-|1) - log S_c(t-|0)`` on the live cells."""
        base = logit(self.pi)[self._lr]
        if not self.unit:
            base = base + self.log_ratio[self._lr, self._lc]
        return base

    def _live_e_integrals(self, b: float, quadrature: str) -> np.ndarray:
        g = self.grid
        eta0 = self._live_base() - b * g.starts[self._lc]
        f = logistic_integral if quadrature == "exact" else logistic_integral_gl
        return f(eta0, b, g.widths[self._lc])

    def _score2_kernel(self, b: float, quadrature: str = "exact"):
        key = (b, quadrature)
        hit = self._s2_cache.get(key)
        if hit is not None:
            return hit
        g = self.grid
        r, c = self._lr, self._lc
        K = g.size
        c_int = self.A[r] * g.widths[c] - self._live_e_integrals(b, quadrature)
        c_end = self.A[r] - expit(self._live_base() - b * g.times[c])
        col_int = np.bincount(c, c_int, minlength=K)
        row_int = np.bincount(r, c_int, minlength=self.n)
        col_end = np.bincount(c, c_end, minlength=K)
        # the live cell at each subject's exit interval, when there is one
        own_end = np.zeros(self.n)
        at_exit = c == g.position[r]
        own_end[r[at_exit]] = c_end[at_exit]
        x1 = self.A @ row_int
        rest = np.empty(self.J)
        for j in range(self.J):
            t = self.tables[j]
            ev = self.event_cause == j + 1
            rest[j] = (own_end[ev].sum() - col_end @ t.jumps
                       - self.gz[:, j] @ row_int + col_int @ t.r_rate)
        q_term = col_int @ self.tables[0].q_rate
        if len(self._s2_cache) > 64:
            self._s2_cache.clear()
        self._s2_cache[key] = (rest, x1 - q_term)
        return rest, x1 - q_term

    def score2(self, beta, quadrature: str = "exact") -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        rest, slope = self._score2_kernel(float(beta.sum()), quadrature)
        return (rest - beta * slope) / self.n

    def e_integrals(self, beta, quadrature: str = "exact") -> np.ndarray:
        """Per-subject ``int_0^{X_i} E_i(t) dt`` over the valid range."""
        vals = self._live_e_integrals(float(np.sum(beta)), quadrature)
        return np.bincount(self._lr, vals, minlength=self.n)

    def e_at_exit(self, beta) -> np.ndarray:
        """``E_i(X_i-)`` for every subject."""
        g = self.grid
        b = float(np.sum(beta))
        k = g.position
        ratio = self.log_ratio[:, 0] if self.unit else self.log_ratio[np.arange(self.n), k]
        return expit(logit(self.pi) + ratio - b * g.times[k])

    def box(self) -> float:
        return 50.0 / self.sample.tau


def _solver_diag(res, extra=None) -> dict:
    d = {"score_norm": res.fnorm, "iterations": res.iterations, "solver": res.method,
         "evaluations": res.evaluations, "boxed": res.boxed}
    if extra:
        d.update(extra)
    return d


def eval_score1(beta, sample: CompetingRisksSample, nuisance: NuisanceSet) -> np.ndarray:
    """Sample-average Score 1 at ``beta`` (length ``J``)."""
    return ScoreWorkspace(sample, nuisance).score1(beta)


def eval_score2(beta, sample: CompetingRisksSample, nuisance: NuisanceSet,
                quadrature: str = "exact") -> np.ndarray:
    """Sample-average Score 2 at ``beta`` (length ``J``)."""
    return ScoreWorkspace(sample, nuisance).score2(beta, quadrature)


def score1_beta(sample: CompetingRisksSample, nuisance: NuisanceSet, config: ScoreConfig | None = None,
                workspace: ScoreWorkspace | None = None) -> HazardDiffEstimate:
    """Closed-form Score-1 estimator (weighted Breslow baseline required)."""
    config = config or ScoreConfig("score1")
    if nuisance.baseline_method != "weighted":
        raise ScoreError("Score 1 closed form requires the weighted Breslow baseline")
    ws = workspace or ScoreWorkspace(sample, nuisance)
    beta = ws.score1_closed_form()
    resid = ws.score1(beta)
    counts = sample.event_counts()
    if np.any(counts == 0):
        warnings.warn("no events for some cause; its estimate is degenerate", RuntimeWarning, stacklevel=2)
    diag = {"score_norm": float(np.max(np.abs(resid))), "iterations": 0, "solver": "closed-form",
            "upper_limit": ws.upper}
    return HazardDiffEstimate(beta, None, config.method, diag, nuisance.summary())


def score2_beta(sample: CompetingRisksSample, nuisance: NuisanceSet, config: ScoreConfig | None = None,
                workspace: ScoreWorkspace | None = None) -> HazardDiffEstimate:
    """Root of Score 2 by damped Newton, with Broyden as fallback."""
    config = config or ScoreConfig("score2")
    ws = workspace or ScoreWorkspace(sample, nuisance)
    for j, c in enumerate(sample.event_counts(), start=1):
        if c == 0:
            raise ScoreError(f"no events for cause {j}")
    if config.beta_init is not None:
        x0 = np.asarray(config.beta_init, dtype=float)
    else:
        try:
            x0 = ws.score1_closed_form()
            if not np.all(np.isfinite(x0)):
                raise ScoreError("non-finite start")
        except ScoreError:
            x0 = np.zeros(ws.J)
    bound = ws.box()
    x0 = np.clip(x0, -bound, bound)

    def f(beta):
        return ws.score2(beta, config.quadrature)

    try:
        res = solve(f, x0, tol=config.tol, max_iter=config.max_iter, bound=bound)
    except ConvergenceError as err:
        raise ScoreError(f"Score 2 did not converge: {err} (|S|={err.fnorm}, beta={err.x})") from err
    diag = _solver_diag(res, {"upper_limit": ws.upper})
    return HazardDiffEstimate(res.x, None, config.method, diag, nuisance.summary())


def score_simplified(variant: int, sample: CompetingRisksSample, nuisance: NuisanceSet,
                     config: ScoreConfig | None = None) -> HazardDiffEstimate:
    """Simplified Score 1 or 2: requires a unit censoring model."""
    if not isinstance(nuisance.censoring, UnitCensoring):
        raise ScoreError("simplified scores need the Unit censoring model")
    method = "score1s" if variant == 1 else "score2s"
    config = replace(config, method=method) if config else ScoreConfig(method)
    if variant == 1:
        return score1_beta(sample, nuisance, config)
    return score2_beta(sample, nuisance, config)


def regression_beta(sample: CompetingRisksSample, config: ScoreConfig | None = None) -> HazardDiffEstimate:
    """Treatment coefficient of the Lin-Ying additive hazards fit on ``(A, Z)``.

    The covariance is the robust sandwich ``M^-1 B M^-1`` per cause;
    cross-cause terms vanish because no subject fails twice.
    """
    grid = build_event_grid(sample)
    # constant covariates vanish after centring and carry no information
    keep = np.ptp(sample.covariates, axis=0) > 0
    D = np.column_stack([sample.treatment, sample.covariates[:, keep]])
    names = ("treatment",) + tuple(n for n, k in zip(sample.covariate_names, keep) if k)
    beta = np.empty(sample.n_causes)
    var = np.empty(sample.n_causes)
    for j in range(1, sample.n_causes + 1):
        fit = lin_ying(grid, D, j, names)
        if fit.n_events == 0:
            raise ScoreError(f"no events for cause {j}")
        beta[j - 1] = fit.coef[0]
        inv = np.linalg.inv(fit.gram)
        var[j - 1] = (inv @ fit.meat @ inv)[0, 0]
    diag = {"iterations": 0, "solver": "closed-form",
            "dropped_constant": [n for n, k in zip(sample.covariate_names, keep) if not k]}
    return HazardDiffEstimate(beta, np.diag(var), "regression", diag, {}, "model")
