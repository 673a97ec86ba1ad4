"""Nuisance models: propensity score, censoring survival and outcome baselines.

Every censoring model is consumed through its left-continuous log survival
``log S_c(t- | a, z)`` on the intervals of an :class:`~hazdiff.data.EventGrid`;
because all internal models only jump at grid times, that value is constant
on each interval.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .data import CompetingRisksSample, DataError, EventGrid, build_event_grid


class NuisanceError(ValueError):
    """A nuisance model cannot be fitted or evaluated."""


class NoEventsWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# covariate specifications


def parse_terms(spec, names: Sequence[str]) -> tuple[tuple[int, ...], ...]:
    """Parse ``"z1,z2,z1:z2"`` into column-index terms.

    ``None`` selects every main effect; an empty string or list selects none
    (intercept only).
    """
    names = list(names)
    if spec is None:
        return tuple((k,) for k in range(len(names)))
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    terms = []
    for item in spec:
        parts = item.split(":") if isinstance(item, str) else list(item)
        if len(parts) not in (1, 2):
            raise NuisanceError(f"bad covariate term {item!r}")
        idx = []
        for part in parts:
            if isinstance(part, str):
                if part.strip() not in names:
                    raise NuisanceError(f"unknown covariate {part!r}; available: {', '.join(names)}")
                idx.append(names.index(part.strip()))
            else:
                idx.append(int(part))
        terms.append(tuple(idx))
    return tuple(terms)


def term_label(term, names) -> str:
    return ":".join(names[k] for k in term)


def design_matrix(Z: np.ndarray, terms, intercept: bool = True) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    cols = [np.ones(Z.shape[0])] if intercept else []
    for term in terms:
        col = np.ones(Z.shape[0])
        for k in term:
            col = col * Z[:, k]
        cols.append(col)
    return np.column_stack(cols) if cols else np.empty((Z.shape[0], 0))


# --------------------------------------------------------------------------
# propensity score


@dataclass(frozen=True)
class PropensityModel:
    """Logistic working model ``expit(alpha' x)`` with intercept."""

    coef: np.ndarray
    terms: tuple[tuple[int, ...], ...]
    names: tuple[str, ...]
    n_iter: int = 0
    score_max: float = 0.0
    kind: str = "logistic"

    def predict(self, Z) -> np.ndarray:
        return expit(design_matrix(Z, self.terms) @ self.coef)

    def evaluate(self, sample: CompetingRisksSample) -> np.ndarray:
        return self.predict(sample.covariates)

    def subset(self, index):
        return self

    def summary(self) -> dict:
        labels = ["(intercept)"] + [term_label(t, self.names) for t in self.terms]
        return {"kind": self.kind, "coefficients": dict(zip(labels, map(float, self.coef)))}


@dataclass(frozen=True)
class ExternalPropensity:
    """Per-subject propensity values supplied by the caller."""

    values: np.ndarray
    kind: str = "external"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all((values > 0) & (values < 1)):
            bad = int(np.flatnonzero(~((values > 0) & (values < 1)))[0])
            raise NuisanceError(f"propensity for row {bad + 1} is {values[bad]:g}; must lie in (0, 1)")
        object.__setattr__(self, "values", values)

    def evaluate(self, sample: CompetingRisksSample) -> np.ndarray:
        if sample.n != self.values.size:
            raise NuisanceError(f"external propensity has {self.values.size} rows, sample has {sample.n}")
        return self.values

    def predict(self, Z):
        raise NuisanceError("external propensity can only be evaluated at sample rows")

    def subset(self, index):
        return ExternalPropensity(self.values[np.asarray(index)])

    def summary(self) -> dict:
        return {"kind": self.kind, "mean": float(self.values.mean())}


def _logistic_loglik(X, a, coef):
    eta = X @ coef
    return float(np.sum(a * eta - np.logaddexp(0.0, eta)))


def _checked_propensity(coef, X, terms, sample, n_iter, smax) -> PropensityModel:
    # the score also vanishes as coefficients run off to infinity under separation
    eta = np.abs(X @ coef)
    if eta.max() > SEPARATION_ETA:
        raise NuisanceError("propensity separation: fitted probabilities are numerically 0 or 1")
    return PropensityModel(coef, terms, sample.covariate_names, n_iter, smax)


SEPARATION_ETA = 25.0  # |logit| beyond which a fitted probability is within 1e-11 of 0 or 1


def fit_propensity_logistic(sample: CompetingRisksSample, spec=None, max_iter: int = 100,
                            score_tol: float = 1e-10, rel_tol: float = 1e-12) -> PropensityModel:
    """Newton-Raphson (IRLS) maximum likelihood for the propensity score.

    Parameters
    ----------
    sample : CompetingRisksSample
    spec : str or sequence, optional
        Covariate terms, e.g. ``"z1,z2,z1:z2"``; default is all main effects.
        An intercept is always included.
    """
    a = sample.treatment.astype(float)
    if a.min() == a.max():
        raise NuisanceError("one-arm sample: propensity score is not estimable")
    terms = parse_terms(spec, sample.covariate_names)
    X = design_matrix(sample.covariates, terms)
    coef = np.zeros(X.shape[1])
    coef[0] = np.log(a.mean() / (1 - a.mean()))
    loglik = _logistic_loglik(X, a, coef)
    for it in range(1, max_iter + 1):
        p = expit(X @ coef)
        score = X.T @ (a - p)
        if np.max(np.abs(score)) < score_tol:
            return _checked_propensity(coef, X, terms, sample, it - 1, float(np.max(np.abs(score))))
        info = X.T @ (X * (p * (1 - p))[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise NuisanceError("propensity design matrix is singular") from None
        new_ll = -np.inf
        for _ in range(30):
            new = coef + step
            new_ll = _logistic_loglik(X, a, new)
            if new_ll >= loglik - 1e-12 * abs(loglik):
                break
            step = step / 2
        change = abs(new_ll - loglik) / max(abs(loglik), 1e-300)
        coef, loglik = new, new_ll
        if np.linalg.norm(coef) > 1e3:
            raise NuisanceError("propensity separation: coefficients diverge")
        score = X.T @ (a - expit(X @ coef))
        smax = float(np.max(np.abs(score)))
        if smax < score_tol or (change < rel_tol and smax < 1e-8):
            return _checked_propensity(coef, X, terms, sample, it, smax)
    raise NuisanceError(f"propensity fit did not converge in {max_iter} iterations")


# --------------------------------------------------------------------------
# censoring models


def _step_left(jump_times: np.ndarray, cumulative: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Right-continuous step function evaluated at interval starts.

    On ``(starts[k], times[k]]`` this equals the left limit of the step
    function anywhere in the interval, since jumps occur only at grid times.
    """
    if jump_times.size == 0:
        return np.zeros(np.shape(starts))
    idx = np.searchsorted(jump_times, starts, side="right") - 1
    return np.where(idx >= 0, cumulative[np.maximum(idx, 0)], 0.0)


@dataclass(frozen=True)
class UnitCensoring:
    """``S_c = 1``: no censoring adjustment (simplified scores)."""

    kind: str = "unit"

    def log_survival_left(self, sample, grid, arm=None):
        return np.zeros((1, 1))

    def survival(self, t, a, z, left: bool = True) -> float:
        return 1.0

    def jump_times(self) -> np.ndarray:
        return np.empty(0)

    def subset(self, index):
        return self

    def summary(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class CoxCensoring:
    """Proportional hazards censoring model with Breslow baseline.

    ``S_c(t | a, z) = exp(-Lambda_c0(t) exp(coef' (a, z)))``.
    """

    coef: np.ndarray
    jump_times_: np.ndarray
    cumhaz: np.ndarray
    names: tuple[str, ...] = ()
    n_iter: int = 0
    score_max: float = 0.0
    kind: str = "cox"

    def linear_predictor(self, a, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        a = np.broadcast_to(np.asarray(a, dtype=float), (Z.shape[0],))
        return self.coef[0] * a + Z @ self.coef[1:]

    def cumulative_baseline(self, t, left: bool = False) -> np.ndarray:
        side = "left" if left else "right"
        idx = np.searchsorted(self.jump_times_, np.asarray(t, dtype=float), side=side) - 1
        return np.where(idx >= 0, self.cumhaz[np.maximum(idx, 0)], 0.0)

    def log_survival_left(self, sample, grid: EventGrid, arm=None):
        a = sample.treatment if arm is None else arm
        risk = np.exp(self.linear_predictor(a, sample.covariates))
        base = _step_left(self.jump_times_, self.cumhaz, grid.starts)
        return -np.outer(risk, base)

    def survival(self, t, a, z, left: bool = True) -> float:
        lam = self.cumulative_baseline(t, left=left)
        return float(np.exp(-lam * np.exp(self.linear_predictor(a, z)[0])))

    def jump_times(self) -> np.ndarray:
        return self.jump_times_

    def subset(self, index):
        return self

    def summary(self) -> dict:
        labels = ["treatment"] + list(self.names)
        return {"kind": self.kind, "coefficients": dict(zip(labels, map(float, self.coef)))}


@dataclass(frozen=True)
class ExternalCensoring:
    """Per-subject left-continuous censoring survival step tables.

    ``tables[arm][i] = (times, values)`` means ``S_c(t | arm, Z_i) = values[m]``
    for ``times[m] <= t < times[m + 1]`` and 1 before ``times[0]``.  When only
    the observed-arm table is known, the same table serves both arms.
    """

    tables: Mapping[int, Sequence[tuple[np.ndarray, np.ndarray]]]
    kind: str = "external"

    def __post_init__(self):
        for arm, rows in self.tables.items():
            for i, (times, values) in enumerate(rows):
                times = np.asarray(times, dtype=float)
                values = np.asarray(values, dtype=float)
                if times.size and np.any(np.diff(times) <= 0):
                    raise NuisanceError(f"row {i + 1}: censoring table times must increase")
                if np.any(values > 1) or np.any(values <= 0):
                    raise NuisanceError(f"row {i + 1}: censoring survival must lie in (0, 1]")
                if np.any(np.diff(values) > 0):
                    raise NuisanceError(f"row {i + 1}: censoring survival table is not monotone")

    @property
    def n(self) -> int:
        return len(next(iter(self.tables.values())))

    def _rows(self, arm):
        return self.tables.get(arm, self.tables.get(-1))

    def log_survival_left(self, sample, grid: EventGrid, arm=None):
        if sample.n != self.n:
            raise NuisanceError(f"external censoring has {self.n} rows, sample has {sample.n}")
        out = np.empty((sample.n, grid.size))
        arms = sample.treatment if arm is None else np.broadcast_to(arm, (sample.n,))
        for i in range(sample.n):
            times, values = self._rows(int(arms[i]))[i]
            times = np.asarray(times, dtype=float)
            values = np.asarray(values, dtype=float)
            if not times.size:
                out[i] = 0.0
                continue
            idx = np.searchsorted(times, grid.starts, side="right") - 1
            out[i] = np.log(np.where(idx >= 0, values[np.maximum(idx, 0)], 1.0))
        return out

    def survival(self, t, a, z, left: bool = True) -> float:
        raise NuisanceError("external censoring can only be evaluated at sample rows")

    def jump_times(self) -> np.ndarray:
        times = [np.asarray(t, dtype=float) for rows in self.tables.values() for t, _ in rows]
        return np.unique(np.concatenate(times)) if times else np.empty(0)

    def subset(self, index):
        index = np.asarray(index)
        return ExternalCensoring({arm: [rows[i] for i in index] for arm, rows in self.tables.items()})

    def summary(self) -> dict:
        return {"kind": self.kind, "arms": sorted(self.tables)}


def _cox_design(sample):
    return np.column_stack([sample.treatment.astype(float), sample.covariates])


def _cox_terms(d, beta, grid, events):
    risk = np.exp(d @ beta)
    s0 = grid.risk_sum(risk)
    s1 = grid.risk_sum(risk[:, None] * d)
    s2 = grid.risk_sum(risk[:, None, None] * d[:, :, None] * d[:, None, :])
    hit = events > 0
    m = events[hit].astype(float)
    s0, s1, s2 = s0[hit], s1[hit], s2[hit]
    mean = s1 / s0[:, None]
    return risk, s0, m, mean, s2


def fit_censoring_cox(sample: CompetingRisksSample, grid: EventGrid | None = None,
                      max_iter: int = 100, score_tol: float = 1e-10) -> CoxCensoring:
    """Cox model for the censoring time with design ``d = (A, Z)``.

    Censorings are the events and failures the censorings; Breslow handling
    of ties.  Columns of ``d`` that are constant carry no information and are
    fixed at zero.
    """
    grid = grid or build_event_grid(sample)
    if grid.censorings.sum() == 0:
        raise NuisanceError("no censoring events; use Unit censoring model")
    d_full = _cox_design(sample)
    free = np.ptp(d_full, axis=0) > 0
    d = d_full[:, free]
    d = d - d.mean(axis=0)
    cens = grid.status == 0
    events = grid.censorings
    beta = np.zeros(d.shape[1])

    def loglik(b):
        risk, s0, m, _, _ = _cox_terms(d, b, grid, events)
        return float(np.sum(d[cens] @ b) - np.sum(m * np.log(s0)))

    n_iter, smax = 0, 0.0
    if d.shape[1]:
        ll = loglik(beta)
        for it in range(1, max_iter + 1):
            _, s0, m, mean, s2 = _cox_terms(d, beta, grid, events)
            score = d[cens].sum(axis=0) - m @ mean
            smax = float(np.max(np.abs(score)))
            n_iter = it - 1
            if smax < score_tol:
                break
            info = np.einsum("k,kab->ab", m, s2 / s0[:, None, None]) - np.einsum("k,ka,kb->ab", m, mean, mean)
            try:
                step = np.linalg.solve(info, score)
            except np.linalg.LinAlgError:
                raise NuisanceError("Cox information matrix is singular") from None
            for _ in range(30):
                new_ll = loglik(beta + step)
                if new_ll >= ll - 1e-12 * abs(ll):
                    break
                step = step / 2
            change = abs(new_ll - ll) / max(abs(ll), 1e-300)
            beta, ll = beta + step, new_ll
            if np.linalg.norm(beta) > 1e3:
                raise NuisanceError("Cox censoring fit diverges (monotone likelihood)")
            if change < 1e-15:
                _, s0, m, mean, _ = _cox_terms(d, beta, grid, events)
                smax = float(np.max(np.abs(d[cens].sum(axis=0) - m @ mean)))
                n_iter = it
                if smax < 1e-8:
                    break
        else:
            raise NuisanceError(f"Cox censoring fit did not converge in {max_iter} iterations")

    coef = np.zeros(d_full.shape[1])
    coef[free] = beta
    risk = np.exp(d_full @ coef)
    s0 = grid.risk_sum(risk)
    hit = events > 0
    jump_times = grid.times[hit]
    cumhaz = np.cumsum(events[hit] / s0[hit])
    return CoxCensoring(coef, jump_times, cumhaz, sample.covariate_names, n_iter, smax)


# --------------------------------------------------------------------------
# outcome models


@dataclass(frozen=True)
class LinYingFit:
    coef: np.ndarray
    gram: np.ndarray
    meat: np.ndarray
    n_events: int


def lin_ying(grid: EventGrid, D: np.ndarray, cause: int, names: Sequence[str] = ()) -> LinYingFit:
    """Lin-Ying additive hazards estimating equation solved in closed form.

    ``coef = [sum_i int Y_i (D_i - Dbar)^2 dt]^-1 sum_i int (D_i - Dbar) dN_ji``
    with every integral evaluated exactly on the grid.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    q = D.shape[1]
    names = list(names) or [f"column {k + 1}" for k in range(q)]
    for k in range(q):
        if np.ptp(D[:, k]) == 0:
            raise NuisanceError(f"singular Gram matrix: covariate '{names[k]}' is constant")
    Dc = D - D.mean(axis=0)
    s0 = grid.at_risk.astype(float)
    s1 = grid.risk_sum(Dc)
    s2 = grid.risk_sum(Dc[:, :, None] * Dc[:, None, :])
    live = s0 > 0
    mean = np.zeros_like(s1)
    mean[live] = s1[live] / s0[live, None]
    gram = np.einsum("k,kab->ab", grid.widths, s2) - np.einsum("k,ka,kb->ab", grid.widths * s0, mean, mean)
    hit = grid.status == cause
    resid = Dc[hit] - mean[grid.position[hit]]
    numer = resid.sum(axis=0)
    meat = resid.T @ resid
    if not hit.any():
        return LinYingFit(np.zeros(q), gram, meat, 0)
    try:
        if np.linalg.cond(gram) > 1e13:
            raise np.linalg.LinAlgError
        coef = np.linalg.solve(gram, numer)
    except np.linalg.LinAlgError:
        raise NuisanceError("singular Gram matrix: covariates are collinear") from None
    return LinYingFit(coef, gram, meat, int(hit.sum()))


def fit_outcome_gamma(sample: CompetingRisksSample, cause: int, design: str = "z",
                      grid: EventGrid | None = None, return_beta: bool = False):
    """Covariate coefficients of the cause-``cause`` linear working model.

    Parameters
    ----------
    design : {"z", "az"}
        ``"z"`` centres ``Z`` only; ``"az"`` fits design ``(A, Z)`` and
        returns the ``Z`` block.
    return_beta : bool
        With ``design="az"``, also return the treatment coefficient (an
        initial value for the hazard difference).
    """
    grid = grid or build_event_grid(sample)
    if design == "z":
        D, names = sample.covariates, sample.covariate_names
    elif design == "az":
        D = np.column_stack([sample.treatment, sample.covariates])
        names = ("treatment",) + sample.covariate_names
    else:
        raise NuisanceError(f"unknown gamma design {design!r}")
    fit = lin_ying(grid, D, cause, names)
    if fit.n_events == 0:
        warnings.warn(f"no events for cause {cause}; gamma set to 0", NoEventsWarning, stacklevel=2)
    gamma = fit.coef if design == "z" else fit.coef[1:]
    if return_beta:
        return gamma, (float(fit.coef[0]) if design == "az" else None)
    return gamma


@dataclass(frozen=True)
class BaselineTables:
    """Affine-in-beta cumulative baseline ``G_j(t; b) = P(t) - b Q(t) - R(t)``.

    ``jumps`` are the increments of ``P`` at grid times; ``q_rate`` and
    ``r_rate`` are the slopes of ``Q`` and ``R`` on each grid interval.
    ``valid`` flags intervals whose (weighted) risk set is nonempty.
    """

    cause: int
    method: str
    times: np.ndarray
    starts: np.ndarray
    widths: np.ndarray
    jumps: np.ndarray
    q_rate: np.ndarray
    r_rate: np.ndarray
    valid: np.ndarray

    def _at(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="left")
        k = np.minimum(k, self.times.size - 1)
        return t, k

    def P(self, t):
        t = np.asarray(t, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.jumps)])
        return cum[np.searchsorted(self.times, t, side="right")]

    def _linear(self, rate, t):
        t, k = self._at(t)
        cum = np.concatenate([[0.0], np.cumsum(rate * self.widths)])
        inside = np.clip(t - self.starts[k], 0.0, self.widths[k])
        return np.where(t <= 0, 0.0, cum[k] + rate[k] * inside)

    def Q(self, t):
        return self._linear(self.q_rate, t)

    def R(self, t):
        return self._linear(self.r_rate, t)

    def cumulative(self, t, beta_j: float):
        return self.P(t) - beta_j * self.Q(t) - self.R(t)


@dataclass(frozen=True)
class OutcomeModel:
    cause: int
    gamma: np.ndarray
    baseline: BaselineTables
    design: str = "z"
    beta_init: float | None = None


@dataclass(frozen=True)
class NuisanceSet:
    propensity: PropensityModel | ExternalPropensity
    censoring: UnitCensoring | CoxCensoring | ExternalCensoring
    outcomes: tuple[OutcomeModel, ...] = field(default_factory=tuple)

    @property
    def baseline_method(self) -> str | None:
        return self.outcomes[0].baseline.method if self.outcomes else None

    def summary(self) -> dict:
        return {
            "propensity": self.propensity.summary(),
            "censoring": self.censoring.summary(),
            "gamma": [list(map(float, m.gamma)) for m in self.outcomes],
            "baseline": self.baseline_method,
        }


def _weighted_risk(grid: EventGrid, w, values=None):
    """Risk-set sums of ``w * values`` where ``w`` is (n,) or (n, K)."""
    if w.ndim == 1:
        if values is None:
            return grid.risk_sum(w)
        return grid.risk_sum(w[:, None] * values)
    wm = w * grid.risk_mask()
    if values is None:
        return wm.sum(axis=0)
    return wm.T @ values


def baseline_weights(sample, grid, method: str, propensity=None, censoring=None) -> np.ndarray:
    """Per-subject Breslow weights; (n,) when time-invariant, else (n, K)."""
    if method == "plain":
        return np.ones(sample.n)
    if method != "weighted":
        raise NuisanceError(f"unknown baseline method {method!r}")
    if propensity is None or censoring is None:
        raise NuisanceError("weighted baseline needs propensity and censoring models")
    pi = propensity.evaluate(sample)
    base = sample.treatment * (1.0 - pi)
    log_sc = censoring.log_survival_left(sample, grid)
    if log_sc.shape == (1, 1):
        return base
    return base[:, None] * np.exp(-log_sc)


def fit_outcome_baseline(sample: CompetingRisksSample, cause: int, gamma, method: str = "plain",
                         propensity=None, censoring=None, grid: EventGrid | None = None,
                         weights=None) -> BaselineTables:
    """Breslow-type cumulative baseline for cause ``cause``.

    ``method="plain"`` gives the ordinary estimator; ``"weighted"`` reweights
    subject ``i`` by ``A_i (1 - pi(Z_i)) / S_c(u- | A_i, Z_i)``.  Explicit
    ``weights`` of shape (n,) or (n, K) override the weighted-method formula.
    """
    grid = grid or build_event_grid(sample, censoring.jump_times() if censoring is not None else None)
    gamma = np.asarray(gamma, dtype=float)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
    else:
        w = baseline_weights(sample, grid, method, propensity, censoring)
    total = _weighted_risk(grid, w)
    wa = _weighted_risk(grid, w, sample.treatment.astype(float)[:, None])[:, 0]
    wz = _weighted_risk(grid, w, sample.covariates)
    valid = total > 0
    safe = np.where(valid, total, 1.0)
    q_rate = np.where(valid, wa / safe, 0.0)
    r_rate = np.where(valid, (wz @ gamma) / safe, 0.0)
    if w.ndim == 1:
        num = grid.event_sum(w, cause)
    else:
        hit = grid.status == cause
        num = np.zeros(grid.size)
        np.add.at(num, grid.position[hit], w[hit, grid.position[hit]])
    if np.any(num[~valid] > 0):
        k = int(np.flatnonzero(num[~valid] > 0)[0])
        raise NuisanceError(f"weighted risk set empty at t={grid.times[~valid][k]:g}")
    jumps = np.where(valid, num / safe, 0.0)
    return BaselineTables(cause, method, grid.times, grid.starts, grid.widths, jumps, q_rate, r_rate, valid)


# --------------------------------------------------------------------------
# assembly and injection


def nuisance_grid(sample: CompetingRisksSample, censoring) -> EventGrid:
    """Event grid refined by the censoring model's jump times."""
    return build_event_grid(sample, censoring.jump_times())


def fit_outcomes(sample, propensity, censoring, method: str = "plain", design: str = "z",
                 grid: EventGrid | None = None) -> tuple[OutcomeModel, ...]:
    grid = grid or nuisance_grid(sample, censoring)
    models = []
    for j in range(1, sample.n_causes + 1):
        gamma, beta_init = fit_outcome_gamma(sample, j, design, grid, return_beta=True)
        tables = fit_outcome_baseline(sample, j, gamma, method, propensity, censoring, grid)
        models.append(OutcomeModel(j, gamma, tables, design, beta_init))
    return tuple(models)


def inject_external_nuisance(pi_table, sc_table=None, n: int | None = None):
    """Wrap caller-supplied nuisances as external model variants.

    Parameters
    ----------
    pi_table : array-like or mapping
        Propensity per row (0-based index, or a mapping ``row -> value``).
    sc_table : sequence or mapping, optional
        ``row -> (times, values)`` (same table for both arms) or
        ``arm -> {row -> (times, values)}``.  ``None`` means unit censoring.

    Returns
    -------
    (ExternalPropensity, ExternalCensoring | UnitCensoring)
    """
    if isinstance(pi_table, Mapping):
        n = n or len(pi_table)
        pi = np.array([pi_table[i] for i in range(n)], dtype=float)
    else:
        pi = np.asarray(pi_table, dtype=float)
    propensity = ExternalPropensity(pi)
    if sc_table is None:
        return propensity, UnitCensoring()
    if isinstance(sc_table, Mapping) and set(sc_table) <= {0, 1} and all(
            isinstance(v, Mapping) for v in sc_table.values()):
        tables = {arm: [rows.get(i, (np.empty(0), np.empty(0))) for i in range(pi.size)]
                  for arm, rows in sc_table.items()}
    else:
        rows = sc_table if not isinstance(sc_table, Mapping) else [
            sc_table.get(i, (np.empty(0), np.empty(0))) for i in range(pi.size)]
        tables = {-1: list(rows)}
    return propensity, ExternalCensoring(tables)


def _sc_tables(by_arm: dict, n: int) -> dict:
    empty = (np.empty(0), np.empty(0))
    return {arm: [rows.get(i, empty) for i in range(n)] for arm, rows in by_arm.items()}


def read_external_nuisance(pi_path=None, sc_path=None, n: int | None = None):
    """Read injection files.

    ``pi_path`` has columns ``row_id,pi_hat``; ``sc_path`` is long format
    ``row_id,time,sc_value`` with an optional ``arm`` column.  ``row_id`` is
    the 1-based data row of the sample file.

    Returns
    -------
    (ExternalPropensity or None, ExternalCensoring or None)
        ``None`` for a file that was not given.
    """
    propensity = None
    if pi_path is not None:
        with Path(pi_path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or not {"row_id", "pi_hat"} <= set(rows[0]):
            raise DataError(f"{pi_path}: need columns row_id, pi_hat")
        pi = {}
        for k, r in enumerate(rows, start=1):
            try:
                pi[int(r["row_id"]) - 1] = float(r["pi_hat"])
            except (TypeError, ValueError):
                raise DataError(f"{pi_path}: row {k}: non-numeric row_id or pi_hat") from None
        n = n or len(pi)
        if sorted(pi) != list(range(n)):
            raise DataError(f"{pi_path}: row_id must cover 1..{n}")
        propensity = ExternalPropensity(np.array([pi[i] for i in range(n)]))
    if sc_path is None:
        return propensity, None
    with Path(sc_path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"row_id", "time", "sc_value"} <= set(rows[0]):
        raise DataError(f"{sc_path}: need columns row_id, time, sc_value")
    by_arm: dict[int, dict[int, list]] = {}
    for k, r in enumerate(rows, start=1):
        try:
            arm = int(r["arm"]) if r.get("arm", "") not in ("", None) else -1
            entry = (int(r["row_id"]) - 1, float(r["time"]), float(r["sc_value"]))
        except (TypeError, ValueError):
            raise DataError(f"{sc_path}: row {k}: non-numeric value") from None
        by_arm.setdefault(arm, {}).setdefault(entry[0], []).append(entry[1:])
    if set(by_arm) - {-1, 0, 1} or (-1 in by_arm and len(by_arm) > 1):
        raise DataError(f"{sc_path}: arm must be 0 or 1 on every row, or absent")
    tables = {}
    for arm, table in by_arm.items():
        rows_out = {}
        for i, pairs in table.items():
            pairs.sort()
            rows_out[i] = (np.array([t for t, _ in pairs]), np.array([v for _, v in pairs]))
        tables[arm] = rows_out
    if n is None:
        n = 1 + max(i for t in tables.values() for i in t)
    return propensity, ExternalCensoring(_sc_tables(tables, n))
