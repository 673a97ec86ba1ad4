"""Simulation scenarios, Monte Carlo driver, summary tables and the efficient-score oracle.

All eight data-generating mechanisms have cause-specific hazards that are
constant in time given ``(A, Z)``, so event times are drawn exactly: the
total time is exponential with rate ``h_1 + h_2`` and the cause is chosen with
probability ``h_j / (h_1 + h_2)``.
"""

from __future__ import annotations

import csv
import io
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._integrals import composite_gl
from ._rng import stream
from .data import CompetingRisksSample
from .pipeline import fit_point
from .scores import Z_975, ScoreConfig

SCENARIOS = tuple(range(1, 9))
BETA_TRUE = (0.1, 0.1)

_UNIFORM_Z = {1, 2, 5, 6, 7}
_ALL_MAIN = "z1,z2"
_WITH_INTERACTION = "z1,z2,z1:z2"


class ScenarioError(ValueError):
    pass


def _check_scenario(scenario) -> int:
    if scenario not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {scenario!r}; valid ids are {', '.join(map(str, SCENARIOS))}")
    return int(scenario)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulated data set: scenario id, sample size and seed.

    ``rep`` selects the replicate stream, so replicate ``r`` of a study
    seeded with ``s`` is ``ScenarioSpec(k, n, s, rep=r)``.  ``overrides`` may
    set ``beta`` (true hazard differences), ``z`` (one covariate vector for
    every subject) or ``censoring=False`` (no censoring).
    """

    scenario: int
    n: int = 1000
    seed: int = 0
    rep: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_scenario(self.scenario)
        if self.n < 10:
            raise ScenarioError("n must be at least 10")


@dataclass(frozen=True)
class TruthSet:
    """True nuisance functions and hazard differences of a scenario."""

    scenario: int
    beta: tuple[float, ...] = BETA_TRUE

    def propensity(self, Z) -> np.ndarray:
        z1, z2 = np.asarray(Z, dtype=float).T
        k = self.scenario
        if k in (1, 5):
            eta = z1 - z2
        elif k in (2, 6, 7):
            eta = 0.25 * (z1 - z2) - 0.5 * z1 * z2
        else:
            eta = 0.25 * (z1 - z2) + 0.5 * z1 * z2 - 1.0
        return expit(eta)

    def baseline_hazard(self, Z) -> np.ndarray:
        """``lambda_j(Z)``; identical for both causes in every scenario."""
        z1, z2 = np.asarray(Z, dtype=float).T
        k = self.scenario
        if k in (1, 5):
            return 1.0 + z1 + z2
        if k in (2, 6, 7):
            return 0.3 + z1 + z2
        if k == 4:
            return np.exp(z1 + z2)
        return 0.3 + np.abs(z1) + np.log1p(np.abs(z2))

    def hazard(self, cause: int, a, Z, beta=None) -> np.ndarray:
        beta = self.beta if beta is None else beta
        return beta[cause - 1] * np.asarray(a, dtype=float) + self.baseline_hazard(Z)

    def censoring_rate(self, a, Z) -> np.ndarray:
        """Constant censoring hazard for the exponential scenarios 5, 6 and 8."""
        z1, z2 = np.asarray(Z, dtype=float).T
        a = np.asarray(a, dtype=float)
        if self.scenario in (5, 6):
            return np.exp(-1.0 + a + z1 + z2)
        if self.scenario == 8:
            return np.exp(-a + z1 - z2)
        raise ScenarioError(f"scenario {self.scenario} has no constant censoring rate")

    def _s7_shift(self, a, Z):
        z1, z2 = np.asarray(Z, dtype=float).T
        return np.asarray(a, dtype=float) - z1 - z2

    def log_censor_survival(self, t, a, Z) -> np.ndarray:
        """``log S_c(t | a, Z)``; ``t`` broadcasts against per-subject ``a`` and ``Z`` rows.

        ``t`` may be of shape ``(n,)`` or ``(n, m)``.
        """
        t = np.asarray(t, dtype=float)
        k = self.scenario
        if k <= 4:
            with np.errstate(divide="ignore"):
                return np.log(np.clip(1.0 - t / 3.0, 0.0, None))
        col = (lambda v: v[:, None]) if t.ndim == 2 else (lambda v: v)
        if k == 7:
            c = col(self._s7_shift(a, Z))
            u0 = np.maximum(-c / 2.0, 0.0)
            active = np.maximum(t - u0, 0.0)
            # int_{u0}^{t} (2u + c) du with the hazard clamped at 0 before u0
            return -(active * (active + 2.0 * u0 + c))
        return -col(self.censoring_rate(a, Z)) * t


def _draw_censoring(truth: TruthSet, rng, a, Z):
    n = a.size
    k = truth.scenario
    if k <= 4:
        return rng.uniform(0.0, 3.0, n)
    e = rng.standard_exponential(n)
    if k == 7:
        c = truth._s7_shift(a, Z)
        pos = c >= 0
        t = np.empty(n)
        t[pos] = (-c[pos] + np.sqrt(c[pos] ** 2 + 4.0 * e[pos])) / 2.0
        t[~pos] = -c[~pos] / 2.0 + np.sqrt(e[~pos])
        return t
    return e / truth.censoring_rate(a, Z)


def generate_scenario(spec: ScenarioSpec) -> tuple[CompetingRisksSample, TruthSet]:
    """Draw one data set from scenario ``spec.scenario``.

    Returns
    -------
    sample : CompetingRisksSample
        Two causes, covariates ``z1, z2`` and ``tau`` equal to the largest time.
    truth : TruthSet
    """
    truth = TruthSet(spec.scenario, tuple(spec.overrides.get("beta", BETA_TRUE)))
    rng = stream(spec.seed, spec.rep)
    n = spec.n
    if spec.scenario in _UNIFORM_Z:
        Z = rng.uniform(0.0, 0.5, (n, 2))
    else:
        z1 = rng.standard_normal(n)
        Z = np.column_stack([z1, z1 + rng.standard_normal(n)])
    if "z" in spec.overrides:
        Z = np.tile(np.asarray(spec.overrides["z"], dtype=float), (n, 1))
    a = (rng.uniform(size=n) < truth.propensity(Z)).astype(np.int64)
    h1 = truth.hazard(1, a, Z)
    h2 = truth.hazard(2, a, Z)
    t_event = rng.standard_exponential(n) / (h1 + h2)
    cause = np.where(rng.uniform(size=n) * (h1 + h2) < h1, 1, 2)
    c = _draw_censoring(truth, rng, a, Z)
    if not spec.overrides.get("censoring", True):
        c = np.full(n, np.inf)
    time = np.minimum(t_event, c)
    status = np.where(t_event <= c, cause, 0)
    sample = CompetingRisksSample(time, status, a, Z, ("z1", "z2"), n_causes=2)
    return sample, truth


def default_ps_spec(scenario: int) -> str:
    """Propensity working model: interaction form where the truth has one with a normal ``Z``."""
    return _WITH_INTERACTION if _check_scenario(scenario) in (3, 4, 8) else _ALL_MAIN


@dataclass(frozen=True)
class MethodSpec:
    """An estimator in a Monte Carlo study, e.g. ``"score1"`` or ``"score1s+boot"``."""

    name: str
    config: ScoreConfig
    bootstrap: bool = False

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        text = text.strip()
        base, _, suffix = text.partition("+")
        if suffix not in ("", "boot"):
            raise ScenarioError(f"unknown method suffix {suffix!r} in {text!r}")
        try:
            config = ScoreConfig(base)
        except ValueError as err:
            raise ScenarioError(str(err)) from None
        name = config.method + ("+boot" if suffix else "")
        return cls(name, config, bool(suffix))


def parse_methods(methods) -> list[MethodSpec]:
    if isinstance(methods, str):
        methods = [m for m in methods.split(",") if m.strip()]
    out = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    if not out:
        raise ScenarioError("no methods given")
    return out


def _method_seed(seed: int, rep: int, name: str) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, rep, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _run_replicate(args):
    spec, methods, bootstrap_b = args
    sample, _ = generate_scenario(spec)
    ps_spec = default_ps_spec(spec.scenario)
    row = {}
    for m in methods:
        try:
            est = fit_point(sample, m.config, ps_spec=ps_spec, with_variance=not m.bootstrap)
            if m.bootstrap:
                from .variance import bootstrap

                cov = bootstrap(sample, m.config, bootstrap_b, _method_seed(spec.seed, spec.rep, m.name),
                                ps_spec=ps_spec)
                est = est.with_covariance(cov.matrix, "bootstrap")
            row[m.name] = (np.asarray(est.beta, dtype=float), np.asarray(est.se, dtype=float), None)
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as err:
            row[m.name] = (None, None, f"{type(err).__name__}: {err}")
    return row


@dataclass
class MethodResult:
    """Per-replicate estimates of one method; failed replicates hold NaN."""

    beta: np.ndarray
    se: np.ndarray
    errors: dict

    @property
    def ok(self) -> np.ndarray:
        return np.all(np.isfinite(self.beta), axis=1)


@dataclass
class MonteCarloSummary:
    """Aggregated Monte Carlo results per method and component."""

    scenario: int
    n: int
    reps: int
    seed: int
    truth: tuple[float, ...]
    results: dict
    stats: dict

    def rows(self) -> list[dict]:
        out = []
        for name, per in self.stats.items():
            for j, s in enumerate(per, start=1):
                out.append({"method": name, "component": f"beta{j}", **s})
        return out

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "n": self.n, "reps": self.reps, "seed": self.seed,
                "truth": list(self.truth), "rows": [_jsonable_row(r) for r in self.rows()],
                "failures": {k: {str(r): e for r, e in v.errors.items()} for k, v in self.results.items()}}


def _jsonable_row(row):
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}


def _component_stats(beta, se, truth) -> list[dict]:
    ok = np.all(np.isfinite(beta), axis=1)
    b, s = beta[ok], se[ok]
    out = []
    for j in range(beta.shape[1]):
        m = int(ok.sum())
        bias = float(np.mean(b[:, j]) - truth[j]) if m else math.nan
        sd = float(np.std(b[:, j], ddof=1)) if m > 1 else math.nan
        finite = np.isfinite(s[:, j])
        mean_se = float(np.mean(s[finite, j])) if finite.any() else math.nan
        median_se = float(np.median(s[finite, j])) if finite.any() else math.nan
        lo, hi = b[:, j] - Z_975 * s[:, j], b[:, j] + Z_975 * s[:, j]
        cp = float(np.mean((lo <= truth[j]) & (truth[j] <= hi))) if finite.all() and m else math.nan
        out.append({"bias": bias, "sd": sd, "se": mean_se, "median_se": median_se, "cp": cp,
                    "reps": m, "failures": int(beta.shape[0] - m)})
    return out


def run_monte_carlo(spec: ScenarioSpec, methods, reps: int, seed: int | None = None, jobs: int = 1,
                    bootstrap_b: int = 100) -> MonteCarloSummary:
    """Simulate ``reps`` data sets and fit every method on each.

    Parameters
    ----------
    spec : ScenarioSpec
        Scenario and sample size; ``spec.seed`` is used unless ``seed`` is given.
    methods : str or sequence
        Comma-separated names or :class:`MethodSpec` objects.  A ``+boot``
        suffix replaces the model-based SE by a bootstrap SE.
    jobs : int
        Worker processes.  Replicate ``r`` always uses the stream keyed by
        ``(seed, r)``, so results do not depend on ``jobs`` or method order.
    """
    if reps < 1:
        raise ScenarioError("reps must be at least 1")
    methods = parse_methods(methods)
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ScenarioError("duplicate methods")
    seed = spec.seed if seed is None else seed
    tasks = [(ScenarioSpec(spec.scenario, spec.n, seed, r, spec.overrides), methods, bootstrap_b)
             for r in range(reps)]
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_replicate, tasks, chunksize=max(1, reps // (4 * jobs))))
    else:
        rows = [_run_replicate(t) for t in tasks]

    truth = tuple(spec.overrides.get("beta", BETA_TRUE))
    J = len(truth)
    results, stats = {}, {}
    for name in sorted(names):
        beta = np.full((reps, J), np.nan)
        se = np.full((reps, J), np.nan)
        errors = {}
        for r, row in enumerate(rows):
            b, s, err = row[name]
            if err is None:
                beta[r], se[r] = b, s
            else:
                errors[r] = err
        results[name] = MethodResult(beta, se, errors)
        stats[name] = _component_stats(beta, se, truth)
    return MonteCarloSummary(spec.scenario, spec.n, reps, seed, truth, results, stats)


_COLUMNS = ("method", "component", "bias", "sd", "se", "cp", "median_se", "reps", "failures")


def _fmt(v, decimals):
    if isinstance(v, float):
        if math.isnan(v):
            return "NA"
        return f"{v:.{decimals}f}" if decimals is not None else repr(v)
    return str(v)


def summarize_to_table(summary: MonteCarloSummary, format: str = "text", decimals: int | None = 3) -> str:
    """Render the Bias, SD, SE and CP columns per method and component.

    ``format="csv"`` also carries the median SE and the replicate and failure
    counts; pass ``decimals=None`` for shortest round-trip floats.  Undefined
    statistics (e.g. SD from one replicate) render as ``NA``.
    """
    rows = summary.rows()
    if not rows:
        raise ScenarioError("empty summary")
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c], decimals) for c in _COLUMNS])
        return buf.getvalue()
    if format != "text":
        raise ScenarioError(f"unknown format {format!r}")
    head = f"{'method':<16}{'':<7}{'Bias':>8}{'SD':>8}{'SE':>8}{'CP':>8}"
    lines = [f"Scenario {summary.scenario}: n={summary.n}, reps={summary.reps}, seed={summary.seed}", head]
    for r in rows:
        stats = "".join(f"{_fmt(r[c], decimals):>8}" for c in ("bias", "sd", "se", "cp"))
        lines.append(f"{r['method']:<16}{r['component']:<7}{stats}")
    fails = [f"{m}: {v.errors.__len__()} failed" for m, v in summary.results.items() if v.errors]
    if fails:
        lines.append("failures: " + "; ".join(fails))
    return "\n".join(lines) + "\n"


def parse_summary_csv(text: str) -> list[dict]:
    """Inverse of ``summarize_to_table(..., format="csv")``; ``NA`` becomes NaN."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            if k in ("method", "component"):
                row[k] = v
            elif k in ("reps", "failures"):
                row[k] = int(v)
            else:
                row[k] = math.nan if v == "NA" else float(v)
        out.append(row)
    return out


def _efficient_score_terms(sample: CompetingRisksSample, truth: TruthSet, beta, use_censoring: bool,
                           panels: int, order: int) -> np.ndarray:
    beta = np.asarray(truth.beta if beta is None else beta, dtype=float)
    b = float(beta.sum())
    Z = sample.covariates
    A = sample.treatment.astype(float)
    X = sample.time
    pi = truth.propensity(Z)
    log_odds_pi = np.log(pi) - np.log1p(-pi)
    ones, zeros = np.ones(sample.n), np.zeros(sample.n)
    out = np.empty((sample.n, beta.size))
    for j in range(1, beta.size + 1):
        h1 = truth.hazard(j, ones, Z, beta)
        h0 = truth.hazard(j, zeros, Z, beta)
        base = log_odds_pi - np.log(h1) + np.log(h0)

        def ratio(t):
            eta = base[:, None] - b * t
            if use_censoring:
                eta = eta + truth.log_censor_survival(t, ones, Z) - truth.log_censor_survival(t, zeros, Z)
            return expit(eta)

        at_exit = ratio(X[:, None])[:, 0]
        h_own = truth.hazard(j, A, Z, beta)
        jump = np.where(sample.status == j, (A - at_exit) / h_own, 0.0)
        compensator = composite_gl(lambda t: A[:, None] - ratio(t), X, panels, order)
        out[:, j - 1] = jump - compensator
    return out


def oracle_efficient_score(sample: CompetingRisksSample, truth: TruthSet, beta=None, per_subject: bool = False,
                           use_censoring: bool = True, panels: int = 8, order: int = 16):
    """Efficient score evaluated with the true nuisance functions.

    Per subject and cause ``j`` this is
    ``(A - R_j(X)) 1{cause j} / h_j(X) - int_0^X (A - R_j(t)) dt`` where
    ``R_j(t)`` is the two-point conditional mean of ``A`` weighted by
    ``S_c(t | a, Z) exp(-b a t) / h_j(a, Z)``.  ``use_censoring=False`` drops
    ``S_c`` from ``R_j``, which is exact when censoring ignores ``A``.

    Returns the sample mean (length ``J``) or, with ``per_subject``, the
    ``(n, J)`` array.
    """
    terms = _efficient_score_terms(sample, truth, beta, use_censoring, panels, order)
    return terms if per_subject else terms.mean(axis=0)
