"""Competing-risks samples, the counting-process event grid and CSV I/O.

Status coding is fixed: ``0`` means right-censored and ``j >= 1`` means a
failure from cause ``j``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class SubjectRecord:
    time: float
    status: int
    treatment: int
    covariates: tuple[float, ...]

    @property
    def failed(self) -> bool:
        return self.status > 0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CompetingRisksSample:
    """Right-censored competing-risks data held column-wise.

    Parameters
    ----------
    time : array of shape (n,)
        Observed times ``X = min(T, C)``; strictly positive and finite.
    status : array of shape (n,)
        0 for censored, ``j`` for an observed failure of cause ``j``.
    treatment : array of shape (n,)
        Binary treatment indicator.
    covariates : array of shape (n, p)
        Baseline covariates.
    covariate_names : sequence of str, optional
    n_causes : int, optional
        Number of causes ``J``; inferred as ``max(status)`` (at least 1).
    tau : float, optional
        Upper limit of follow-up; defaults to the largest observed time.
    """

    time: np.ndarray
    status: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()
    n_causes: int = 0
    tau: float = 0.0

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).reshape(-1)
        n = time.size
        status = np.asarray(self.status)
        treatment = np.asarray(self.treatment)
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(n, -1) if n else cov.reshape(0, 0)
        if n == 0:
            raise DataError("sample is empty")
        if status.shape != (n,) or treatment.shape != (n,) or cov.shape[0] != n:
            raise DataError("time, status, treatment and covariates differ in length")
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            bad = int(np.flatnonzero(~(np.isfinite(time) & (time > 0)))[0])
            raise DataError(f"record {bad}: time must be positive and finite")
        if not np.all(status == np.round(status)) or np.any(status < 0):
            raise DataError("status must be a nonnegative integer")
        status = status.astype(np.int64)
        if not np.all((treatment == 0) | (treatment == 1)):
            raise DataError("treatment must be 0 or 1")
        treatment = treatment.astype(np.int64)
        if not np.all(np.isfinite(cov)):
            raise DataError("covariates must be finite")

        n_causes = int(self.n_causes) or max(int(status.max()), 1)
        if status.max() > n_causes:
            raise DataError(f"status {int(status.max())} exceeds cause count {n_causes}")
        tau = float(self.tau) or float(time.max())
        if tau <= 0:
            raise DataError("tau must be positive")

        names = tuple(self.covariate_names) or tuple(f"z{k + 1}" for k in range(cov.shape[1]))
        if len(names) != cov.shape[1]:
            raise DataError("covariate_names length does not match covariate columns")

        object.__setattr__(self, "time", _frozen(time))
        object.__setattr__(self, "status", _frozen(status))
        object.__setattr__(self, "treatment", _frozen(treatment))
        object.__setattr__(self, "covariates", _frozen(cov))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "n_causes", n_causes)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def event_counts(self) -> np.ndarray:
        """Number of observed failures per cause (length ``J``)."""
        return np.array([(self.status == j).sum() for j in range(1, self.n_causes + 1)])

    def subset(self, index: Sequence[int]) -> "CompetingRisksSample":
        """Rows ``index`` (repeats allowed); keeps ``J`` and ``tau``."""
        index = np.asarray(index, dtype=np.int64)
        return CompetingRisksSample(
            self.time[index], self.status[index], self.treatment[index],
            self.covariates[index], self.covariate_names, self.n_causes, self.tau,
        )

    def with_covariates(self, covariates, names=None) -> "CompetingRisksSample":
        return CompetingRisksSample(
            self.time, self.status, self.treatment, covariates,
            tuple(names) if names is not None else self.covariate_names,
            self.n_causes, self.tau,
        )

    def with_tau(self, tau: float) -> "CompetingRisksSample":
        return CompetingRisksSample(
            self.time, self.status, self.treatment, self.covariates,
            self.covariate_names, self.n_causes, tau,
        )

    def relabel_causes(self, order: Sequence[int]) -> "CompetingRisksSample":
        """Rename cause ``order[k]`` to ``k + 1``.

        ``order`` is a permutation of ``1..J``; censored rows are unchanged.
        """
        order = list(order)
        if sorted(order) != list(range(1, self.n_causes + 1)):
            raise DataError("order must be a permutation of 1..J")
        mapping = np.zeros(self.n_causes + 1, dtype=np.int64)
        for new, old in enumerate(order, start=1):
            mapping[old] = new
        return CompetingRisksSample(
            self.time, mapping[self.status], self.treatment, self.covariates,
            self.covariate_names, self.n_causes, self.tau,
        )

    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(float(t), int(s), int(a), tuple(float(v) for v in z))
            for t, s, a, z in zip(self.time, self.status, self.treatment, self.covariates)
        ]

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord], covariate_names=(), n_causes=0, tau=0.0):
        records = list(records)
        if not records:
            raise DataError("sample is empty")
        p = len(records[0].covariates)
        if any(len(r.covariates) != p for r in records):
            raise DataError("covariate vectors differ in length across records")
        return cls(
            np.array([r.time for r in records], dtype=float),
            np.array([r.status for r in records]),
            np.array([r.treatment for r in records]),
            np.array([r.covariates for r in records], dtype=float).reshape(len(records), p),
            tuple(covariate_names), n_causes, tau,
        )


@dataclass(frozen=True, eq=False)
class EventGrid:
    """Counting-process summary of a sample on its ordered distinct times.

    Interval ``k`` is ``(starts[k], times[k]]``.  Subject ``i`` is at risk on
    interval ``k`` iff ``k <= position[i]``, i.e. ``X_i >= times[k]``; events
    and censorings tied at a time therefore share that time's risk set.

    Times beyond ``tau`` are administratively censored at ``tau``.  Extra
    (refinement) times split intervals without changing any risk set.
    """

    times: np.ndarray
    starts: np.ndarray
    widths: np.ndarray
    at_risk: np.ndarray
    treated_at_risk: np.ndarray
    events: np.ndarray  # (K, J) counts
    censorings: np.ndarray  # (K,) counts of status 0
    position: np.ndarray  # (n,) grid index of each subject's exit time
    status: np.ndarray  # (n,) status after truncation at tau
    exit_time: np.ndarray  # (n,) min(X, tau)
    tau: float
    n_causes: int
    _risk_mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.times.size

    @property
    def n(self) -> int:
        return self.position.size

    def risk_mask(self) -> np.ndarray:
        """Boolean (n, K) at-risk indicator ``Y_i`` on each interval."""
        if self._risk_mask is None:
            mask = np.arange(self.size)[None, :] <= self.position[:, None]
            mask.setflags(write=False)
            object.__setattr__(self, "_risk_mask", mask)
        return self._risk_mask

    def risk_sum(self, values) -> np.ndarray:
        """Sum of per-subject ``values`` over each interval's risk set.

        ``values`` has shape (n,) or (n, ...); the result has shape (K, ...).
        Computed by reverse cumulative sums, so it is exact up to rounding.
        """
        values = np.asarray(values, dtype=float)
        out = np.zeros((self.size,) + values.shape[1:])
        np.add.at(out, self.position, values)
        return np.cumsum(out[::-1], axis=0)[::-1]

    def event_sum(self, values, cause: int) -> np.ndarray:
        """Per grid time, sum of ``values`` over subjects failing from ``cause`` there."""
        values = np.asarray(values, dtype=float)
        out = np.zeros((self.size,) + values.shape[1:])
        hit = self.status == cause
        np.add.at(out, self.position[hit], values[hit])
        return out

    def integrate(self, rate) -> float:
        """Integral over ``[0, tau]`` of a function constant on each interval."""
        return float(np.dot(np.asarray(rate, dtype=float), self.widths))


def build_event_grid(sample: CompetingRisksSample, extra_times: Iterable[float] | None = None) -> EventGrid:
    """Build the event grid of ``sample``.

    Parameters
    ----------
    sample : CompetingRisksSample
    extra_times : iterable of float, optional
        Additional cut points in ``(0, tau)`` (e.g. jump times of an external
        censoring-survival table) so that every left-continuous nuisance is
        constant on each interval.
    """
    tau = sample.tau
    exit_time = np.minimum(sample.time, tau)
    status = np.where(sample.time <= tau, sample.status, 0)
    cuts = [exit_time]
    if extra_times is not None:
        extra = np.asarray(list(extra_times), dtype=float)
        extra = extra[(extra > 0) & (extra < exit_time.max())]
        cuts.append(extra)
    times = np.unique(np.concatenate(cuts))
    position = np.searchsorted(times, exit_time)
    starts = np.concatenate([[0.0], times[:-1]])
    widths = times - starts

    k = times.size
    J = sample.n_causes
    count = np.bincount(position, minlength=k)
    at_risk = np.cumsum(count[::-1])[::-1]
    treated = np.bincount(position, weights=sample.treatment, minlength=k)
    treated_at_risk = np.cumsum(treated[::-1])[::-1]
    events = np.zeros((k, J), dtype=np.int64)
    for j in range(1, J + 1):
        events[:, j - 1] = np.bincount(position[status == j], minlength=k)
    censorings = np.bincount(position[status == 0], minlength=k)

    arrays = dict(
        times=times, starts=starts, widths=widths, at_risk=at_risk,
        treated_at_risk=treated_at_risk.round().astype(np.int64), events=events,
        censorings=censorings, position=position, status=status, exit_time=exit_time,
    )
    return EventGrid(**{key: _frozen(val) for key, val in arrays.items()}, tau=tau, n_causes=J)


REQUIRED_COLUMNS = ("time", "status", "treatment")


def load_csv(path, covariates: Sequence[str] | None = None, tau: float | None = None,
             n_causes: int | None = None) -> CompetingRisksSample:
    """Read a sample from a CSV file.

    The header must contain ``time``, ``status`` and ``treatment``; every
    other column is a covariate unless ``covariates`` names a subset.  Errors
    name the 1-based data row (header excluded).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if any(cell.strip() for cell in row)]

    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise DataError(f"missing column '{col}'")
    if covariates is None:
        covariates = [h for h in header if h not in REQUIRED_COLUMNS and h != "row_id"]
    else:
        covariates = list(covariates)
        for col in covariates:
            if col not in header:
                raise DataError(f"missing column '{col}'")
    if not covariates:
        raise DataError("at least one covariate column is required")

    index = {h: k for k, h in enumerate(header)}
    wanted = list(REQUIRED_COLUMNS) + covariates
    values = np.empty((len(rows), len(wanted)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {r}: expected {len(header)} fields, found {len(row)}")
        for c, name in enumerate(wanted):
            cell = row[index[name]].strip()
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataError(f"row {r}: non-numeric value {cell!r} in column '{name}'") from None
            if not math.isfinite(values[r - 1, c]):
                raise DataError(f"row {r}: non-finite value in column '{name}'")

    if not len(rows):
        raise DataError(f"{path}: no data rows")
    time, status, treatment = values[:, 0], values[:, 1], values[:, 2]
    for r in range(len(rows)):
        if time[r] <= 0:
            raise DataError(f"row {r + 1}: time must be positive, got {time[r]:g}")
        if status[r] < 0 or status[r] != round(status[r]):
            raise DataError(f"row {r + 1}: status must be an integer in 0..J, got {status[r]:g}")
        if n_causes is not None and status[r] > n_causes:
            raise DataError(f"row {r + 1}: status {int(status[r])} outside 0..{n_causes}")
        if treatment[r] not in (0.0, 1.0):
            raise DataError(f"row {r + 1}: treatment must be 0 or 1, got {treatment[r]:g}")
    return CompetingRisksSample(
        time, status.astype(np.int64), treatment.astype(np.int64), values[:, 3:],
        tuple(covariates), n_causes or 0, tau or 0.0,
    )


def write_csv(sample: CompetingRisksSample, path) -> None:
    """Write ``sample`` in the layout accepted by :func:`load_csv`."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(REQUIRED_COLUMNS) + list(sample.covariate_names))
        for t, s, a, z in zip(sample.time, sample.status, sample.treatment, sample.covariates):
            writer.writerow([repr(float(t)), int(s), int(a)] + [repr(float(v)) for v in z])
