"""Weighted estimators, total variation curves and effective sample size."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .chain import WeightedTrace
from .errors import DimensionMismatch, EmptyTrace, ZeroVariance

ESS_CUTOFF = 0.05


def _apply(h: Callable, states: np.ndarray) -> np.ndarray:
    """Evaluate ``h`` on every state, vectorised when ``h`` allows it."""
    try:
        v = np.asarray(h(states), dtype=float)
        if v.shape == states.shape:
            return v
    except (TypeError, ValueError):
        pass
    return np.array([h(s) for s in states], dtype=float)


class WeightedEstimator:
    """Running ``sum(w h) / sum(w)``."""

    def __init__(self):
        self.numerator = 0.0
        self.denominator = 0.0
        self.count = 0

    def add(self, value: float, weight: float) -> None:
        if not weight > 0:
            raise ValueError("weights must be positive")
        self.numerator += weight * value
        self.denominator += weight
        self.count += 1

    def extend(self, values, weights) -> None:
        values = np.asarray(values, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if values.shape != weights.shape:
            raise DimensionMismatch("values and weights differ in length")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        self.numerator += float(np.dot(values, weights))
        self.denominator += float(weights.sum())
        self.count += len(values)

    @property
    def estimate(self) -> float:
        if self.count == 0:
            raise EmptyTrace("no samples recorded")
        return self.numerator / self.denominator


def weighted_mean(trace: WeightedTrace, h: Callable) -> float:
    """Consistent estimate of ``E_pi[h]`` from a weighted jump-chain trace."""
    if len(trace) == 0:
        raise EmptyTrace("cannot estimate from an empty trace")
    est = WeightedEstimator()
    est.extend(_apply(h, trace.states), trace.weights)
    return est.estimate


def unweighted_mean(trace: WeightedTrace, h: Callable) -> float:
    """Plain average over jump states; converges to the jump chain's own law."""
    if len(trace) == 0:
        raise EmptyTrace("cannot estimate from an empty trace")
    return float(np.mean(_apply(h, trace.states)))


def tvd(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"vectors of shape {p.shape} and {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass
class TvdCurve:
    checkpoints: np.ndarray
    per_run: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.per_run.mean(axis=0)

    def at(self, n: int) -> float:
        i = int(np.searchsorted(self.checkpoints, n))
        if i >= len(self.checkpoints) or self.checkpoints[i] != n:
            raise KeyError(f"checkpoint {n} was not recorded")
        return float(self.mean[i])


def running_tvd(categories, weights, exact, checkpoints) -> np.ndarray:
    """TVD between the running weighted law of the first ``n`` samples and ``exact``.

    ``categories`` are integer indices into ``exact``.
    """
    cat = np.asarray(categories, dtype=np.int64)
    exact = np.asarray(exact, dtype=float)
    w = np.ones(len(cat)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != cat.shape:
        raise DimensionMismatch("categories and weights differ in length")
    if len(cat) and (cat.min() < 0 or cat.max() >= len(exact)):
        raise DimensionMismatch("a category falls outside the exact distribution")
    cps = np.asarray(checkpoints, dtype=np.int64)
    if np.any(np.diff(cps) <= 0) or (len(cps) and (cps[0] < 1 or cps[-1] > len(cat))):
        raise ValueError("checkpoints must increase within 1..len(samples)")
    counts = np.zeros(len(exact))
    out = np.empty(len(cps))
    prev = 0
    for i, n in enumerate(cps):
        counts += np.bincount(cat[prev:n], weights=w[prev:n], minlength=len(exact))
        prev = n
        out[i] = tvd(counts / counts.sum(), exact)
    return out


def tvd_curve(runs: Sequence, exact, checkpoints, summary: Callable | None = None) -> TvdCurve:
    """Average over runs of the within-run running TVD.

    Each run is a :class:`WeightedTrace` or a plain state sequence. ``summary``
    maps states to category indices of ``exact`` (identity if omitted).
    """
    rows = []
    for run in runs:
        if isinstance(run, WeightedTrace):
            states, weights = run.states, run.weights
        else:
            states, weights = np.asarray(run), None
        cat = states if summary is None else _apply(summary, states).astype(np.int64)
        rows.append(running_tvd(cat, weights, exact, checkpoints))
    return TvdCurve(np.asarray(checkpoints, dtype=np.int64), np.array(rows))


@dataclass
class EssReport:
    n: int
    ess: float
    cutoff_lag: int
    rho_sum: float
    super_efficient: bool
    seconds: float | None = None
    cutoff: float = ESS_CUTOFF

    @property
    def ess_per_iter(self) -> float:
        return self.ess / self.n

    @property
    def ess_per_sec(self) -> float | None:
        if not self.seconds:
            return None
        return self.ess / self.seconds

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ess_per_iter"] = self.ess_per_iter
        d["ess_per_sec"] = self.ess_per_sec
        return d


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelations at lags ``0 .. n-1`` (FFT, biased normalisation)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    d = x - x.mean()
    f = np.fft.rfft(d, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        raise ZeroVariance("the sequence is constant")
    return acov / acov[0]


def ess(samples, cutoff: float = ESS_CUTOFF, seconds: float | None = None) -> EssReport:
    """``N / (1 + 2 sum rho_k)``, summing lags up to the first with ``rho_k < cutoff``.

    The lag that first falls below the cutoff is included. When the
    denominator is not positive (strong negative correlation) the integrated
    time is floored at ``1/N``, giving ``ESS = N^2``, and the report is
    flagged as super-efficient.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("ESS needs at least 10 samples")
    if np.all(x == x[0]):
        raise ZeroVariance("the sequence is constant")
    rho = autocorrelation(x)
    below = np.flatnonzero(rho[1:] < cutoff)
    lag = int(below[0]) + 1 if len(below) else n - 1
    s = float(rho[1:lag + 1].sum())
    tau = 1.0 + 2.0 * s
    floored = tau <= 0
    tau = max(tau, 1.0 / n)
    return EssReport(n, n / tau, lag, s, floored or tau < 1.0, seconds, cutoff)


def write_tvd_csv(path, curve: TvdCurve, seconds_per_step: float | None = None) -> None:
    """Rows ``(run_id, checkpoint, tvd)``; ``run_id`` ``mean`` holds the average."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "checkpoint", "tvd"])
        for r, row in enumerate(curve.per_run):
            for n, v in zip(curve.checkpoints, row):
                w.writerow([r, int(n), repr(float(v))])
        for n, v in zip(curve.checkpoints, curve.mean):
            w.writerow(["mean", int(n), repr(float(v))])


def write_ess_csv(path, reports: Sequence[EssReport]) -> None:
    """Rows ``(run_id, ess, ess_per_iter, ess_per_sec, cutoff_lag)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run_id", "ess", "ess_per_iter", "ess_per_sec", "cutoff_lag"])
        for r, rep in enumerate(reports):
            per_sec = "" if rep.ess_per_sec is None else repr(rep.ess_per_sec)
            w.writerow([r, repr(rep.ess), repr(rep.ess_per_iter), per_sec, rep.cutoff_lag])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")
