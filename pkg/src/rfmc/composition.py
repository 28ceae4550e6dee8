"""Alternating several jump kernels.

Naively alternating one jump step of each kernel is biased: the holding
weights of one kernel say nothing about how long the other kernel would have
stayed. The budgeted scheme fixes this by giving each kernel a turn of ``L0``
original-chain steps and truncating the last multiplicity of the turn.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .chain import (MEAN, MULTIPLICITY, WEIGHT_MODES, FiniteJumpKernel, JumpKernel, WeightedTrace,
                    _geometric, _jump_select, exact_stationary, sample_multiplicity, select_cumulative,
                    step_jump)


@dataclass(frozen=True)
class AlternationSchedule:
    """Round-robin kernels, each with its number of effective repetitions."""

    kernels: tuple[JumpKernel, ...]
    repetitions: tuple[int, ...]

    def __post_init__(self):
        if len(self.kernels) != len(self.repetitions):
            raise ValueError("one repetition count per kernel is required")
        if not self.kernels:
            raise ValueError("at least one kernel is required")
        if any(int(r) < 1 for r in self.repetitions):
            raise ValueError("every repetition count must be at least 1")

    @classmethod
    def uniform(cls, kernels: Sequence[JumpKernel], L0: int) -> "AlternationSchedule":
        return cls(tuple(kernels), tuple([int(L0)] * len(kernels)))


@dataclass
class BudgetState:
    """Remaining repetitions ``L`` in the current turn of kernel ``kernel``."""

    remaining: int
    kernel: int

    def charge(self, m: int) -> int:
        """Spend up to ``m`` repetitions; returns the weight actually recorded."""
        w = min(int(m), self.remaining)
        self.remaining -= w
        return w

    @property
    def exhausted(self) -> bool:
        return self.remaining == 0


@dataclass
class AlternationResult:
    """Outcome of an alternating run.

    ``occupation[k, i]`` is the total weight recorded at ``states[i]`` during
    turns of kernel ``k``. ``trace`` is present when recording was requested;
    its labels hold the ``turn`` and ``kernel`` of each record.
    """

    states: np.ndarray
    occupation: np.ndarray
    trace: WeightedTrace | None
    biased: bool

    def estimate(self, h) -> float:
        hv = np.array([h(s) for s in self.states], dtype=float)
        occ = self.occupation.sum(axis=0)
        return float(np.dot(occ, hv) / occ.sum())

    def write_trace_csv(self, path) -> None:
        if self.trace is None:
            raise ValueError("the run was made without a trace")
        t = self.trace
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["turn", "kernel_index", "state", "weight"])
            for row in zip(t.labels["turn"], t.labels["kernel"], t.states, t.weights):
                w.writerow([int(row[0]), int(row[1]), int(row[2]), repr(float(row[3]))])


def _stack(kernels: Sequence[JumpKernel]):
    """Concatenate the CSR storage of finite kernels sharing one state list."""
    first = kernels[0]
    if not all(isinstance(k, FiniteJumpKernel) for k in kernels):
        return None
    if any(not np.array_equal(k.states, first.states) for k in kernels):
        raise ValueError("alternated kernels must share one state list")
    indptr = np.empty((len(kernels), first.n_states + 1), dtype=np.int64)
    offset = 0
    for k, jk in enumerate(kernels):
        indptr[k] = jk.indptr + offset
        offset += len(jk.indices)
    indices = np.concatenate([k.indices for k in kernels])
    cum = np.concatenate([k.cum for k in kernels])
    alpha = np.stack([k.alphas for k in kernels])
    return first, indptr, indices, cum, alpha


@numba.njit(nogil=True, cache=True)
def _naive_walk(indptr, indices, cum, alpha, x0, n_cycles, multiplicity, rng, occ,
                record, states, weights, kidx):
    K = indptr.shape[0]
    x = x0
    t = 0
    for c in range(n_cycles):
        for k in range(K):
            a = alpha[k, x]
            w = _geometric(a, rng) if multiplicity else 1.0 / a
            occ[k, x] += w
            if record:
                states[t] = x
                weights[t] = w
                kidx[t] = k
            t += 1
            x = indices[_jump_select(indptr[k], cum, x, rng.random())]
    return x


@numba.njit(nogil=True, cache=True)
def _budget_turn(indptr, indices, cum, alpha, k, x, L0, rng):
    # one turn without recording; returns the end state
    remaining = L0
    while True:
        m = _geometric(alpha[k, x], rng)
        if m > remaining:
            return x
        remaining -= int(m)
        x = indices[_jump_select(indptr[k], cum, x, rng.random())]
        if remaining == 0:
            return x


@numba.njit(nogil=True, cache=True)
def _budget_walk(indptr, indices, cum, alpha, reps, x0, n_cycles, rng, occ,
                 record, states, weights, kidx, turns):
    K = indptr.shape[0]
    x = x0
    t = 0
    turn = 0
    for c in range(n_cycles):
        for k in range(K):
            remaining = reps[k]
            while True:
                m = _geometric(alpha[k, x], rng)
                w = m if m <= remaining else float(remaining)
                occ[k, x] += w
                if record:
                    states[t] = x
                    weights[t] = w
                    kidx[t] = k
                    turns[t] = turn
                t += 1
                if m > remaining:
                    break
                remaining -= int(m)
                x = indices[_jump_select(indptr[k], cum, x, rng.random())]
                if remaining == 0:
                    break
            turn += 1
    return x, t


def _state_list(kernels, states):
    if states is not None:
        return np.asarray(states, dtype=np.int64)
    st = getattr(kernels[0], "states", None)
    if st is None:
        raise ValueError("a state list is needed for occupation totals")
    return np.asarray(st, dtype=np.int64)


def naive_alternating_run(kernels: Sequence[JumpKernel], x0: int, n_cycles: int,
                          rng: np.random.Generator, mode: str = MULTIPLICITY,
                          record: bool = True, states: Sequence[int] | None = None) -> AlternationResult:
    """One jump step of each kernel per cycle, weighted by that kernel's holding time.

    This is the biased scheme; it is kept to demonstrate the failure.
    """
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weighting mode {mode!r}")
    kernels = tuple(kernels)
    stacked = _stack(kernels)
    st = _state_list(kernels, states)
    n = n_cycles * len(kernels)
    if stacked is not None:
        first, indptr, indices, cum, alpha = stacked
        occ = np.zeros((len(kernels), first.n_states))
        size = n if record else 0
        s = np.empty(size, dtype=np.int64)
        w = np.empty(size)
        kk = np.empty(size, dtype=np.int64)
        _naive_walk(indptr, indices, cum, alpha, first.index[int(x0)], n_cycles,
                    mode == MULTIPLICITY, rng, occ, record, s, w, kk)
        trace = None
        if record:
            trace = WeightedTrace(first.states[s], w, mode,
                                  {"kernel": kk, "turn": np.arange(n, dtype=np.int64)})
        return AlternationResult(st, occ, trace, biased=True)

    index = {int(v): i for i, v in enumerate(st)}
    occ = np.zeros((len(kernels), len(st)))
    s = np.empty(n, dtype=np.int64)
    w = np.empty(n)
    kk = np.empty(n, dtype=np.int64)
    x, t = int(x0), 0
    for c in range(n_cycles):
        for k, jk in enumerate(kernels):
            s[t], kk[t] = x, k
            x, w[t] = step_jump(jk, x, rng, mode)
            x = int(x)
            occ[k, index[int(s[t])]] += w[t]
            t += 1
    trace = WeightedTrace(s, w, mode, {"kernel": kk, "turn": np.arange(n, dtype=np.int64)}) if record else None
    return AlternationResult(st, occ, trace, biased=True)


def budgeted_alternating_run(schedule: AlternationSchedule, x0: int, n_cycles: int,
                             rng: np.random.Generator, record: bool = False,
                             states: Sequence[int] | None = None) -> AlternationResult:
    """Rejection-free alternation that emulates ``L0`` original steps per turn.

    Within a turn the multiplicity ``M`` is drawn first. If ``M > L`` the
    state is recorded with weight ``L`` and the turn ends without drawing a
    destination; otherwise it is recorded with weight ``M``, ``L`` drops by
    ``M`` and the chain jumps. A turn whose budget reaches exactly zero ends
    after that jump, since the original chain leaves on its last step.
    """
    kernels = schedule.kernels
    reps = np.asarray(schedule.repetitions, dtype=np.int64)
    stacked = _stack(kernels)
    st = _state_list(kernels, states)
    if stacked is not None:
        first, indptr, indices, cum, alpha = stacked
        occ = np.zeros((len(kernels), first.n_states))
        size = int(n_cycles * reps.sum()) if record else 0
        s = np.empty(size, dtype=np.int64)
        w = np.empty(size)
        kk = np.empty(size, dtype=np.int64)
        tt = np.empty(size, dtype=np.int64)
        _, t = _budget_walk(indptr, indices, cum, alpha, reps, first.index[int(x0)], n_cycles,
                            rng, occ, record, s, w, kk, tt)
        trace = None
        if record:
            trace = WeightedTrace(first.states[s[:t]], w[:t], MULTIPLICITY,
                                  {"kernel": kk[:t], "turn": tt[:t]})
        return AlternationResult(st, occ, trace, biased=False)

    index = {int(v): i for i, v in enumerate(st)}
    occ = np.zeros((len(kernels), len(st)))
    rows: list[tuple[int, int, int, float]] = []
    x, turn = int(x0), 0
    for c in range(n_cycles):
        for k, jk in enumerate(kernels):
            budget = BudgetState(int(reps[k]), k)
            while True:
                nbrs, wts, a = jk.jump_weights(x)
                m = sample_multiplicity(a, rng)
                w = budget.charge(m)
                occ[k, index[x]] += w
                if record:
                    rows.append((turn, k, x, float(w)))
                if m > w:
                    break
                x = int(nbrs[select_cumulative(np.cumsum(wts), rng.random())])
                if budget.exhausted:
                    break
            turn += 1
    trace = None
    if record:
        arr = np.array(rows, dtype=float).reshape(-1, 4)
        trace = WeightedTrace(arr[:, 2].astype(np.int64), arr[:, 3], MULTIPLICITY,
                              {"turn": arr[:, 0].astype(np.int64), "kernel": arr[:, 1].astype(np.int64)})
    return AlternationResult(st, occ, trace, biased=False)


def original_matrix(jk: FiniteJumpKernel) -> np.ndarray:
    """The one-step matrix recovered from a jump kernel and its escape probabilities."""
    a = jk.alphas
    return jk.matrix() * a[:, None] + np.diag(1.0 - a)


@dataclass
class EquivalenceReport:
    states: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray
    sigma: np.ndarray
    n_trials: int

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.empirical - self.exact)))

    @property
    def max_z(self) -> float:
        d = np.abs(self.empirical - self.exact)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(self.sigma > 0, d / self.sigma, np.where(d > 0, np.inf, 0.0))
        return float(np.max(z))

    @property
    def within_3sigma(self) -> bool:
        return self.max_z <= 3.0

    def as_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "empirical": self.empirical.tolist(),
            "exact": self.exact.tolist(),
            "max_deviation": self.max_deviation,
            "max_z": self.max_z,
            "within_3sigma": self.within_3sigma,
            "n_trials": self.n_trials,
        }


def budget_equivalence_check(jk: FiniteJumpKernel, L0: int, x0: int, n_trials: int,
                             rng: np.random.Generator) -> EquivalenceReport:
    """Compare end-of-turn states of budgeted turns against the row of ``P^L0``."""
    if L0 < 1:
        raise ValueError("L0 must be at least 1")
    i0 = jk.index[int(x0)]
    exact = np.linalg.matrix_power(original_matrix(jk), int(L0))[i0]
    indptr = jk.indptr[None, :]
    alpha = jk.alphas[None, :]
    counts = _budget_turns(indptr, jk.indices, jk.cum, alpha, i0, int(L0), n_trials, rng,
                           jk.n_states)
    emp = counts / n_trials
    sigma = np.sqrt(exact * (1.0 - exact) / n_trials)
    return EquivalenceReport(jk.states.copy(), emp, exact, sigma, n_trials)


@numba.njit(nogil=True, cache=True)
def _budget_turns(indptr, indices, cum, alpha, x0, L0, n_trials, rng, n_states):
    counts = np.zeros(n_states)
    for _ in range(n_trials):
        counts[_budget_turn(indptr, indices, cum, alpha, 0, x0, L0, rng)] += 1.0
    return counts


def naive_alternation_limit(kernels: Sequence[FiniteJumpKernel], h) -> float:
    """Exact long-run value of the naive alternating estimator of ``h``.

    The states at the start of each cycle form a Markov chain with matrix
    ``P1_hat P2_hat ...``; each kernel's records are then weighted by its
    mean holding time ``1/alpha``.
    """
    mats = [k.matrix() for k in kernels]
    cycle = mats[0]
    for m in mats[1:]:
        cycle = cycle @ m
    mu = exact_stationary(cycle)
    hv = np.array([h(s) for s in kernels[0].states], dtype=float)
    num = den = 0.0
    d = mu
    for k, m in zip(kernels, mats):
        num += float(np.dot(d / k.alphas, hv))
        den += float(np.sum(d / k.alphas))
        d = d @ m
    return num / den


def alternating_stationary(kernels: Sequence[FiniteJumpKernel], L0: int) -> np.ndarray:
    """Time-averaged law of the alternating original chain with ``L0`` steps per turn."""
    mats = [original_matrix(k) for k in kernels]
    cycle = np.eye(len(kernels[0].states))
    for m in mats:
        cycle = cycle @ np.linalg.matrix_power(m, L0)
    d = exact_stationary(cycle)
    total = np.zeros_like(d)
    for m in mats:
        for _ in range(L0):
            total += d
            d = d @ m
    return total / (L0 * len(mats))


__all__ = [
    "AlternationSchedule", "BudgetState", "AlternationResult", "EquivalenceReport",
    "naive_alternating_run", "budgeted_alternating_run", "budget_equivalence_check",
    "naive_alternation_limit", "alternating_stationary", "original_matrix", "MEAN", "MULTIPLICITY",
]
