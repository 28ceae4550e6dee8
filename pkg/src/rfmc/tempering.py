"""Parallel tempering with ordinary or rejection-free chains at each temperature.

Rejection-free chains at inverse temperature ``beta`` settle on
``pi_hat_beta(x) ~ alpha_beta(x) pi(x)^beta`` rather than ``pi(x)^beta``, so the
usual swap ratio is wrong for them. The modified swap uses ``pi_hat`` in the
ratio and keeps the product of the ``pi_hat`` laws invariant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chain import (MEAN, MULTIPLICITY, WEIGHT_MODES, FiniteJumpKernel, FiniteKernel, WeightedTrace,
                    escape_probability, exact_stationary, run_jump_to, run_original)
from .errors import ZeroDensity
from .metropolis import (FiniteProposal, LogTarget, MetropolisKernel, Proposal, rejection_free_metropolis,
                         run_metropolis)

SAMPLERS = ("jump", "metropolis")
SWAPS = ("standard", "modified")
ALPHA_SOURCES = ("exact", "estimated")


def tempered(log_target: LogTarget, beta: float) -> LogTarget:
    """``beta * log pi``: the unnormalised log of ``pi^beta``."""
    def lt(xs):
        return beta * np.asarray(log_target(xs), dtype=float)
    return lt


def _log_at(log_target: LogTarget, x) -> float:
    return float(np.asarray(log_target(np.array([int(x)])))[0])


def standard_swap_probability(log_target: LogTarget, b1: float, b2: float, x1, x2) -> float:
    """Acceptance of exchanging ``x1`` (at ``b1``) and ``x2`` (at ``b2``)."""
    if int(x1) == int(x2) or b1 == b2:
        return 1.0
    l1, l2 = _log_at(log_target, x1), _log_at(log_target, x2)
    if l1 == -np.inf or l2 == -np.inf:
        raise ZeroDensity(f"zero density at {x1 if l1 == -np.inf else x2} in a swap ratio")
    return math.exp(min(0.0, (b1 - b2) * (l2 - l1)))


def modified_swap_probability(log_target: LogTarget, b1: float, b2: float,
                              alpha1: Callable[[int], float], alpha2: Callable[[int], float],
                              x1, x2) -> float:
    """Swap acceptance with each tempered density replaced by ``alpha * pi^beta``."""
    if int(x1) == int(x2):
        return 1.0
    l1, l2 = _log_at(log_target, x1), _log_at(log_target, x2)
    if l1 == -np.inf or l2 == -np.inf:
        raise ZeroDensity(f"zero density at {x1 if l1 == -np.inf else x2} in a swap ratio")
    a = [alpha1(x2), alpha2(x1), alpha1(x1), alpha2(x2)]
    if min(a) <= 0:
        raise ZeroDensity("escape probability of zero in a swap ratio")
    log_r = ((b1 - b2) * (l2 - l1) + math.log(a[0]) + math.log(a[1])
             - math.log(a[2]) - math.log(a[3]))
    return math.exp(min(0.0, log_r))


@dataclass
class AlphaEstimate:
    """Escape probabilities estimated from a preliminary ordinary run."""

    states: np.ndarray
    alpha: np.ndarray
    visits: np.ndarray
    leaves: np.ndarray
    estimated: np.ndarray

    def __call__(self, x) -> float:
        return float(self.alpha[int(np.searchsorted(self.states, int(x)))])

    def binomial_sigma(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.sqrt(self.alpha * (1 - self.alpha) / self.visits)


def estimate_alpha(kernel: FiniteKernel | MetropolisKernel, states: Sequence[int], x0: int,
                   n_preliminary: int, rng: np.random.Generator) -> AlphaEstimate:
    """Per-state fraction of steps that leave, from an ordinary run.

    States never visited fall back to the exact escape probability.
    """
    states = np.asarray(sorted(int(s) for s in states), dtype=np.int64)
    path = run_original(kernel, x0, n_preliminary, rng)
    pos = np.searchsorted(states, path)
    visits = np.bincount(pos[:-1], minlength=len(states)).astype(float)
    leaves = np.bincount(pos[:-1][path[1:] != path[:-1]], minlength=len(states)).astype(float)
    alpha = np.empty(len(states))
    seen = visits > 0
    alpha[seen] = leaves[seen] / visits[seen]
    for i in np.flatnonzero(~seen):
        alpha[i] = escape_probability(kernel, int(states[i]))
    return AlphaEstimate(states, alpha, visits, leaves, seen)


@dataclass
class TemperingEnsemble:
    """Chains at several inverse temperatures sharing one base target.

    ``sampler`` picks rejection-free (``"jump"``) or ordinary
    (``"metropolis"``) chains within each temperature; ``swap`` picks the
    swap ratio. With ``states`` given, kernels are compiled on that list.
    """

    betas: tuple[float, ...]
    log_target: LogTarget
    proposal: Proposal
    sampler: str = "jump"
    swap: str = "standard"
    phase_length: int = 1
    states: tuple[int, ...] | None = None
    alpha_source: str = "exact"
    weight_mode: str = MEAN
    alpha_tables: tuple | None = None
    _kernels: list = field(default_factory=list, init=False, repr=False)
    _swap_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if not self.betas or any(b <= 0 for b in self.betas):
            raise ValueError("inverse temperatures must be positive")
        d = np.diff(self.betas)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("inverse temperatures must be strictly ordered")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.swap not in SWAPS:
            raise ValueError(f"swap must be one of {SWAPS}")
        if self.alpha_source not in ALPHA_SOURCES:
            raise ValueError(f"alpha_source must be one of {ALPHA_SOURCES}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weighting mode {self.weight_mode!r}")
        if self.phase_length < 1:
            raise ValueError("phase_length must be at least 1")
        if self.alpha_source == "estimated" and self.alpha_tables is None:
            raise ValueError("estimated escape probabilities need alpha_tables")
        for b in self.betas:
            lt = tempered(self.log_target, b)
            jk = rejection_free_metropolis(self.proposal, lt)
            if self.states is not None:
                jk = FiniteJumpKernel.from_jump_kernel(jk, self.states)
                mk = FiniteProposal(self.proposal, lt, self.states)
            else:
                mk = None
            self._kernels.append((lt, jk, mk))

    @property
    def n_temperatures(self) -> int:
        return len(self.betas)

    def jump_kernel(self, k: int):
        return self._kernels[k][1]

    def alpha(self, k: int) -> Callable[[int], float]:
        if self.alpha_source == "estimated":
            return self.alpha_tables[k]
        return self._kernels[k][1].alpha

    def swap_probability(self, pair: int, x1, x2) -> float:
        key = (pair, int(x1), int(x2))
        if self.states is not None and key in self._swap_cache:
            return self._swap_cache[key]
        b1, b2 = self.betas[pair], self.betas[pair + 1]
        if self.swap == "standard":
            a = standard_swap_probability(self.log_target, b1, b2, x1, x2)
        else:
            a = modified_swap_probability(self.log_target, b1, b2, self.alpha(pair),
                                          self.alpha(pair + 1), x1, x2)
        if self.states is not None:
            # finite spaces are small enough to memoise every pair of states
            self._swap_cache[key] = a
        return a

    def within(self, k: int, x, n: int, rng: np.random.Generator):
        """``n`` within-temperature steps; returns ``(states, weights, end)``.

        Jump chains carry their holding weights; ordinary chains weight 1.
        """
        lt, jk, mk = self._kernels[k]
        if self.sampler == "jump":
            tr, end = run_jump_to(jk, x, n, rng, self.weight_mode)
            return tr.states, tr.weights, end
        if mk is not None:
            path, _ = mk.run(x, n, rng)
        else:
            path, _ = run_metropolis(self.proposal, lt, x, n, rng)
        return path[:-1], np.ones(n), int(path[-1])


@dataclass
class TemperingResult:
    betas: tuple[float, ...]
    traces: list[WeightedTrace]
    post_swap: np.ndarray
    swap_phase: np.ndarray
    swap_pair: np.ndarray
    swap_prob: np.ndarray
    swap_accepted: np.ndarray

    def pair_stats(self) -> list[dict]:
        out = []
        for p in range(len(self.betas) - 1):
            m = self.swap_pair == p
            n = int(m.sum())
            acc = int(self.swap_accepted[m].sum())
            out.append({"pair": p, "betas": [self.betas[p], self.betas[p + 1]], "proposed": n,
                        "accepted": acc, "rate": acc / n if n else float("nan"),
                        "mean_probability": float(self.swap_prob[m].mean()) if n else float("nan")})
        return out

    @property
    def acceptance_rate(self) -> float:
        return float(self.swap_accepted.mean()) if len(self.swap_accepted) else float("nan")

    def write_swap_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase", "pair", "acceptance_prob", "accepted"])
            for row in zip(self.swap_phase, self.swap_pair, self.swap_prob, self.swap_accepted):
                w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), int(row[3])])


def run_tempering(ens: TemperingEnsemble, x0: Sequence[int], n_phases: int,
                  rng: np.random.Generator) -> TemperingResult:
    """Alternate within-temperature phases with one swap proposal each.

    Each temperature draws from its own child stream and the swaps from
    another, so temperatures could run concurrently without changing
    results. The swap pair is one adjacent pair chosen uniformly.
    """
    K = ens.n_temperatures
    if len(x0) != K:
        raise ValueError("one starting state per temperature is required")
    children = rng.spawn(K + 1)
    swap_rng = children[K]
    xs = [int(v) for v in x0]
    n_within = n_phases * ens.phase_length
    st = [np.empty(n_within, dtype=np.int64) for _ in range(K)]
    wt = [np.empty(n_within) for _ in range(K)]
    post = np.empty((n_phases, K), dtype=np.int64)
    n_swaps = n_phases if K > 1 else 0
    pairs = np.zeros(n_swaps, dtype=np.int64)
    probs = np.zeros(n_swaps)
    acc = np.zeros(n_swaps, dtype=bool)
    L = ens.phase_length
    for ph in range(n_phases):
        for k in range(K):
            s, w, xs[k] = ens.within(k, xs[k], L, children[k])
            st[k][ph * L:(ph + 1) * L] = s
            wt[k][ph * L:(ph + 1) * L] = w
        if K > 1:
            p = int(swap_rng.random() * (K - 1))
            a = ens.swap_probability(p, xs[p], xs[p + 1])
            pairs[ph], probs[ph] = p, a
            if swap_rng.random() < a:
                xs[p], xs[p + 1] = xs[p + 1], xs[p]
                acc[ph] = True
        post[ph] = xs
    mode = ens.weight_mode if ens.sampler == "jump" else MULTIPLICITY
    traces = [WeightedTrace(st[k], wt[k], mode, {"beta": ens.betas[k]}) for k in range(K)]
    return TemperingResult(ens.betas, traces, post, np.arange(n_swaps, dtype=np.int64),
                           pairs, probs, acc)


# ---------------------------------------------------------------------------
# exact product-space oracles


def _product_index(shape, combo):
    return int(np.ravel_multi_index(tuple(combo), shape))


def phase_matrix(ens: TemperingEnsemble) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """One phase (within steps then a random adjacent swap) on the product space.

    Needs a finite ensemble. Returns the matrix and the product-state labels.
    """
    if ens.states is None:
        raise ValueError("the exact phase matrix needs a finite state list")
    n = len(ens.states)
    K = ens.n_temperatures
    states = list(ens.states)
    mats = []
    for k in range(K):
        jk = ens.jump_kernel(k)
        if ens.sampler == "jump":
            m = jk.matrix()
        else:
            a = jk.alphas
            m = jk.matrix() * a[:, None] + np.diag(1.0 - a)
        mats.append(np.linalg.matrix_power(m, ens.phase_length))
    within = mats[0]
    for m in mats[1:]:
        within = np.kron(within, m)
    shape = (n,) * K
    labels = [tuple(states[i] for i in c) for c in np.ndindex(*shape)]
    S = np.zeros((n ** K, n ** K))
    if K == 1:
        S = np.eye(n)
    for combo in np.ndindex(*shape):
        i = _product_index(shape, combo)
        for p in range(K - 1):
            x1, x2 = states[combo[p]], states[combo[p + 1]]
            a = ens.swap_probability(p, x1, x2)
            sw = list(combo)
            sw[p], sw[p + 1] = sw[p + 1], sw[p]
            j = _product_index(shape, sw)
            S[i, j] += a / (K - 1)
            S[i, i] += (1 - a) / (K - 1)
    return within @ S, labels


def product_target(ens: TemperingEnsemble) -> np.ndarray:
    """Product of the laws the within-temperature chains settle on."""
    vecs = []
    for k in range(ens.n_temperatures):
        jk = ens.jump_kernel(k)
        lp = np.asarray(tempered(ens.log_target, ens.betas[k])(np.array(ens.states)), dtype=float)
        w = np.exp(lp - lp.max())
        if ens.sampler == "jump":
            w = w * jk.alphas
        vecs.append(w / w.sum())
    out = vecs[0]
    for v in vecs[1:]:
        out = np.kron(out, v)
    return out


@dataclass
class PhaseCheck:
    stationary: np.ndarray
    target: np.ndarray
    labels: list

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.stationary - self.target)))

    @property
    def tvd(self) -> float:
        return 0.5 * float(np.sum(np.abs(self.stationary - self.target)))

    def marginal(self, k: int, states: Sequence[int]) -> np.ndarray:
        out = np.zeros(len(states))
        pos = {int(s): i for i, s in enumerate(states)}
        for p, lab in zip(self.stationary, self.labels):
            out[pos[lab[k]]] += p
        return out


def phase_stationarity(ens: TemperingEnsemble) -> PhaseCheck:
    """Exact stationary law right after a swap, against the product target."""
    M, labels = phase_matrix(ens)
    return PhaseCheck(exact_stationary(M), product_target(ens), labels)
