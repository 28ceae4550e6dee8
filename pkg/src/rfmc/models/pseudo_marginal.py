"""Pseudo-marginal targets: exact density times positive mean-one noise.

Standard mode keeps the noisy estimate of the current state and draws a
fresh estimate for each proposal. Rejection-free mode draws fresh estimates
for every neighbour at each jump step and compares them against the retained
estimate of the current state; the holding weight is ``1/alpha`` computed
from those noisy ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from ..chain import MEAN, WeightedTrace, _first_above, _total, select_cumulative
from ..errors import DegenerateState


@dataclass(frozen=True)
class GammaNoise:
    """Gamma(shape, rate) multiplicative noise; mean ``shape/rate``."""

    shape: float = 10.0
    rate: float = 10.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("shape and rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def draw(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)

    def log_draw(self, rng: np.random.Generator) -> float:
        return math.log(rng.gamma(self.shape, 1.0 / self.rate))


class ConstantNoise:
    """Zero-variance limit: always 1, and consumes no randomness."""

    mean = 1.0
    variance = 0.0

    def draw(self, rng, size=None):
        return 1.0 if size is None else np.ones(size)

    def log_draw(self, rng) -> float:
        return 0.0


@dataclass(frozen=True)
class PseudoMarginalTarget:
    base_log_target: Callable[[np.ndarray], np.ndarray]
    noise: GammaNoise | ConstantNoise = GammaNoise()

    def log_estimate(self, ys, rng: np.random.Generator) -> np.ndarray:
        """Noisy log density at each ``y``; one fresh noise draw per entry, in order."""
        ys = np.atleast_1d(np.asarray(ys, dtype=np.int64))
        base = np.asarray(self.base_log_target(ys), dtype=float)
        return base + np.array([self.noise.log_draw(rng) for _ in ys])


def run_pseudo_marginal(proposal, target: PseudoMarginalTarget, x0: int, n_steps: int,
                        rng: np.random.Generator):
    """Pseudo-marginal Metropolis. Returns ``(states, n_accepted)``.

    Per step: one uniform to propose, one noise draw for the proposal, one
    uniform to accept. With :class:`ConstantNoise` this is draw-for-draw the
    same as :func:`rfmc.metropolis.run_metropolis`.
    """
    out = np.empty(n_steps + 1, dtype=np.int64)
    x = int(x0)
    retained = float(target.log_estimate([x], rng)[0])
    if retained == -np.inf:
        raise DegenerateState(f"state {x} has zero target density")
    out[0] = x
    accepted = 0
    for k in range(n_steps):
        nbrs = np.asarray(proposal.neighbours(x))
        cum = np.cumsum(np.asarray(proposal.probabilities(x), dtype=float))
        i = int(np.searchsorted(cum, rng.random(), side="right"))
        if i < len(cum):
            y = int(nbrs[i])
            ly = float(target.log_estimate([y], rng)[0])
            if rng.random() < math.exp(min(0.0, ly - retained)):
                x, retained = y, ly
                accepted += 1
        out[k + 1] = x
    return out, accepted


def run_pseudo_marginal_jump(proposal, target: PseudoMarginalTarget, x0: int, n_steps: int,
                             rng: np.random.Generator) -> WeightedTrace:
    """Rejection-free pseudo-marginal run with noisy ``1/alpha`` weights."""
    states = np.empty(n_steps, dtype=np.int64)
    weights = np.empty(n_steps)
    x = int(x0)
    retained = float(target.log_estimate([x], rng)[0])
    if retained == -np.inf:
        raise DegenerateState(f"state {x} has zero target density")
    for k in range(n_steps):
        nbrs = np.asarray(proposal.neighbours(x))
        q = np.asarray(proposal.probabilities(x), dtype=float)
        ly = target.log_estimate(nbrs, rng)
        with np.errstate(invalid="ignore"):
            w = q * np.exp(np.minimum(0.0, ly - retained))
        alpha = _total(w)
        if not alpha > 0.0:
            raise DegenerateState(f"state {x} has no acceptable neighbour")
        states[k] = x
        weights[k] = 1.0 / alpha
        i = select_cumulative(np.cumsum(w), rng.random())
        x, retained = int(nbrs[i]), float(ly[i])
    return WeightedTrace(states, weights, MEAN)


@numba.njit(nogil=True, cache=True)
def _pm_walk(indptr, indices, qcum, logpi, x0, n, shape, scale, noisy, rng, out):
    x = x0
    retained = logpi[x] + (math.log(rng.gamma(shape, scale)) if noisy else 0.0)
    out[0] = x
    accepted = 0
    for k in range(n):
        lo = indptr[x]
        hi = indptr[x + 1]
        i = _first_above(qcum, lo, hi, rng.random())
        if i < hi:
            y = indices[i]
            base = logpi[y] if y >= 0 else -np.inf
            ly = base + (math.log(rng.gamma(shape, scale)) if noisy else 0.0)
            u = rng.random()
            if y >= 0 and u < math.exp(min(0.0, ly - retained)):
                x = y
                retained = ly
                accepted += 1
        out[k + 1] = x
    return accepted


def run_pseudo_marginal_finite(finite_proposal, noise, x0: int, n_steps: int,
                               rng: np.random.Generator):
    """Compiled :func:`run_pseudo_marginal` over a ``FiniteProposal``."""
    out = np.empty(n_steps + 1, dtype=np.int64)
    noisy = isinstance(noise, GammaNoise)
    shape = noise.shape if noisy else 1.0
    scale = 1.0 / noise.rate if noisy else 1.0
    fp = finite_proposal
    acc = _pm_walk(fp.indptr, fp.indices, fp.qcum, fp.logpi, fp.index[int(x0)], n_steps,
                   shape, scale, noisy, rng, out)
    return fp.states[out], acc
