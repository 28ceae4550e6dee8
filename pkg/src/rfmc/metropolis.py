"""Metropolis kernels and their rejection-free counterparts.

Targets are given as vectorised log-density callables: they take an integer
array of states and return an array of log weights, ``-inf`` off the support.
Proposals that land off the support (e.g. past the end of a finite line) are
ordinary neighbours with ``-inf`` log weight: they are never accepted, never
selected by the jump chain, but they still count in the proposal mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numba
import numpy as np

from .chain import FiniteKernel, JumpKernel, _first_above, _total
from .errors import AsymmetricProposal, DegenerateState, SupportMismatch

LogTarget = Callable[[np.ndarray], np.ndarray]


class Proposal(Protocol):
    symmetric: bool

    def neighbours(self, x: int) -> np.ndarray: ...

    def probabilities(self, x: int) -> np.ndarray: ...


@dataclass(frozen=True)
class OffsetProposal:
    """Translation-invariant proposal on the integers: ``x -> x + offset``."""

    offsets: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.offsets) != len(self.probs):
            raise ValueError("offsets and probs differ in length")
        if 0 in self.offsets:
            raise ValueError("a state cannot be its own neighbour")

    @classmethod
    def nearest(cls) -> "OffsetProposal":
        return cls((-1, 1), (0.5, 0.5))

    @property
    def symmetric(self) -> bool:
        q = dict(zip(self.offsets, self.probs))
        return all(math.isclose(q.get(-d, 0.0), p, abs_tol=0.0) for d, p in q.items())

    def neighbours(self, x):
        return int(x) + np.asarray(self.offsets, dtype=np.int64)

    def probabilities(self, x):
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class UniformNeighbourhood:
    """Uniform proposal over ``size`` neighbours given by ``neighbour_fn``."""

    neighbour_fn: Callable[[int], np.ndarray]
    size: int
    symmetric: bool = True

    def neighbours(self, x):
        nbrs = np.asarray(self.neighbour_fn(x), dtype=np.int64)
        if len(nbrs) != self.size:
            raise ValueError(f"state {x} has {len(nbrs)} neighbours, expected {self.size}")
        return nbrs

    def probabilities(self, x):
        return np.full(self.size, 1.0 / self.size)


@dataclass(frozen=True)
class CompleteProposal:
    """Propose each other state of a finite list with equal probability."""

    states: tuple[int, ...]
    symmetric: bool = True

    def neighbours(self, x):
        return np.array([s for s in self.states if s != int(x)], dtype=np.int64)

    def probabilities(self, x):
        n = len(self.states)
        return np.full(n - 1, 1.0 / (n - 1))


@dataclass(frozen=True)
class IndependenceProposal:
    """Propose ``y`` with fixed mass ``q(y)`` regardless of the current state.

    Proposing the current state is a no-op, so its mass is left on the
    diagonal rather than enumerated.
    """

    states: tuple[int, ...]
    mass: tuple[float, ...]

    @property
    def symmetric(self) -> bool:
        return len(set(self.mass)) == 1

    def neighbours(self, x):
        return np.array([s for s in self.states if s != int(x)], dtype=np.int64)

    def probabilities(self, x):
        return np.array([q for s, q in zip(self.states, self.mass) if s != int(x)], dtype=float)

    def log_mass(self, ys) -> np.ndarray:
        lookup = dict(zip(self.states, self.mass))
        with np.errstate(divide="ignore"):
            return np.log(np.array([lookup.get(int(y), 0.0) for y in np.atleast_1d(ys)]))


def _log_current(log_target: LogTarget, x) -> float:
    lx = float(np.asarray(log_target(np.array([int(x)])))[0])
    if lx == -np.inf:
        raise DegenerateState(f"state {x} has zero target density")
    return lx


def acceptance(log_target: LogTarget, x, ys) -> np.ndarray:
    """``min(1, pi(y)/pi(x))`` for each ``y``, evaluated in log space."""
    lx = _log_current(log_target, x)
    ly = np.asarray(log_target(np.asarray(ys, dtype=np.int64)), dtype=float)
    with np.errstate(invalid="ignore"):
        return np.exp(np.minimum(0.0, ly - lx))


class MetropolisKernel:
    """``P(y|x) = Q(y|x) min(1, pi(y)/pi(x))`` for ``y != x``."""

    def __init__(self, proposal: Proposal, log_target: LogTarget):
        self.proposal = proposal
        self.log_target = log_target

    def neighbours(self, x):
        return self.proposal.neighbours(x)

    def probabilities(self, x):
        nbrs = self.proposal.neighbours(x)
        q = np.asarray(self.proposal.probabilities(x), dtype=float)
        return q * acceptance(self.log_target, x, nbrs)


class HastingsKernel(MetropolisKernel):
    """Metropolis-Hastings with an independence proposal."""

    proposal: IndependenceProposal

    def probabilities(self, x):
        nbrs = self.proposal.neighbours(x)
        q = np.asarray(self.proposal.probabilities(x), dtype=float)
        lx = _log_current(self.log_target, x)
        ly = np.asarray(self.log_target(nbrs), dtype=float)
        lqx = self.proposal.log_mass([x])[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            d = ly - lx + lqx - np.log(q)
        return q * np.exp(np.minimum(0.0, d))


def check_symmetric(proposal: Proposal, states: Sequence[int], tol: float = 1e-15) -> None:
    """Exhaustively verify ``Q(y|x) == Q(x|y)`` on a finite state list."""
    table = {}
    for x in states:
        for y, q in zip(proposal.neighbours(x), proposal.probabilities(x)):
            table[(int(x), int(y))] = table.get((int(x), int(y)), 0.0) + float(q)
    inside = set(int(s) for s in states)
    for (x, y), q in table.items():
        if y not in inside:
            continue
        back = table.get((y, x), 0.0)
        if abs(back - q) > tol:
            raise AsymmetricProposal(f"Q({y}|{x})={q} but Q({x}|{y})={back}")


def metropolis_kernel(proposal: Proposal, log_target: LogTarget,
                      states: Sequence[int] | None = None) -> MetropolisKernel:
    if not getattr(proposal, "symmetric", False):
        raise AsymmetricProposal("Metropolis acceptance needs a symmetric proposal")
    if states is not None:
        check_symmetric(proposal, states)
    return MetropolisKernel(proposal, log_target)


class RejectionFreeMetropolis(JumpKernel):
    """Jump kernel of a Metropolis chain computed straight from the proposal.

    For a uniform neighbourhood of size ``N`` the weights are the bare
    acceptance probabilities and ``alpha = sum(acceptances) / N``; otherwise
    the weights are ``Q(y|x) * acceptance`` and ``alpha`` is their sum.
    """

    def __init__(self, proposal: Proposal, log_target: LogTarget):
        self.proposal = proposal
        self.log_target = log_target
        self.uniform = isinstance(proposal, UniformNeighbourhood)
        self.source = MetropolisKernel(proposal, log_target)

    def jump_weights(self, x):
        nbrs = self.proposal.neighbours(x)
        acc = acceptance(self.log_target, x, nbrs)
        if self.uniform:
            w = acc
            alpha = _total(acc) / self.proposal.size
        else:
            w = np.asarray(self.proposal.probabilities(x), dtype=float) * acc
            alpha = _total(w)
        if not alpha > 0.0:
            raise DegenerateState(f"state {x} has escape probability {alpha}")
        return nbrs, w, alpha


def rejection_free_metropolis(proposal: Proposal, log_target: LogTarget,
                              states: Sequence[int] | None = None) -> RejectionFreeMetropolis:
    if not getattr(proposal, "symmetric", False):
        raise AsymmetricProposal("Metropolis acceptance needs a symmetric proposal")
    if states is not None:
        check_symmetric(proposal, states)
    return RejectionFreeMetropolis(proposal, log_target)


def independence_sampler_kernel(prior, log_target: LogTarget, states: Sequence[int]):
    """Metropolis-Hastings kernel proposing from a fixed ``prior`` vector.

    With a uniform prior this is the symmetric-proposal Metropolis kernel.
    """
    prior = np.asarray(prior, dtype=float)
    states = tuple(int(s) for s in states)
    if len(prior) != len(states):
        raise ValueError("prior and states differ in length")
    lp = np.asarray(log_target(np.array(states)), dtype=float)
    uncovered = [s for s, p, l in zip(states, prior, lp) if p <= 0 and l > -np.inf]
    if uncovered:
        raise SupportMismatch(f"proposal misses target support at {uncovered[:5]}")
    proposal = IndependenceProposal(states, tuple(float(p) for p in prior))
    if proposal.symmetric:
        return MetropolisKernel(proposal, log_target)
    return HastingsKernel(proposal, log_target)


def independence_matrix(prior, log_target: LogTarget, states: Sequence[int]) -> np.ndarray:
    """Dense one-step matrix of the independence sampler, built in one pass.

    Matches ``to_matrix(independence_sampler_kernel(...))`` but avoids the
    per-row Python loop on large grids.
    """
    q = np.asarray(prior, dtype=float)
    lp = np.asarray(log_target(np.asarray(states, dtype=np.int64)), dtype=float)
    if len(q) != len(lp):
        raise ValueError("prior and states differ in length")
    with np.errstate(divide="ignore"):
        lq = np.log(q)
    # Hastings ratio pi(y) q(x) / (pi(x) q(y)) for moving x -> y
    lr = (lp[None, :] - lp[:, None]) + (lq[:, None] - lq[None, :])
    P = q[None, :] * np.exp(np.minimum(0.0, lr))
    n = len(q)
    P[np.arange(n), np.arange(n)] = 0.0
    P[np.arange(n), np.arange(n)] = 1.0 - P.sum(axis=1)
    return P


# ---------------------------------------------------------------------------
# propose/accept simulation


@numba.njit(nogil=True, cache=True)
def _metropolis_walk(indptr, indices, qcum, logpi, logq, x0, n, rng, out):
    x = x0
    out[0] = x
    accepted = 0
    for k in range(n):
        lo = indptr[x]
        hi = indptr[x + 1]
        i = _first_above(qcum, lo, hi, rng.random())
        if i < hi:
            y = indices[i]
            u = rng.random()
            # y < 0 marks a proposal off the state list: zero density, rejected
            if y >= 0 and u < math.exp(min(0.0, logpi[y] - logpi[x] + logq[x] - logq[y])):
                x = y
                accepted += 1
        out[k + 1] = x
    return accepted


class FiniteProposal:
    """Compiled proposal plus tabulated log target on a finite state list.

    Proposed states outside the list keep their slot (index -1) so the
    proposal draw lines up with the generic path; they are always rejected.
    """

    def __init__(self, proposal: Proposal, log_target: LogTarget, states: Sequence[int]):
        self.states = np.asarray([int(s) for s in states], dtype=np.int64)
        rows = lambda s: (np.asarray(proposal.neighbours(s)), np.asarray(proposal.probabilities(s), float))
        index = {int(s): i for i, s in enumerate(self.states)}
        indptr, indices, cum = [0], [], []
        for s in self.states:
            nbrs, q = rows(s)
            c = np.cumsum(q)
            for y, cy in zip(nbrs, c):
                indices.append(index.get(int(y), -1))
                cum.append(cy)
            indptr.append(len(indices))
        self.index = index
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.qcum = np.asarray(cum, dtype=float)
        self.logpi = np.asarray(log_target(self.states), dtype=float)
        if isinstance(proposal, IndependenceProposal) and not proposal.symmetric:
            self.logq = proposal.log_mass(self.states)
        else:
            self.logq = np.zeros(len(self.states))

    def run(self, x0: int, n_steps: int, rng: np.random.Generator):
        out = np.empty(n_steps + 1, dtype=np.int64)
        acc = _metropolis_walk(self.indptr, self.indices, self.qcum, self.logpi, self.logq,
                               self.index[int(x0)], n_steps, rng, out)
        return self.states[out], acc


def run_metropolis(proposal: Proposal, log_target: LogTarget, x0: int, n_steps: int,
                   rng: np.random.Generator):
    """Classic propose/accept Metropolis run.

    Returns ``(states, n_accepted)`` with ``n_steps + 1`` states. For a finite
    compiled :class:`FiniteProposal` use its ``run`` method; both consume the
    stream identically (one uniform to propose, one to accept).
    """
    out = np.empty(n_steps + 1, dtype=np.int64)
    x = int(x0)
    lx = _log_current(log_target, x)
    out[0] = x
    accepted = 0
    for k in range(n_steps):
        nbrs = np.asarray(proposal.neighbours(x))
        cum = np.cumsum(np.asarray(proposal.probabilities(x), dtype=float))
        i = int(np.searchsorted(cum, rng.random(), side="right"))
        if i < len(cum):
            y = int(nbrs[i])
            ly = float(np.asarray(log_target(np.array([y])))[0])
            if rng.random() < math.exp(min(0.0, ly - lx)):
                x, lx = y, ly
                accepted += 1
        out[k + 1] = x
    return out, accepted


def finite_jump_kernel(proposal: Proposal, log_target: LogTarget, states: Sequence[int]):
    from .chain import FiniteJumpKernel

    return FiniteJumpKernel.from_jump_kernel(rejection_free_metropolis(proposal, log_target), states)


def finite_kernel(proposal: Proposal, log_target: LogTarget, states: Sequence[int]) -> FiniteKernel:
    return FiniteKernel.from_kernel(MetropolisKernel(proposal, log_target), states)
