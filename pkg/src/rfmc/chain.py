"""Discrete Markov kernels, the jump-chain transform and exact oracles.

States are plain integers. A kernel only has to enumerate the neighbours of
a state and give the one-step probability of moving to each of them; the
probability of staying put is whatever mass is left over.

Two simulation paths exist for every walker here: a generic one that calls
back into the kernel object at every step, and a compiled one for finite
spaces (:class:`FiniteKernel`, :class:`FiniteJumpKernel`). They consume the
random stream in the same order, so for a given seed they produce the same
trace.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numba
import numpy as np

from .errors import DegenerateState, SingularSystem

MULTIPLICITY = "multiplicity"
MEAN = "mean"
WEIGHT_MODES = (MULTIPLICITY, MEAN)


class Kernel(Protocol):
    def neighbours(self, x: int) -> np.ndarray: ...

    def probabilities(self, x: int) -> np.ndarray: ...


class MatrixKernel:
    """Kernel backed by a dense row-stochastic matrix.

    ``states`` labels the rows; by default row ``i`` is state ``i``.
    """

    def __init__(self, matrix, states: Sequence[int] | None = None):
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        self.matrix = m
        self.states = np.arange(len(m)) if states is None else np.asarray(states, dtype=np.int64)
        self._index = {int(s): i for i, s in enumerate(self.states)}

    def neighbours(self, x):
        i = self._index[int(x)]
        row = self.matrix[i]
        cols = [j for j in range(len(row)) if j != i and row[j] > 0]
        return self.states[cols]

    def probabilities(self, x):
        i = self._index[int(x)]
        row = self.matrix[i]
        cols = [j for j in range(len(row)) if j != i and row[j] > 0]
        return row[cols]


def _total(w: np.ndarray) -> float:
    # sequential sum, the same as the last cumulative entry the samplers use
    return float(np.cumsum(w)[-1]) if len(w) else 0.0


def escape_probability(kernel: Kernel, x: int) -> float:
    """Probability that the chain leaves ``x`` in one step."""
    alpha = _total(np.asarray(kernel.probabilities(x), dtype=float))
    if not alpha > 0.0:
        raise DegenerateState(f"state {x} has escape probability {alpha}")
    return alpha


class JumpKernel:
    """Rejection-free view of a kernel.

    ``jump_weights(x)`` returns the neighbours of ``x``, non-negative weights
    proportional to the jump probabilities, and the escape probability
    ``alpha(x)``. The generic transform uses the original one-step
    probabilities as weights.
    """

    def __init__(self, source: Kernel):
        self.source = source

    def jump_weights(self, x):
        nbrs = np.asarray(self.source.neighbours(x))
        w = np.asarray(self.source.probabilities(x), dtype=float)
        alpha = _total(w)
        if not alpha > 0.0:
            raise DegenerateState(f"state {x} has escape probability {alpha}")
        return nbrs, w, alpha

    def neighbours(self, x):
        return self.jump_weights(x)[0]

    def alpha(self, x) -> float:
        return self.jump_weights(x)[2]

    def probabilities(self, x):
        _, w, _ = self.jump_weights(x)
        return w / _total(w)


def jump_transform(kernel: Kernel) -> JumpKernel:
    return JumpKernel(kernel)


@dataclass
class WeightedTrace:
    """Jump-chain states with their weights.

    ``weights`` are sampled multiplicities when ``mode == "multiplicity"`` and
    ``1/alpha(state)`` when ``mode == "mean"``.
    """

    states: np.ndarray
    weights: np.ndarray
    mode: str
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weighting mode {self.mode!r}")
        self.states = np.asarray(self.states)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.states.shape != self.weights.shape:
            raise ValueError("states and weights differ in length")

    def __len__(self):
        return len(self.states)

    def expand(self) -> np.ndarray:
        """Original-chain path: each jump state repeated by its multiplicity."""
        if self.mode != MULTIPLICITY:
            raise ValueError("only multiplicity traces can be expanded")
        return np.repeat(self.states, self.weights.astype(np.int64))


def sample_multiplicity(alpha: float, rng: np.random.Generator) -> int:
    """Holding time at a state with escape probability ``alpha``.

    Geometric on {1, 2, ...} with success probability ``alpha``, drawn by
    inverse CDF. One uniform is always consumed, even when ``alpha == 1``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    u = 1.0 - rng.random()
    if alpha >= 1.0:
        return 1
    return 1 + int(math.floor(math.log(u) / math.log1p(-alpha)))


def sample_multiplicities(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    u = 1.0 - rng.random(size)
    if alpha >= 1.0:
        return np.ones(size, dtype=np.int64)
    return 1 + np.floor(np.log(u) / math.log1p(-alpha)).astype(np.int64)


def select_cumulative(cum: np.ndarray, u: float) -> int:
    """Index chosen by inverse CDF over unnormalised cumulative weights.

    Picks the first index whose cumulative weight exceeds ``u * total``; a
    draw landing exactly on a boundary goes to the higher index. Zero-weight
    entries can never be chosen.
    """
    t = u * cum[-1]
    i = int(np.searchsorted(cum, t, side="right"))
    if i >= len(cum):
        # u*total rounded up onto the total; take the last positive entry
        i = int(np.searchsorted(cum, cum[-1], side="left"))
    return i


def select_exponential_clocks(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Proportional selection by racing exponential clocks.

    Each entry gets ``-log(R_i)/w_i``; the smallest wins. Distributionally the
    same as :func:`select_cumulative` but uses one uniform per entry.
    """
    w = np.asarray(weights, dtype=float)
    r = 1.0 - rng.random(len(w))
    with np.errstate(divide="ignore"):
        d = np.where(w > 0, -np.log(r) / np.where(w > 0, w, 1.0), np.inf)
    if not np.isfinite(d).any():
        raise DegenerateState("all neighbour weights are zero")
    return int(np.argmin(d))


def step_jump(jk: JumpKernel, x: int, rng: np.random.Generator, mode: str = MEAN,
              selector: str = "cumulative"):
    """One rejection-free step from ``x``.

    Returns ``(next_state, weight)`` where ``weight`` belongs to ``x``.
    In multiplicity mode the holding time is drawn before the destination.
    """
    nbrs, w, alpha = jk.jump_weights(x)
    if mode == MULTIPLICITY:
        weight = float(sample_multiplicity(alpha, rng))
    elif mode == MEAN:
        weight = 1.0 / alpha
    else:
        raise ValueError(f"unknown weighting mode {mode!r}")
    cum = np.cumsum(w)
    if not cum[-1] > 0.0:
        raise DegenerateState(f"state {x} has no selectable neighbour")
    if selector == "cumulative":
        i = select_cumulative(cum, rng.random())
    elif selector == "clocks":
        i = select_exponential_clocks(w, rng)
    else:
        raise ValueError(f"unknown selector {selector!r}")
    return nbrs[i], weight


# ---------------------------------------------------------------------------
# compiled finite-space representation


@numba.njit(nogil=True, cache=True)
def _first_above(cum, lo, hi, t):
    # first index in [lo, hi) with cum[i] > t, or hi
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > t:
            hi = mid
        else:
            lo = mid + 1
    return lo


@numba.njit(nogil=True, cache=True)
def _geometric(alpha, rng):
    u = 1.0 - rng.random()
    if alpha >= 1.0:
        return 1.0
    return 1.0 + math.floor(math.log(u) / math.log1p(-alpha))


@numba.njit(nogil=True, cache=True)
def _jump_select(indptr, cum, x, u):
    lo = indptr[x]
    hi = indptr[x + 1]
    t = u * cum[hi - 1]
    i = _first_above(cum, lo, hi, t)
    if i >= hi:
        # same fallback as select_cumulative: first entry reaching the total
        i = lo
        while cum[i] < cum[hi - 1]:
            i += 1
    return i


@numba.njit(nogil=True, cache=True)
def _jump_walk(indptr, indices, cum, alpha, x0, n, multiplicity, rng, states, weights):
    x = x0
    for k in range(n):
        a = alpha[x]
        states[k] = x
        if multiplicity:
            weights[k] = _geometric(a, rng)
        else:
            weights[k] = 1.0 / a
        x = indices[_jump_select(indptr, cum, x, rng.random())]
    return x


@numba.njit(nogil=True, cache=True)
def _original_walk(indptr, indices, cum, x0, n, rng, out):
    x = x0
    out[0] = x
    for k in range(n):
        lo = indptr[x]
        hi = indptr[x + 1]
        u = rng.random()
        i = _first_above(cum, lo, hi, u)
        if i < hi:
            x = indices[i]
        out[k + 1] = x


class _Finite:
    """Shared CSR storage: per-row cumulative weights over neighbour lists."""

    def __init__(self, states, indptr, indices, cum):
        self.states = np.asarray(states, dtype=np.int64)
        self.index = {int(s): i for i, s in enumerate(self.states)}
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.cum = np.asarray(cum, dtype=float)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def _row(self, x):
        i = self.index[int(x)]
        lo, hi = self.indptr[i], self.indptr[i + 1]
        c = self.cum[lo:hi]
        w = np.diff(c, prepend=0.0)
        return self.states[self.indices[lo:hi]], w

    def neighbours(self, x):
        return self._row(x)[0]

    @staticmethod
    def _build(kernel_rows, states):
        index = {int(s): i for i, s in enumerate(states)}
        indptr = [0]
        indices: list[int] = []
        cum: list[float] = []
        for s in states:
            nbrs, w = kernel_rows(s)
            c = np.cumsum(np.asarray(w, dtype=float))
            for y, wy, cy in zip(nbrs, w, c):
                j = index.get(int(y))
                if j is None:
                    if wy > 0:
                        raise ValueError(f"neighbour {y} of {s} lies outside the state list")
                    continue
                indices.append(j)
                cum.append(cy)
            indptr.append(len(indices))
        return indptr, indices, cum


class FiniteKernel(_Finite):
    """Compiled one-step kernel on an explicit finite state list."""

    @classmethod
    def from_kernel(cls, kernel: Kernel, states: Sequence[int]) -> "FiniteKernel":
        states = [int(s) for s in states]
        rows = lambda s: (np.asarray(kernel.neighbours(s)), np.asarray(kernel.probabilities(s), float))
        return cls(states, *cls._build(rows, states))

    def probabilities(self, x):
        return self._row(x)[1]

    def matrix(self) -> np.ndarray:
        n = self.n_states
        m = np.zeros((n, n))
        for i in range(n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            w = np.diff(self.cum[lo:hi], prepend=0.0)
            np.add.at(m[i], self.indices[lo:hi], w)
            m[i, i] += 1.0 - (self.cum[hi - 1] if hi > lo else 0.0)
        return m


class FiniteJumpKernel(_Finite, JumpKernel):
    """Compiled jump kernel on an explicit finite state list."""

    def __init__(self, states, indptr, indices, cum, alpha):
        _Finite.__init__(self, states, indptr, indices, cum)
        self.alphas = np.asarray(alpha, dtype=float)

    @classmethod
    def from_jump_kernel(cls, jk: JumpKernel, states: Sequence[int]) -> "FiniteJumpKernel":
        states = [int(s) for s in states]
        alphas = []

        def rows(s):
            nbrs, w, a = jk.jump_weights(s)
            alphas.append(a)
            return nbrs, w

        return cls(states, *cls._build(rows, states), alphas)

    @classmethod
    def from_matrix(cls, P, states: Sequence[int] | None = None) -> "FiniteJumpKernel":
        """Jump kernel of a dense one-step matrix; off-diagonal entries become the weights."""
        P = np.asarray(P, dtype=float)
        n = len(P)
        states = list(range(n)) if states is None else [int(s) for s in states]
        off = P.copy()
        off[np.arange(n), np.arange(n)] = 0.0
        alphas = off.sum(axis=1)
        if np.any(alphas <= 0):
            bad = states[int(np.flatnonzero(alphas <= 0)[0])]
            raise DegenerateState(f"state {bad} has escape probability 0")
        mask = off > 0
        indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))])
        rows, cols = np.nonzero(mask)
        cum = np.empty(len(cols))
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            cum[lo:hi] = np.cumsum(off[i, cols[lo:hi]])
        return cls(states, indptr, cols, cum, alphas)

    def jump_weights(self, x):
        nbrs, w = self._row(x)
        return nbrs, w, float(self.alphas[self.index[int(x)]])

    def matrix(self) -> np.ndarray:
        """Dense jump matrix (zero diagonal)."""
        n = self.n_states
        m = np.zeros((n, n))
        for i in range(n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            w = np.diff(self.cum[lo:hi], prepend=0.0)
            np.add.at(m[i], self.indices[lo:hi], w / self.cum[hi - 1])
        return m


def run_original(kernel: Kernel, x0: int, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Simulate ``n_steps`` ordinary steps; returns ``n_steps + 1`` states."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if isinstance(kernel, FiniteKernel):
        out = np.empty(n_steps + 1, dtype=np.int64)
        _original_walk(kernel.indptr, kernel.indices, kernel.cum,
                       kernel.index[int(x0)], n_steps, rng, out)
        return kernel.states[out]
    out = np.empty(n_steps + 1, dtype=np.int64)
    x = int(x0)
    out[0] = x
    for k in range(n_steps):
        nbrs = np.asarray(kernel.neighbours(x))
        cum = np.cumsum(np.asarray(kernel.probabilities(x), dtype=float))
        u = rng.random()
        if len(cum):
            i = int(np.searchsorted(cum, u, side="right"))
            if i < len(cum):
                x = int(nbrs[i])
        out[k + 1] = x
    return out


def run_jump(jk: JumpKernel, x0: int, n_steps: int, rng: np.random.Generator,
             mode: str = MEAN) -> WeightedTrace:
    """Simulate ``n_steps`` jump-chain steps starting at ``x0``.

    The trace holds ``J_0 .. J_{n-1}`` with their weights; the state reached
    by the final jump is not recorded (see :func:`run_jump_to`).
    """
    return run_jump_to(jk, x0, n_steps, rng, mode)[0]


def run_jump_to(jk: JumpKernel, x0: int, n_steps: int, rng: np.random.Generator,
                mode: str = MEAN) -> tuple[WeightedTrace, int]:
    """Like :func:`run_jump` but also returns the state after the last jump."""
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weighting mode {mode!r}")
    if isinstance(jk, FiniteJumpKernel):
        states = np.empty(n_steps, dtype=np.int64)
        weights = np.empty(n_steps)
        end = _jump_walk(jk.indptr, jk.indices, jk.cum, jk.alphas, jk.index[int(x0)],
                         n_steps, mode == MULTIPLICITY, rng, states, weights)
        return WeightedTrace(jk.states[states], weights, mode), int(jk.states[end])
    states = np.empty(n_steps, dtype=np.int64)
    weights = np.empty(n_steps)
    x = int(x0)
    for k in range(n_steps):
        states[k] = x
        x, weights[k] = step_jump(jk, x, rng, mode)
        x = int(x)
    return WeightedTrace(states, weights, mode), x


# ---------------------------------------------------------------------------
# matrices and exact linear-algebra oracles


def to_matrix(kernel: Kernel, states: Sequence[int]) -> np.ndarray:
    """Dense transition matrix of ``kernel`` restricted to ``states``.

    Neighbours outside ``states`` must carry zero probability.
    """
    return FiniteKernel.from_kernel(kernel, states).matrix()


def jump_matrix(P) -> np.ndarray:
    """Jump-chain matrix of a row-stochastic matrix."""
    P = np.asarray(P, dtype=float)
    off = P - np.diag(np.diag(P))
    alpha = off.sum(axis=1)
    if np.any(alpha <= 0):
        bad = int(np.flatnonzero(alpha <= 0)[0])
        raise DegenerateState(f"row {bad} is absorbing")
    return off / alpha[:, None]


def escape_vector(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return 1.0 - np.diag(P)


def exact_stationary(P, tol: float = 1e-10) -> np.ndarray:
    """Stationary vector of an irreducible row-stochastic matrix.

    Solves ``pi (P - I) = 0`` with one equation swapped for ``sum(pi) = 1``.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("matrix must be square")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("stationary system is singular; chain is not irreducible") from exc
    resid = np.max(np.abs(pi @ P - pi))
    if not np.all(np.isfinite(pi)) or resid > tol or np.any(pi < -tol):
        raise SingularSystem(f"stationary solve failed (residual {resid:.3g})")
    return np.clip(pi, 0.0, None)


def _solve_restricted(P, free, rhs):
    A = np.eye(len(free)) - P[np.ix_(free, free)]
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("first-step system is singular") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("first-step system has no finite solution")
    return sol


def hitting_probability(P, targets: Iterable[int], avoid: Iterable[int]) -> np.ndarray:
    """Probability of reaching ``targets`` before ``avoid`` from each state.

    ``targets`` and ``avoid`` are row indices. Solved by first-step analysis.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    targets = sorted(set(int(t) for t in targets))
    avoid = sorted(set(int(a) for a in avoid))
    if not targets or not avoid:
        raise ValueError("targets and avoid must both be nonempty")
    if set(targets) & set(avoid):
        raise ValueError("targets and avoid must be disjoint")
    fixed = set(targets) | set(avoid)
    free = [i for i in range(n) if i not in fixed]
    s = np.zeros(n)
    s[targets] = 1.0
    if free:
        rhs = P[np.ix_(free, targets)].sum(axis=1)
        s[free] = _solve_restricted(P, free, rhs)
    return s


def expected_hitting_time(P, targets: Iterable[int]) -> np.ndarray:
    """Expected number of steps to reach ``targets`` from each row index."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    targets = set(int(t) for t in targets)
    free = [i for i in range(n) if i not in targets]
    t = np.zeros(n)
    if free:
        t[free] = _solve_restricted(P, free, np.ones(len(free)))
    return t


def jump_stationary_identity(P, pi) -> np.ndarray:
    """``c * alpha * pi`` with ``c`` normalising; the jump chain's stationary law."""
    a = escape_vector(P) * np.asarray(pi, dtype=float)
    return a / a.sum()


def reachability(support) -> np.ndarray:
    """Boolean closure: ``R[i, j]`` is true when ``j`` is reachable from ``i``."""
    adj = np.asarray(support, dtype=bool)
    n = adj.shape[0]
    reach = np.zeros((n, n), dtype=bool)
    for i in range(n):
        seen = np.zeros(n, dtype=bool)
        seen[i] = True
        frontier = [i]
        while frontier:
            nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
            seen[nxt] = True
            frontier = list(nxt)
        reach[i] = seen
    return reach


def is_irreducible(P) -> bool:
    P = np.asarray(P, dtype=float)
    off = (P > 0) & ~np.eye(len(P), dtype=bool)
    return bool(reachability(off).all())


def write_matrix_csv(path, matrix, labels: Sequence) -> None:
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", *labels])
        for lab, row in zip(labels, matrix):
            w.writerow([lab, *(repr(float(v)) for v in row)])


def write_vector_csv(path, vector, labels: Sequence, name: str = "probability") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", name])
        for lab, v in zip(labels, vector):
            w.writerow([lab, repr(float(v))])
