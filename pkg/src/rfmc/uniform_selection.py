"""The Uniform Selection scheme, kept to show how it goes wrong.

From ``x`` draw ``U ~ Uniform[0, 1)``, collect the candidates ``y`` with
``U < pi(y)/pi(x)`` and move to one of them chosen uniformly. If none
qualifies, either draw ``U`` again (``"resample"``) or stay put (``"stay"``).
This always moves but does not leave ``pi`` invariant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import AllCandidatesZero, StateOverflow
from .metropolis import LogTarget, Proposal, _log_current
from .rng import parallel_map

POLICIES = ("resample", "stay")
MAX_RESAMPLES = 10**6
STATE_CAP = 4 * 10**6


@dataclass(frozen=True)
class UniformSelectionKernel:
    proposal: Proposal
    log_target: LogTarget
    policy: str = "resample"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")

    def candidates(self, x):
        """Candidate states and their ratios ``pi(y)/pi(x)`` (unclipped)."""
        ys = np.asarray(self.proposal.neighbours(x), dtype=np.int64)
        if np.any(ys == int(x)):
            raise ValueError("a state cannot be its own candidate")
        lx = _log_current(self.log_target, x)
        ly = np.asarray(self.log_target(ys), dtype=float)
        return ys, np.exp(ly - lx)


def uniform_selection_step(k: UniformSelectionKernel, x: int, rng: np.random.Generator) -> int:
    ys, r = k.candidates(x)
    for _ in range(MAX_RESAMPLES):
        u = rng.random()
        chosen = ys[u < r]
        if len(chosen):
            return int(chosen[int(rng.random() * len(chosen))])
        if k.policy == "stay":
            return int(x)
    raise AllCandidatesZero(f"no candidate of state {x} accepted after {MAX_RESAMPLES} draws")


def selection_probabilities(ratios) -> tuple[np.ndarray, float]:
    """Exact move probabilities per candidate, integrating over ``U``.

    On each interval between consecutive sorted thresholds ``min(r_i, 1)`` the
    qualifying set is fixed, so each member gets the interval length divided
    by the set size. Returns ``(per-candidate mass, mass of the empty set)``.
    """
    r = np.minimum(np.asarray(ratios, dtype=float), 1.0)
    cuts = np.unique(np.concatenate([[0.0], r[r > 0]]))
    mass = np.zeros(len(r))
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        members = r >= hi
        mass[members] += (hi - lo) / members.sum()
    empty = 1.0 - cuts[-1]
    return mass, empty


def uniform_selection_matrix(k: UniformSelectionKernel, states: Sequence[int],
                             truncate: bool = False) -> np.ndarray:
    """Exact transition matrix of the scheme on a finite state list.

    Candidates outside ``states`` must have zero target density, unless
    ``truncate`` is set, in which case they are removed from the candidate
    list before the thresholds are integrated.
    """
    states = [int(s) for s in states]
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for i, x in enumerate(states):
        ys, r = k.candidates(x)
        if truncate:
            keep = np.array([int(y) in index for y in ys], dtype=bool)
            ys, r = ys[keep], r[keep]
        mass, empty = selection_probabilities(r)
        if k.policy == "resample":
            if empty >= 1.0:
                raise AllCandidatesZero(f"state {x} has no candidate with positive density")
            mass = mass / (1.0 - empty)
        else:
            P[i, i] += empty
        for y, m in zip(ys, mass):
            if m == 0:
                continue
            j = index.get(int(y))
            if j is None:
                raise ValueError(f"candidate {y} of {x} lies outside the state list")
            P[i, j] += m
    return P


# ---------------------------------------------------------------------------
# nearest-neighbour walks on the integer line (Example 2 transience)


@numba.njit(nogil=True, cache=True)
def _line_walk(logpi, x0, n_steps, target, stay, rng, log_every, traj):
    # candidates x-1, x+1 in that order; states >= len(logpi) are out of table
    x = x0
    top = len(logpi)
    hit = -1
    lo_state = x0
    n_log = 0
    for k in range(n_steps):
        if log_every > 0 and k % log_every == 0:
            traj[n_log] = x
            n_log += 1
        if x == target:
            hit = k
            break
        if x + 1 >= top:
            return hit, lo_state, x, n_log, True
        lx = logpi[x]
        r0 = math.exp(logpi[x - 1] - lx) if x >= 1 else 0.0
        r1 = math.exp(logpi[x + 1] - lx)
        moved = False
        for _ in range(1000000):
            u = rng.random()
            c0 = u < r0
            c1 = u < r1
            if c0 and c1:
                x = x - 1 if rng.random() * 2.0 < 1.0 else x + 1
                moved = True
            elif c0:
                rng.random()
                x = x - 1
                moved = True
            elif c1:
                rng.random()
                x = x + 1
                moved = True
            elif stay:
                moved = True
            if moved:
                break
        if x < lo_state:
            lo_state = x
    else:
        if log_every > 0 and n_steps % log_every == 0:
            traj[n_log] = x
            n_log += 1
        if x == target and hit < 0:
            hit = n_steps
    return hit, lo_state, x, n_log, False


@dataclass
class TransienceResult:
    start: int
    target: int
    n_steps: int
    hit_step: np.ndarray
    min_state: np.ndarray
    final_state: np.ndarray
    trajectories: np.ndarray
    log_every: int
    policy: str = "resample"
    extra: dict = field(default_factory=dict)

    @property
    def n_replicates(self) -> int:
        return len(self.hit_step)

    @property
    def hit_fraction(self) -> float:
        return float(np.mean(self.hit_step >= 0))

    def mean_trajectory(self) -> np.ndarray:
        """Mean state at each logged step, over replicates still running.

        Replicates that hit the target are frozen at the target from then on.
        """
        return self.trajectories.mean(axis=0)

    def write_trajectory_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replicate", "step", "state"])
            for r, row in enumerate(self.trajectories):
                for j, s in enumerate(row):
                    w.writerow([r, j * self.log_every, int(s)])


def transience_experiment(start: int, n_steps: int, rngs: Sequence[np.random.Generator],
                          target: int = 3, policy: str = "resample", log_every: int = 0,
                          threads: int = 1, log_target: LogTarget | None = None) -> TransienceResult:
    """Run independent Uniform Selection walks on Example 2 from ``start``.

    Each replicate stops as soon as it reaches ``target``. ``rngs`` holds one
    stream per replicate. With ``log_every > 0`` the state is logged every
    ``log_every`` steps for drift plots.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if log_target is None:
        from .models.toy import Example2Target

        log_target = Example2Target().log_target
    top = min(start + n_steps + 2, STATE_CAP)
    logpi = np.asarray(log_target(np.arange(top)), dtype=float)
    n_log = (n_steps // log_every + 1) if log_every > 0 else 0

    def one(rng):
        traj = np.empty(max(n_log, 1), dtype=np.int64)
        hit, lo, final, used, overflow = _line_walk(logpi, start, n_steps, target,
                                                    policy == "stay", rng, log_every, traj)
        if overflow:
            raise StateOverflow(f"walk from {start} passed the state cap {top}")
        if used < n_log:
            traj[used:n_log] = final
        return hit, lo, final, traj[:n_log]

    res = parallel_map(one, rngs, threads)
    return TransienceResult(
        start=start, target=target, n_steps=n_steps,
        hit_step=np.array([r[0] for r in res], dtype=np.int64),
        min_state=np.array([r[1] for r in res], dtype=np.int64),
        final_state=np.array([r[2] for r in res], dtype=np.int64),
        trajectories=np.array([r[3] for r in res], dtype=np.int64).reshape(len(res), n_log),
        log_every=log_every, policy=policy,
    )


def hit_probability_bound(start: int) -> float:
    """Upper bound ``(8/9)^(a-1)`` on ever reaching 3 from ``start = 4a``."""
    a, b = divmod(start, 4)
    if b != 0 or a < 2:
        raise ValueError("start must be 4a with a >= 2")
    return (8 / 9) ** (a - 1)
