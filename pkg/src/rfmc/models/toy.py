"""Small hand-checkable targets.

Example 1 and 3 live on short integer lines and propose nearest (or
next-nearest) neighbours; Example 4 is a three-state ring. Example 2 is the
countable target ``pi(4a + b) = (8/9)^a 2^b / 135``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..metropolis import CompleteProposal, OffsetProposal


@dataclass(frozen=True)
class ToyTarget:
    """Explicit finite target: a state list and its probabilities."""

    states: tuple[int, ...]
    probs: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        if len(self.states) != len(self.probs):
            raise ValueError("states and probs differ in length")
        if list(self.states) != sorted(set(self.states)):
            raise ValueError("states must be strictly increasing")

    @property
    def pi(self) -> np.ndarray:
        p = np.asarray(self.probs, dtype=float)
        return p / p.sum()

    def log_target(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        st = np.asarray(self.states, dtype=np.int64)
        pos = np.clip(np.searchsorted(st, xs), 0, len(st) - 1)
        hit = st[pos] == xs
        with np.errstate(divide="ignore"):
            lp = np.log(np.asarray(self.probs, dtype=float))
        return np.where(hit, lp[pos], -np.inf)

    def tempered(self, beta: float) -> "ToyTarget":
        p = self.pi ** beta
        return ToyTarget(self.states, tuple(p / p.sum()), f"{self.name}^{beta:g}")

    def expectation(self, h) -> float:
        return float(np.dot(self.pi, [h(s) for s in self.states]))


def example1() -> ToyTarget:
    return ToyTarget((1, 2, 3), (1 / 2, 1 / 3, 1 / 6), "example1")


EXAMPLE1_PROPOSAL = OffsetProposal.nearest()


def example3(eps: float) -> ToyTarget:
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return ToyTarget((1, 2, 3, 4), tuple(np.array([1 - eps, 3 * eps, 1 - eps, 1 - eps]) / 3),
                     f"example3(eps={eps:g})")


EXAMPLE3_PROPOSALS = (
    OffsetProposal((-1, 1), (0.5, 0.5)),
    OffsetProposal((-2, -1, 1, 2), (0.25, 0.25, 0.25, 0.25)),
)


def example4() -> ToyTarget:
    return ToyTarget((1, 2, 3), (1 / 4, 1 / 2, 1 / 4), "example4")


EXAMPLE4_PROPOSAL = CompleteProposal((1, 2, 3))


class Example2Target:
    """``pi(4a + b) = (8/9)^a 2^b / 135`` on the non-negative integers."""

    name = "example2"
    LOG_DECAY = math.log(8 / 9)
    LOG_TWO = math.log(2)
    LOG_NORM = math.log(135)

    def log_target(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
        a, b = np.divmod(np.maximum(xs, 0), 4)
        lp = a * self.LOG_DECAY + b * self.LOG_TWO - self.LOG_NORM
        return np.where(xs >= 0, lp, -np.inf)

    def pi(self, xs) -> np.ndarray:
        return np.exp(self.log_target(xs))

    @staticmethod
    def block_mass_closed_form(a_max: int) -> float:
        """Total mass of states ``0 .. 4*a_max + 3``: ``1 - (8/9)^(a_max+1)``."""
        return 1.0 - (8 / 9) ** (a_max + 1)

    def states_upto(self, top: int) -> list[int]:
        return list(range(0, top + 1))


EXAMPLE2_PROPOSAL = OffsetProposal.nearest()
