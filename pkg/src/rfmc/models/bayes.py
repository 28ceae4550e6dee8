"""Binomial model for course grades on a discrete grid of means.

The mean grade theta runs over 0.1, 0.2, ..., 99.9 (percent). It is stored
as the integer ``k = 10 * theta`` in 1..999 so the grid never drifts; the
binomial success probability is ``k / 1000``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

GRID = np.arange(1, 1000, dtype=np.int64)
N_TRIALS = 100

SCORES_SEED = 2002
N_SCORES = 200


def synthesize_scores(seed: int = SCORES_SEED, n: int = N_SCORES) -> np.ndarray:
    """Stand-in grade data: rounded normal(76, 11) clipped to 0..100."""
    rng = np.random.default_rng(seed)
    return np.clip(np.rint(rng.normal(76.0, 11.0, size=n)), 0, 100).astype(np.int64)


def load_scores(path=None) -> np.ndarray:
    """Read one integer score per line (0..100)."""
    if path is None:
        text = resources.files("rfmc").joinpath("data/scores.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = [r for r in csv.reader(text.splitlines()) if r and r[0].strip()]
    scores = np.array([int(r[0]) for r in rows], dtype=np.int64)
    if np.any(scores < 0) or np.any(scores > N_TRIALS):
        raise ValueError("scores must lie in 0..100")
    return scores


def write_scores(path, scores) -> None:
    with open(path, "w", newline="") as fh:
        for s in scores:
            fh.write(f"{int(s)}\n")


@dataclass(frozen=True)
class BinomialPosterior:
    """Posterior over the grid under a uniform prior and binomial likelihood."""

    scores: tuple[int, ...]

    @classmethod
    def from_scores(cls, scores) -> "BinomialPosterior":
        return cls(tuple(int(s) for s in scores))

    @classmethod
    def bundled(cls) -> "BinomialPosterior":
        return cls.from_scores(load_scores())

    @property
    def states(self) -> np.ndarray:
        return GRID

    @property
    def prior(self) -> np.ndarray:
        return np.full(len(GRID), 1.0 / len(GRID))

    def log_target(self, ks) -> np.ndarray:
        """Log posterior up to a constant; binomial coefficients dropped."""
        ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
        on = (ks >= 1) & (ks <= 999)
        p = np.where(on, ks, 500) / 1000.0
        s = sum(self.scores)
        n = len(self.scores) * N_TRIALS
        lp = s * np.log(p) + (n - s) * np.log1p(-p)
        return np.where(on, lp, -np.inf)

    def posterior(self) -> np.ndarray:
        lp = self.log_target(GRID)
        w = np.exp(lp - lp.max())
        return w / w.sum()

    def mle_index(self) -> int:
        """Grid point nearest the pooled binomial MLE ``mean(scores)``."""
        return int(np.clip(np.rint(10 * np.mean(self.scores)), 1, 999))


def theta_to_index(theta: float) -> int:
    k = int(round(theta * 10))
    if not 1 <= k <= 999 or abs(k - theta * 10) > 1e-6:
        raise ValueError(f"theta={theta} is not on the 0.1 grid")
    return k


def posterior_logweight(model: BinomialPosterior, theta: float) -> float:
    """Log posterior weight at ``theta`` (percent), up to a constant."""
    return float(model.log_target([theta_to_index(theta)])[0])


def log_likelihood_direct(scores, theta: float) -> float:
    """Full log-likelihood including binomial coefficients, one score at a time."""
    from math import comb, log

    p = theta / 100.0
    return sum(log(comb(N_TRIALS, x)) + x * log(p) + (N_TRIALS - x) * log(1 - p) for x in scores)
