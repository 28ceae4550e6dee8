"""Compiled single-spin-flip samplers for the small Ising model.

One kernel covers the four scenarios (Metropolis or rejection-free, with or
without tempering) and their pseudo-marginal versions. Only the ``T = 1``
chain is recorded: its magnetization at the start of every iteration and
the weight that state carries.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numba
import numpy as np

from .chain import _first_above
from .models.ising import IsingModel
from .models.pseudo_marginal import GammaNoise

LADDER = (1.0, math.sqrt(2.0), 2.0)
SAMPLERS = ("metropolis", "rejection-free")


@numba.njit(nogil=True, cache=True)
def _alpha(E, x, beta, n_sites):
    s = 0.0
    for j in range(n_sites):
        d = E[x ^ (1 << j)] - E[x]
        s += 1.0 if d <= 0 else math.exp(-beta * d)
    return s / n_sites


@numba.njit(nogil=True, cache=True)
def _run(E, mag_idx, betas, n_sites, rf, noisy, shape, scale, n_iter, x_init, rng,
         cat, weights, swap_att, swap_acc):
    K = betas.shape[0]
    x = x_init.copy()
    # log noise attached to each chain's current state; it travels with swaps
    lnoise = np.zeros(K)
    if noisy:
        for k in range(K):
            lnoise[k] = math.log(rng.gamma(shape, scale))
    cum = np.empty(n_sites)
    lys = np.empty(n_sites)
    for n in range(n_iter):
        for k in range(K):
            b = betas[k]
            lx = -b * E[x[k]] + lnoise[k]
            if rf:
                tot = 0.0
                for j in range(n_sites):
                    ly = -b * E[x[k] ^ (1 << j)]
                    if noisy:
                        ly += math.log(rng.gamma(shape, scale))
                    lys[j] = ly
                    d = ly - lx
                    tot += 1.0 if d >= 0 else math.exp(d)
                    cum[j] = tot
                if k == 0:
                    cat[n] = mag_idx[x[0]]
                    weights[n] = n_sites / tot
                i = _first_above(cum, 0, n_sites, rng.random() * tot)
                if i >= n_sites:
                    i = 0
                    while cum[i] < tot:
                        i += 1
                x[k] = x[k] ^ (1 << i)
                lnoise[k] = lys[i] + b * E[x[k]]
            else:
                if k == 0:
                    cat[n] = mag_idx[x[0]]
                    weights[n] = 1.0
                j = int(rng.random() * n_sites)
                y = x[k] ^ (1 << j)
                ln = math.log(rng.gamma(shape, scale)) if noisy else 0.0
                ly = -b * E[y] + ln
                if rng.random() < math.exp(min(0.0, ly - lx)):
                    x[k] = y
                    lnoise[k] = ln
        if K > 1:
            p = int(rng.random() * (K - 1))
            b1 = betas[p]
            b2 = betas[p + 1]
            x1 = x[p]
            x2 = x[p + 1]
            # retained noise moves with the state, so it cancels from the ratio
            lr = (b1 - b2) * (E[x1] - E[x2])
            if rf:
                lr += (math.log(_alpha(E, x2, b1, n_sites)) + math.log(_alpha(E, x1, b2, n_sites))
                       - math.log(_alpha(E, x1, b1, n_sites)) - math.log(_alpha(E, x2, b2, n_sites)))
            swap_att[p] += 1
            if rng.random() < math.exp(min(0.0, lr)):
                swap_acc[p] += 1
                x[p] = x2
                x[p + 1] = x1
                t = lnoise[p]
                lnoise[p] = lnoise[p + 1]
                lnoise[p + 1] = t


@dataclass
class IsingRun:
    """Recorded ``T = 1`` chain of one run."""

    categories: np.ndarray
    weights: np.ndarray
    swap_attempts: np.ndarray
    swap_accepts: np.ndarray
    seconds: float
    initial: np.ndarray
    n_sites: int = 16

    @property
    def magnetization(self) -> np.ndarray:
        return 2 * self.categories - self.n_sites

    @property
    def n_iter(self) -> int:
        return len(self.categories)

    @property
    def seconds_per_step(self) -> float:
        return self.seconds / max(self.n_iter, 1)


@dataclass(frozen=True)
class IsingSampler:
    """One of the sampling scenarios on an Ising model.

    ``temperatures`` holds one value for a single chain or the tempering
    ladder (first entry is the temperature of interest).
    """

    model: IsingModel
    sampler: str = "metropolis"
    temperatures: tuple[float, ...] = (1.0,)
    noise: GammaNoise | None = None

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if not self.temperatures or any(t <= 0 for t in self.temperatures):
            raise ValueError("temperatures must be positive")

    @property
    def tempering(self) -> bool:
        return len(self.temperatures) > 1

    @property
    def rejection_free(self) -> bool:
        return self.sampler == "rejection-free"

    def label(self) -> str:
        parts = ["rf" if self.rejection_free else "metropolis", "pt" if self.tempering else "single"]
        if self.noise is not None:
            parts.append("pm")
        return "-".join(parts)

    def run(self, n_iter: int, rng: np.random.Generator) -> IsingRun:
        """Run from a uniformly random configuration per chain."""
        m = self.model
        K = len(self.temperatures)
        x0 = rng.integers(0, m.n_states, size=K).astype(np.int64)
        E = m.energy_table.astype(float)
        mag_idx = (m.magnetization_table + m.n_sites) // 2
        betas = np.array([1.0 / t for t in self.temperatures])
        noisy = self.noise is not None
        shape = self.noise.shape if noisy else 1.0
        scale = 1.0 / self.noise.rate if noisy else 1.0
        cat = np.empty(n_iter, dtype=np.int64)
        w = np.empty(n_iter)
        att = np.zeros(max(K - 1, 0), dtype=np.int64)
        acc = np.zeros(max(K - 1, 0), dtype=np.int64)
        t0 = time.perf_counter()
        _run(E, mag_idx.astype(np.int64), betas, m.n_sites, self.rejection_free, noisy, shape, scale,
             n_iter, x0, rng, cat, w, att, acc)
        return IsingRun(cat, w, att, acc, time.perf_counter() - t0, x0, m.n_sites)


def magnetization_law(model: IsingModel, T: float = 1.0) -> np.ndarray:
    """Exact law of ``(M + n) / 2``, the category index used by the samplers."""
    from .models.ising import exact_magnetization_distribution

    return exact_magnetization_distribution(model, T)[1]


def exact_swap_acceptance(model: IsingModel, temperatures=LADDER, modified: bool = False) -> np.ndarray:
    """Mean swap acceptance of each adjacent pair when both chains are at equilibrium.

    With ``modified`` the chains are drawn from ``alpha * pi^beta`` and the
    swap uses the modified ratio.
    """
    E = model.energy_table.astype(float)
    betas = [1.0 / t for t in temperatures]
    laws, alphas = [], []
    for b in betas:
        w = np.exp(-b * (E - E.min()))
        a = np.array([_alpha(E, x, b, model.n_sites) for x in range(model.n_states)]) if modified else None
        if modified:
            w = w * a
        laws.append(w / w.sum())
        alphas.append(a)
    out = []
    for p in range(len(betas) - 1):
        b1, b2 = betas[p], betas[p + 1]
        # E[min(1, r)] over independent draws, grouped by energy to stay small
        if not modified:
            levels = np.unique(E)
            pe1 = np.array([laws[p][E == e].sum() for e in levels])
            pe2 = np.array([laws[p + 1][E == e].sum() for e in levels])
            lr = (b1 - b2) * (levels[:, None] - levels[None, :])
            out.append(float(pe1 @ np.exp(np.minimum(0.0, lr)) @ pe2))
        else:
            out.append(_modified_pair_acceptance(E, laws[p], laws[p + 1], alphas[p], alphas[p + 1], b1, b2))
    return np.array(out)


def _modified_pair_acceptance(E, l1, l2, a1, a2, b1, b2) -> float:
    # group states by (energy, alpha at both temperatures) to keep the double sum small
    key = np.round(np.stack([E, a1, a2], axis=1), 12)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    p1 = np.bincount(inv, weights=l1, minlength=len(uniq))
    p2 = np.bincount(inv, weights=l2, minlength=len(uniq))
    e, c1, c2 = uniq[:, 0], uniq[:, 1], uniq[:, 2]
    # state u at b1, state v at b2
    lr = ((b1 - b2) * (e[:, None] - e[None, :]) + np.log(c1[None, :]) + np.log(c2[:, None])
          - np.log(c1[:, None]) - np.log(c2[None, :]))
    return float(p1 @ np.exp(np.minimum(0.0, lr)) @ p2)
