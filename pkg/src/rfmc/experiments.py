"""Experiment registry, config parsing and report writing for the CLI.

A config is a small INI file::

    [experiment]
    name = ising-tvd
    seed = 20240101
    threads = 4
    out = out
    variants = metropolis-single, rf-single

    [parameters]
    runs = 100
    n_iter = 100000

Every parameter has a documented default; unknown keys are rejected.
Outputs go to ``<out>/<experiment>/<variant>/`` as ``report.json``,
``traces/*.csv`` and ``curves/*.csv``. These files depend only on the config
and seed. Wall-clock measurements go to ``environment.json`` and
``timing/*.csv`` instead, which are the only files that vary between runs.
"""

from __future__ import annotations

import configparser
import csv
import math
import re
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import chain, diagnostics
from .composition import (AlternationSchedule, alternating_stationary, budget_equivalence_check,
                          budgeted_alternating_run, naive_alternating_run, naive_alternation_limit)
from .errors import ConfigError
from .ising_sampling import LADDER, IsingSampler, exact_swap_acceptance, magnetization_law
from .metropolis import (FiniteProposal, finite_jump_kernel, finite_kernel, independence_matrix,
                         independence_sampler_kernel)
from .models import (BinomialPosterior, Example2Target, GammaNoise, IsingModel, example1, example3,
                     example4)
from .models.ising import exact_magnetization_distribution, select_boundary
from .models.pseudo_marginal import PseudoMarginalTarget, run_pseudo_marginal_finite
from .models.toy import EXAMPLE1_PROPOSAL, EXAMPLE2_PROPOSAL, EXAMPLE3_PROPOSALS, EXAMPLE4_PROPOSAL
from .rng import parallel_map, stream
from .tempering import TemperingEnsemble, estimate_alpha, phase_stationarity, run_tempering, tempered
from .uniform_selection import (POLICIES, UniformSelectionKernel, hit_probability_bound,
                                transience_experiment, uniform_selection_matrix, uniform_selection_step)

REPORTED_US_VECTOR = (3 / 5, 4 / 15, 2 / 15)
REPORTED_MODIFIED_SWAP = 17 / 32


# ---------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    name: str
    seed: int = 20240101
    threads: int = 1
    out: str = "out"
    variants: tuple[str, ...] | None = None
    params: dict = field(default_factory=dict)
    source: str | None = None


@dataclass
class VariantOutput:
    """What one variant produced: a report plus deterministic and timing files."""

    report: dict
    files: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    timing_files: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    variants: tuple[str, ...]
    defaults: dict
    runner: Callable
    compare: Callable | None = None


REGISTRY: dict[str, Experiment] = {}


def experiment(name: str, description: str, variants: tuple[str, ...], **defaults):
    def wrap(fn):
        REGISTRY[name] = Experiment(name, description, variants, defaults, fn)
        return fn
    return wrap


def _coerce(key: str, raw, default, line=None):
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            v = float(text)
            if not v.is_integer():
                raise ValueError(text)
            v = int(v)
        elif isinstance(default, float):
            v = float(text)
        elif isinstance(default, tuple):
            v = tuple(float(t) for t in text.split(",") if t.strip())
            if not v:
                raise ValueError(text)
            if any(not x > 0 for x in v):
                raise ConfigError(f"all entries must be positive, got {text!r}", key, line)
            return v
        else:
            return text
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as {type(default).__name__}", key, line) from None
    if not v > 0:
        raise ConfigError(f"must be positive, got {text!r}", key, line)
    return v


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = i
    return lines


def parse_config(path) -> ExperimentConfig:
    """Read and validate an INI experiment config."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    lines = _line_numbers(text)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0], line=getattr(e, "lineno", None)) from None
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    unknown = set(cp.sections()) - {"experiment", "parameters"}
    if unknown:
        sec = sorted(unknown)[0]
        raise ConfigError(f"unknown section [{sec}]", sec)
    exp = cp["experiment"]
    allowed = {"name", "seed", "threads", "out", "variants"}
    for key in exp:
        if key not in allowed:
            raise ConfigError("unknown key in [experiment]", key, lines.get(("experiment", key)))
    if "name" not in exp:
        raise ConfigError("missing experiment name", "name")
    name = exp["name"].strip()
    cfg = default_config(name, line=lines.get(("experiment", "name")))
    cfg.source = str(path)
    if "seed" in exp:
        cfg.seed = _seed(exp["seed"], lines.get(("experiment", "seed")))
    if "threads" in exp:
        cfg.threads = _coerce("threads", exp["threads"], 1, lines.get(("experiment", "threads")))
    if "out" in exp:
        cfg.out = exp["out"].strip()
    if "variants" in exp:
        cfg = with_variants(cfg, exp["variants"], lines.get(("experiment", "variants")))
    if cp.has_section("parameters"):
        for key, raw in cp["parameters"].items():
            cfg = with_param(cfg, key, raw, lines.get(("parameters", key)))
    return cfg


def _seed(raw, line=None) -> int:
    try:
        v = int(str(raw).strip())
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {raw!r}", "seed", line) from None
    if not 0 <= v < 2**64:
        raise ConfigError("seed must be a non-negative 64-bit integer", "seed", line)
    return v


def default_config(name: str, line=None) -> ExperimentConfig:
    if name not in REGISTRY:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(REGISTRY)}", "name", line)
    return ExperimentConfig(name, params=dict(REGISTRY[name].defaults))


def with_param(cfg: ExperimentConfig, key: str, raw, line=None) -> ExperimentConfig:
    key = key.strip().lower()
    defaults = REGISTRY[cfg.name].defaults
    if key not in defaults:
        raise ConfigError(f"unknown parameter for {cfg.name}; known: {', '.join(sorted(defaults))}",
                          key, line)
    params = dict(cfg.params)
    params[key] = _coerce(key, raw, defaults[key], line)
    return replace(cfg, params=params)


def with_variants(cfg: ExperimentConfig, raw: str, line=None) -> ExperimentConfig:
    names = tuple(v.strip() for v in str(raw).split(",") if v.strip())
    known = REGISTRY[cfg.name].variants
    bad = [v for v in names if v not in known]
    if bad or not names:
        raise ConfigError(f"unknown variant {bad[0] if bad else raw!r}; known: {', '.join(known)}",
                          "variants", line)
    return replace(cfg, variants=names)


# ---------------------------------------------------------------------------
# running and writing


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every selected variant, write its files, and return the summary."""
    exp = REGISTRY[cfg.name]
    variants = cfg.variants or exp.variants
    base = Path(cfg.out) / cfg.name
    results: dict[str, VariantOutput] = {}
    for v in variants:
        t0 = time.perf_counter()
        res = exp.runner(cfg, v)
        res.timing.setdefault("wall_seconds", time.perf_counter() - t0)
        results[v] = res
        _write_variant(base / v, cfg, v, res)
    summary = {
        "experiment": cfg.name,
        "seed": cfg.seed,
        "params": cfg.params,
        "variants": {v: r.report for v, r in results.items()},
    }
    if exp.compare is not None and len(results) > 1:
        summary["comparison"] = exp.compare(cfg, {v: r.report for v, r in results.items()})
    base.mkdir(parents=True, exist_ok=True)
    diagnostics.write_json(base / "summary.json", summary)
    return summary


def _write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_variant(d: Path, cfg: ExperimentConfig, variant: str, res: VariantOutput) -> None:
    d.mkdir(parents=True, exist_ok=True)
    report = {"experiment": cfg.name, "variant": variant, "seed": cfg.seed, "params": cfg.params,
              **res.report}
    diagnostics.write_json(d / "report.json", report)
    for rel, (header, rows) in res.files.items():
        _write_rows(d / rel, header, rows)
    for rel, (header, rows) in res.timing_files.items():
        _write_rows(d / "timing" / rel, header, rows)
    env = {"threads": cfg.threads, "config": cfg.source, **res.timing}
    diagnostics.write_json(d / "environment.json", env)


def _f(x: float) -> str:
    return repr(float(x))


def _vec(v) -> list[float]:
    return [float(x) for x in v]


def _rngs(cfg: ExperimentConfig, variant: str, n: int, *keys):
    return [stream(cfg.seed, cfg.name, variant, *keys, i) for i in range(n)]


# ---------------------------------------------------------------------------
# Example 1


@experiment("example1", "three-state target: Metropolis, jump chain and Uniform Selection",
            ("metropolis", "jump-multiplicity", "jump-mean", "uniform-selection-resample",
             "uniform-selection-stay"),
            n_steps=1_000_000, trace_length=1000)
def _example1(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    t = example1()
    p = cfg.params
    rng = stream(cfg.seed, cfg.name, variant)
    h = lambda s: (np.asarray(s) == 1).astype(float)
    labels = list(t.states)
    P = chain.to_matrix(finite_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states), t.states)
    rep: dict = {"target": _vec(t.pi)}
    files: dict = {}
    if variant == "metropolis":
        pi = chain.exact_stationary(P)
        path = chain.run_original(finite_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states), 1,
                                  p["n_steps"], rng)
        occ = np.bincount(np.searchsorted(t.states, path[:-1]), minlength=3) / p["n_steps"]
        rep.update(exact_stationary=_vec(pi), empirical=_vec(occ), matrix=P.tolist(),
                   max_error=float(np.max(np.abs(pi - t.pi))))
        files["curves/matrix.csv"] = (["state"] + labels, [[s] + _vec(r) for s, r in zip(labels, P)])
        files["traces/path.csv"] = (["step", "state"],
                                    [[i, int(s)] for i, s in enumerate(path[:p["trace_length"]])])
    elif variant.startswith("jump"):
        mode = chain.MULTIPLICITY if variant.endswith("multiplicity") else chain.MEAN
        jk = finite_jump_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states)
        Pj = chain.jump_matrix(P)
        pij = chain.exact_stationary(Pj)
        ident = chain.jump_stationary_identity(P, t.pi)
        tr = chain.run_jump(jk, 1, p["n_steps"], rng, mode)
        rep.update(jump_stationary=_vec(pij), identity=_vec(ident),
                   identity_error=float(np.max(np.abs(pij - ident))),
                   weighted_estimate=diagnostics.weighted_mean(tr, h),
                   unweighted_estimate=diagnostics.unweighted_mean(tr, h),
                   escape=_vec(chain.escape_vector(P)))
        files["traces/jump.csv"] = (["step", "state", "weight"],
                                    [[i, int(s), _f(w)] for i, (s, w) in
                                     enumerate(zip(tr.states[:p["trace_length"]], tr.weights))])
    else:
        policy = variant.rsplit("-", 1)[1]
        k = UniformSelectionKernel(EXAMPLE1_PROPOSAL, t.log_target, policy)
        U = uniform_selection_matrix(k, t.states, truncate=True)
        pu = chain.exact_stationary(U)
        x, path = 1, [1]
        for _ in range(min(p["n_steps"], 100_000)):
            x = uniform_selection_step(k, x, rng)
            path.append(x)
        occ = np.bincount(np.searchsorted(t.states, path[:-1]), minlength=3) / (len(path) - 1)
        rep.update(policy=policy, matrix=U.tolist(), exact_stationary=_vec(pu),
                   tvd_to_target=diagnostics.tvd(pu, t.pi), empirical=_vec(occ),
                   reported_vector=list(REPORTED_US_VECTOR),
                   tvd_to_reported_vector=diagnostics.tvd(pu, REPORTED_US_VECTOR),
                   exact_fractions=[str(Fraction(float(v)).limit_denominator(1000)) for v in pu])
        files["curves/matrix.csv"] = (["state"] + labels, [[s] + _vec(r) for s, r in zip(labels, U)])
    return VariantOutput(rep, files)


# ---------------------------------------------------------------------------
# Example 2


@experiment("example2-transience", "Uniform Selection drifts away on the countable target",
            ("resample", "stay"),
            start=100, budget=100_000, replicates=1000, target=3, log_every=1000,
            check_start=8, check_target=4, check_replicates=10_000, check_budget=10_000)
def _example2(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    p = cfg.params
    t0 = time.perf_counter()
    res = transience_experiment(p["start"], p["budget"], _rngs(cfg, variant, p["replicates"], "main"),
                                target=p["target"], policy=variant, log_every=p["log_every"],
                                threads=cfg.threads)
    chk = transience_experiment(p["check_start"], p["check_budget"],
                                _rngs(cfg, variant, p["check_replicates"], "check"),
                                target=p["check_target"], policy=variant, threads=cfg.threads)
    seconds = time.perf_counter() - t0
    rep = {
        "policy": variant,
        "hit_fraction": res.hit_fraction,
        "bound": hit_probability_bound(p["start"]) if p["start"] % 4 == 0 and p["start"] >= 8 else None,
        "min_state_mean": float(res.min_state.mean()),
        "final_state_mean": float(res.final_state.mean()),
        "mean_trajectory": _vec(res.mean_trajectory()),
        "check": {"start": p["check_start"], "target": p["check_target"],
                  "hit_fraction": chk.hit_fraction, "reference": 8 / 9},
    }
    files = {
        "traces/trajectory.csv": (["replicate", "step", "state"],
                                  [[r, j * res.log_every, int(s)] for r, row in enumerate(res.trajectories)
                                   for j, s in enumerate(row)]),
        "curves/drift.csv": (["step", "mean_state"],
                             [[j * res.log_every, _f(v)] for j, v in enumerate(res.mean_trajectory())]),
        "curves/replicates.csv": (["replicate", "hit_step", "min_state", "final_state"],
                                  [[r, int(a), int(b), int(c)] for r, (a, b, c) in
                                   enumerate(zip(res.hit_step, res.min_state, res.final_state))]),
    }
    return VariantOutput(rep, files, {"seconds": seconds})


# ---------------------------------------------------------------------------
# Example 3


@experiment("example3-alternating", "alternating two rejection-free kernels: naive vs budgeted",
            ("naive", "budgeted"),
            eps=0.001, n_cycles=1_000_000, l0=10, eps_sweep=(0.1, 0.01, 0.001), trace_cycles=200,
            check_trials=1_000_000)
def _example3(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    p = cfg.params
    h = lambda s: float(s == 1)

    def kernels(eps):
        t = example3(eps)
        return t, [finite_jump_kernel(q, t.log_target, t.states) for q in EXAMPLE3_PROPOSALS]

    t, ks = kernels(p["eps"])
    sweep = []
    rep: dict = {"eps": p["eps"], "target_value": float(t.pi[0])}
    if variant == "naive":
        r = naive_alternating_run(ks, 1, p["n_cycles"], stream(cfg.seed, cfg.name, variant), record=False)
        rep.update(estimate=r.estimate(h), exact_limit=naive_alternation_limit(ks, h), biased=True)
        for eps in p["eps_sweep"]:
            te, ke = kernels(eps)
            re_ = naive_alternating_run(ke, 1, p["n_cycles"], stream(cfg.seed, cfg.name, variant, eps),
                                        record=False)
            sweep.append([eps, _f(re_.estimate(h)), _f(naive_alternation_limit(ke, h)), _f(te.pi[0])])
        tr = naive_alternating_run(ks, 1, p["trace_cycles"], stream(cfg.seed, cfg.name, variant, "trace"))
    else:
        sched = AlternationSchedule.uniform(ks, p["l0"])
        r = budgeted_alternating_run(sched, 1, p["n_cycles"], stream(cfg.seed, cfg.name, variant))
        rep.update(estimate=r.estimate(h), l0=p["l0"],
                   exact_limit=float(alternating_stationary(ks, p["l0"])[0]), biased=False)
        for eps in p["eps_sweep"]:
            te, ke = kernels(eps)
            re_ = budgeted_alternating_run(AlternationSchedule.uniform(ke, p["l0"]), 1, p["n_cycles"],
                                           stream(cfg.seed, cfg.name, variant, eps))
            sweep.append([eps, _f(re_.estimate(h)), _f(alternating_stationary(ke, p["l0"])[0]),
                          _f(te.pi[0])])
        tr = budgeted_alternating_run(sched, 1, p["trace_cycles"], stream(cfg.seed, cfg.name, variant, "trace"),
                                      record=True)
        t1 = example1()
        k1 = finite_jump_kernel(EXAMPLE1_PROPOSAL, t1.log_target, t1.states)
        rep["equivalence"] = {
            "example1_l0_5": budget_equivalence_check(k1, 5, 2, p["check_trials"],
                                                      stream(cfg.seed, cfg.name, "eq1")).as_dict(),
            "example3_p1_l0_20": budget_equivalence_check(ks[0], 20, 1, p["check_trials"],
                                                          stream(cfg.seed, cfg.name, "eq3")).as_dict(),
        }
        turn_sums = np.bincount(tr.trace.labels["turn"], weights=tr.trace.weights)
        rep["turn_weight_sums"] = sorted(set(_vec(turn_sums)))
    T = tr.trace
    files = {
        "curves/eps_sweep.csv": (["eps", "estimate", "exact_limit", "target"], sweep),
        "traces/alternation.csv": (["turn", "kernel_index", "state", "weight"],
                                   [[int(a), int(b), int(c), _f(d)] for a, b, c, d in
                                    zip(T.labels["turn"], T.labels["kernel"], T.states, T.weights)]),
    }
    return VariantOutput(rep, files)


def _compare_example3(cfg, reports):
    return {v: {"estimate": r["estimate"], "exact_limit": r["exact_limit"]} for v, r in reports.items()}


# ---------------------------------------------------------------------------
# Example 4


@experiment("example4-tempering", "two-temperature tempering with rejection-free chains",
            ("naive", "modified", "metropolis"),
            n_phases=100_000, beta_hot=5.0, preliminary=1_000_000, log_phases=1000)
def _example4(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    p = cfg.params
    t = example4()
    betas = (1.0, p["beta_hot"])
    sampler = "metropolis" if variant == "metropolis" else "jump"
    swap = "modified" if variant == "modified" else "standard"
    ens = TemperingEnsemble(betas, t.log_target, EXAMPLE4_PROPOSAL, sampler, swap, states=t.states)
    res = run_tempering(ens, (2, 2), p["n_phases"], stream(cfg.seed, cfg.name, variant))
    pc = phase_stationarity(ens)
    frac = float(np.mean(res.post_swap[:, 0] == 3))
    hot = finite_kernel(EXAMPLE4_PROPOSAL, tempered(t.log_target, betas[1]), t.states)
    ae = estimate_alpha(hot, t.states, 2, p["preliminary"], stream(cfg.seed, cfg.name, variant, "alpha"))
    rep = {
        "sampler": sampler, "swap": swap, "betas": list(betas),
        "post_swap_fraction_state3": frac,
        "exact_post_swap_fraction_state3": float(pc.marginal(0, t.states)[2]),
        "phase_stationarity_max_error": pc.max_error,
        "phase_stationarity_tvd": pc.tvd,
        "swap_probability_2_3": ens.swap_probability(0, 2, 3),
        "reported_modified_swap_probability": REPORTED_MODIFIED_SWAP,
        "swap_acceptance_rate": res.acceptance_rate,
        "pair_stats": res.pair_stats(),
        "alpha_exact": _vec(ens.jump_kernel(1).alphas),
        "alpha_estimated_hot": _vec(ae.alpha),
    }
    n = min(p["log_phases"], len(res.swap_phase))
    files = {
        "traces/swaps.csv": (["phase", "pair", "acceptance_prob", "accepted"],
                             [[int(res.swap_phase[i]), int(res.swap_pair[i]), _f(res.swap_prob[i]),
                               int(res.swap_accepted[i])] for i in range(n)]),
        "traces/post_swap.csv": (["phase"] + [f"beta_{b:g}" for b in betas],
                                 [[i] + [int(v) for v in res.post_swap[i]] for i in range(n)]),
    }
    for k, trk in enumerate(res.traces):
        files[f"traces/temperature_{k}.csv"] = (["step", "state", "weight"],
                                                [[i, int(trk.states[i]), _f(trk.weights[i])]
                                                 for i in range(min(n, len(trk)))])
    return VariantOutput(rep, files)


# ---------------------------------------------------------------------------
# Bayesian binomial ESS


_BAYES_CACHE: dict = {}


def _bayes_kernels():
    if not _BAYES_CACHE:
        model = BinomialPosterior.bundled()
        st = model.states
        k = independence_sampler_kernel(model.prior, model.log_target, st)
        _BAYES_CACHE["model"] = model
        _BAYES_CACHE["metropolis"] = FiniteProposal(k.proposal, model.log_target, st)
        _BAYES_CACHE["jump"] = chain.FiniteJumpKernel.from_matrix(
            independence_matrix(model.prior, model.log_target, st), st)
    return _BAYES_CACHE


@experiment("bayes-ess", "independence sampler on the binomial grid posterior: ESS",
            ("metropolis", "rejection-free"),
            runs=100, n_iter=100_000)
def _bayes(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    p = cfg.params
    ks = _bayes_kernels()
    model = ks["model"]

    def one(r):
        rng = stream(cfg.seed, cfg.name, variant, r)
        x0 = int(rng.choice(model.states))
        t0 = time.perf_counter()
        if variant == "metropolis":
            path, _ = ks["metropolis"].run(x0, p["n_iter"], rng)
            theta = path[1:] / 10.0
        else:
            theta = chain.run_jump(ks["jump"], x0, p["n_iter"], rng, chain.MEAN).states / 10.0
        dt = time.perf_counter() - t0
        return diagnostics.ess(theta, seconds=dt), float(theta.mean())

    out = parallel_map(one, range(p["runs"]), cfg.threads)
    reps = [o[0] for o in out]
    per_iter = np.array([r.ess_per_iter for r in reps])
    per_sec = np.array([r.ess_per_sec for r in reps])
    rep = {
        "median_ess_per_iter": float(np.median(per_iter)),
        "median_cutoff_lag": float(np.median([r.cutoff_lag for r in reps])),
        "super_efficient_runs": int(sum(r.super_efficient for r in reps)),
        "posterior_mode_theta": float(model.states[np.argmax(model.posterior())] / 10.0),
        "posterior_mean_theta": float(np.dot(model.posterior(), model.states) / 10.0),
    }
    files = {"curves/ess.csv": (["run_id", "ess", "ess_per_iter", "ess_per_sec", "cutoff_lag"],
                                [[i, _f(r.ess), _f(r.ess_per_iter), "", r.cutoff_lag]
                                 for i, r in enumerate(reps)])}
    timing_files = {"ess.csv": (["run_id", "ess", "ess_per_iter", "ess_per_sec", "cutoff_lag"],
                                [[i, _f(r.ess), _f(r.ess_per_iter), _f(r.ess_per_sec), r.cutoff_lag]
                                 for i, r in enumerate(reps)])}
    return VariantOutput(rep, files, {"median_ess_per_sec": float(np.median(per_sec))}, timing_files)


def _compare_ess(cfg, reports):
    out = {v: r["median_ess_per_iter"] for v, r in reports.items()}
    pairs = {}
    for v in reports:
        if v.startswith("rejection-free") or v.startswith("rf"):
            base = "metropolis" + v[len("rejection-free"):] if v.startswith("rejection-free") else \
                "metropolis" + v[2:]
            if base in reports and reports[base]["median_ess_per_iter"] > 0:
                pairs[f"{v}/{base}"] = reports[v]["median_ess_per_iter"] / reports[base]["median_ess_per_iter"]
    return {"median_ess_per_iter": out, "ratios": pairs}


# ---------------------------------------------------------------------------
# Ising


ISING_VARIANTS = ("metropolis-single", "rf-single", "metropolis-pt", "rf-pt")
PM_VARIANTS = tuple(v + "-pm" for v in ISING_VARIANTS)


def _ising_sampler(variant: str, boundary: str) -> IsingSampler:
    parts = variant.split("-")
    model = IsingModel(4, boundary, 1.0)
    return IsingSampler(model, "rejection-free" if parts[0] == "rf" else "metropolis",
                        LADDER if parts[1] == "pt" else (1.0,),
                        GammaNoise(10.0, 10.0) if "pm" in parts else None)


def _checkpoints(n_iter: int) -> np.ndarray:
    pts = set()
    for e in range(1, int(math.log10(n_iter)) + 1):
        for m in (1, 2, 5):
            if m * 10**e <= n_iter:
                pts.add(m * 10**e)
    pts.add(n_iter)
    return np.array(sorted(pts), dtype=np.int64)


def _boundary() -> tuple[str, dict]:
    chosen, table = select_boundary(4, 2.0)
    if chosen is None:
        raise RuntimeError("no boundary condition reproduces the reference magnetization law")
    return chosen, table


def _ising_tvd(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    p = cfg.params
    boundary, table = _boundary()
    smp = _ising_sampler(variant, boundary)
    exact = magnetization_law(smp.model, 1.0)
    cps = _checkpoints(p["n_iter"])

    def one(r):
        run = smp.run(p["n_iter"], stream(cfg.seed, cfg.name, variant, r))
        return diagnostics.running_tvd(run.categories, run.weights, exact, cps), run

    out = parallel_map(one, range(p["runs"]), cfg.threads)
    curve = diagnostics.TvdCurve(cps, np.array([o[0] for o in out]))
    runs = [o[1] for o in out]
    sps = float(np.mean([r.seconds_per_step for r in runs]))
    att = np.sum([r.swap_attempts for r in runs], axis=0) if smp.tempering else np.zeros(0)
    acc = np.sum([r.swap_accepts for r in runs], axis=0) if smp.tempering else np.zeros(0)
    rep = {
        "boundary": boundary, "boundary_check": table, "sampler": smp.sampler,
        "temperatures": list(smp.temperatures), "pseudo_marginal": smp.noise is not None,
        "checkpoints": cps.tolist(), "mean_tvd": _vec(curve.mean),
        "swap_acceptance": float(acc.sum() / att.sum()) if smp.tempering else None,
        "pair_acceptance": _vec(acc / att) if smp.tempering else None,
    }
    files = {"curves/tvd.csv": (["run_id", "checkpoint", "tvd"],
                                [[r, int(n), _f(v)] for r, row in enumerate(curve.per_run)
                                 for n, v in zip(cps, row)] +
                                [["mean", int(n), _f(v)] for n, v in zip(cps, curve.mean)])}
    timing_files = {"tvd_cpu.csv": (["checkpoint", "cpu_seconds", "mean_tvd"],
                                    [[int(n), _f(n * sps), _f(v)] for n, v in zip(cps, curve.mean)])}
    return VariantOutput(rep, files, {"seconds_per_step": sps}, timing_files)


def _compare_tvd(cfg, reports):
    out = {}
    for v, r in reports.items():
        if not v.startswith("rf"):
            continue
        base = "metropolis" + v[2:]
        if base not in reports:
            continue
        rf, mh = np.array(r["mean_tvd"]), np.array(reports[base]["mean_tvd"])
        cps = r["checkpoints"]
        out[f"{v}<{base}"] = {str(n): bool(a < b) for n, a, b in zip(cps, rf, mh)
                              if n in (10**3, 10**4, 10**5)}
    return out


experiment("ising-tvd", "4x4 Ising: average TVD of the magnetization law",
           ISING_VARIANTS, runs=100, n_iter=100_000)(_ising_tvd)
experiment("pseudo-marginal-tvd", "4x4 Ising with Gamma(10, 10) noisy targets: average TVD",
           PM_VARIANTS, runs=100, n_iter=100_000)(_ising_tvd)


@experiment("ising-ess", "4x4 Ising: ESS of the magnetization",
            ISING_VARIANTS, runs=100, n_iter=100_000)
def _ising_ess(cfg: ExperimentConfig, variant: str) -> VariantOutput:
    p = cfg.params
    boundary, _ = _boundary()
    smp = _ising_sampler(variant, boundary)

    def one(r):
        run = smp.run(p["n_iter"], stream(cfg.seed, cfg.name, variant, r))
        return diagnostics.ess(run.magnetization, seconds=run.seconds), run

    out = parallel_map(one, range(p["runs"]), cfg.threads)
    reps = [o[0] for o in out]
    per_iter = np.array([r.ess_per_iter for r in reps])
    rep = {
        "boundary": boundary, "median_ess_per_iter": float(np.median(per_iter)),
        "super_efficient_runs": int(sum(r.super_efficient for r in reps)),
        "median_cutoff_lag": float(np.median([r.cutoff_lag for r in reps])),
    }
    if smp.tempering:
        att = np.sum([o[1].swap_attempts for o in out], axis=0)
        acc = np.sum([o[1].swap_accepts for o in out], axis=0)
        rep["swap_acceptance"] = float(acc.sum() / att.sum())
        rep["exact_equilibrium_swap_acceptance"] = _vec(
            exact_swap_acceptance(smp.model, smp.temperatures, modified=smp.rejection_free))
    files = {"curves/ess.csv": (["run_id", "ess", "ess_per_iter", "ess_per_sec", "cutoff_lag"],
                                [[i, _f(r.ess), _f(r.ess_per_iter), "", r.cutoff_lag]
                                 for i, r in enumerate(reps)])}
    timing_files = {"ess.csv": (["run_id", "ess", "ess_per_iter", "ess_per_sec", "cutoff_lag"],
                                [[i, _f(r.ess), _f(r.ess_per_iter), _f(r.ess_per_sec), r.cutoff_lag]
                                 for i, r in enumerate(reps)])}
    return VariantOutput(rep, files, {"median_ess_per_sec": float(np.median([r.ess_per_sec for r in reps]))},
                         timing_files)


REGISTRY["example3-alternating"] = replace(REGISTRY["example3-alternating"], compare=_compare_example3)
REGISTRY["bayes-ess"] = replace(REGISTRY["bayes-ess"], compare=_compare_ess)
REGISTRY["ising-ess"] = replace(REGISTRY["ising-ess"], compare=_compare_ess)
REGISTRY["ising-tvd"] = replace(REGISTRY["ising-tvd"], compare=_compare_tvd)
REGISTRY["pseudo-marginal-tvd"] = replace(REGISTRY["pseudo-marginal-tvd"], compare=_compare_tvd)


# ---------------------------------------------------------------------------
# exact oracle table


@dataclass
class OracleRow:
    name: str
    value: float
    expected: float
    tolerance: float
    comparison: str = "abs"

    @property
    def passed(self) -> bool:
        if self.comparison == "gt":
            return self.value > self.expected
        return abs(self.value - self.expected) <= self.tolerance


def _identity_error(P) -> float:
    pi_hat = chain.exact_stationary(chain.jump_matrix(P))
    pi = chain.exact_stationary(P)
    return float(np.max(np.abs(pi_hat - chain.jump_stationary_identity(P, pi))))


def example2_matrix(top: int, policy: str = "resample") -> np.ndarray:
    e2 = Example2Target()
    k = UniformSelectionKernel(EXAMPLE2_PROPOSAL, e2.log_target, policy)
    return uniform_selection_matrix(k, list(range(top + 1)), truncate=True)


def oracle_rows() -> list[OracleRow]:
    rows = []
    t1 = example1()
    P1 = chain.to_matrix(finite_kernel(EXAMPLE1_PROPOSAL, t1.log_target, t1.states), t1.states)
    pi1 = chain.exact_stationary(P1)
    rows.append(OracleRow("example1 stationary max error", float(np.max(np.abs(pi1 - t1.pi))), 0.0, 1e-10))
    rows.append(OracleRow("jump identity: example1", _identity_error(P1), 0.0, 1e-10))
    t3 = example3(0.001)
    for i, q in enumerate(EXAMPLE3_PROPOSALS, 1):
        P3 = chain.to_matrix(finite_kernel(q, t3.log_target, t3.states), t3.states)
        rows.append(OracleRow(f"jump identity: example3 P{i}", _identity_error(P3), 0.0, 1e-10))
    t4 = example4()
    for b in (1.0, 5.0):
        P4 = chain.to_matrix(finite_kernel(EXAMPLE4_PROPOSAL, tempered(t4.log_target, b), t4.states), t4.states)
        rows.append(OracleRow(f"jump identity: example4 beta={b:g}", _identity_error(P4), 0.0, 1e-10))
    PB = bayes_matrix()
    rows.append(OracleRow("jump identity: bayes grid", _identity_error(PB), 0.0, 1e-10))
    P2 = example2_matrix(8)
    s = chain.hitting_probability(P2, [4], [0])
    for x, v in ((1, 3 / 7), (2, 4 / 7), (3, 13 / 21)):
        rows.append(OracleRow(f"hitting s({x})", float(s[x]), v, 1e-12))
    q = chain.hitting_probability(example2_matrix(16), [12], [4])[8]
    rows.append(OracleRow("block up-probability q", float(q), 9 / 17, 1e-12))
    L = 10
    eh = chain.expected_hitting_time(example2_matrix(4 * L), [3])[4 * L]
    rows.append(OracleRow(f"expected hitting time from {4 * L} exceeds (9/8)^{L - 1}", float(eh),
                          (9 / 8) ** (L - 1), 0.0, "gt"))
    for pol in POLICIES:
        k = UniformSelectionKernel(EXAMPLE1_PROPOSAL, t1.log_target, pol)
        pu = chain.exact_stationary(uniform_selection_matrix(k, t1.states, truncate=True))
        rows.append(OracleRow(f"uniform selection ({pol}) TVD to target exceeds 0.05",
                              diagnostics.tvd(pu, t1.pi), 0.05, 0.0, "gt"))
    ens = TemperingEnsemble((1.0, 5.0), t4.log_target, EXAMPLE4_PROPOSAL, "jump", "modified", states=t4.states)
    rows.append(OracleRow("modified-swap phase stationarity", phase_stationarity(ens).max_error, 0.0, 1e-10))
    ens_s = TemperingEnsemble((1.0, 5.0), t4.log_target, EXAMPLE4_PROPOSAL, "jump", "standard", states=t4.states)
    rows.append(OracleRow("standard-swap phase TVD exceeds 0.01", phase_stationarity(ens_s).tvd, 0.01, 0.0, "gt"))
    boundary, _ = _boundary()
    vals, probs = exact_magnetization_distribution(IsingModel(4, boundary, 2.0))
    lookup = dict(zip(vals.tolist(), probs))
    rows.append(OracleRow(f"ising T=2 P[M=14] ({boundary})", round(float(lookup[14]), 2), 0.08, 1e-9))
    rows.append(OracleRow(f"ising T=2 P[M=2] ({boundary})", round(float(lookup[2]), 3), 0.037, 1e-9))
    return rows


def bayes_matrix() -> np.ndarray:
    model = BinomialPosterior.bundled()
    return independence_matrix(model.prior, model.log_target, model.states)


def format_oracle_table(rows: list[OracleRow]) -> str:
    width = max(len(r.name) for r in rows)
    lines = [f"{'check':<{width}}  {'value':>22}  {'expected':>22}  result"]
    for r in rows:
        exp = f"> {r.expected:.12g}" if r.comparison == "gt" else f"{r.expected:.12g}"
        lines.append(f"{r.name:<{width}}  {r.value:>22.15g}  {exp:>22}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)


def pseudo_marginal_toy(n_steps: int, seed: int) -> np.ndarray:
    """Empirical law of pseudo-marginal Metropolis on Example 1."""
    t = example1()
    fp = FiniteProposal(EXAMPLE1_PROPOSAL, t.log_target, t.states)
    path, _ = run_pseudo_marginal_finite(fp, GammaNoise(), 1, n_steps, stream(seed, "pm-toy"))
    return np.bincount(np.searchsorted(t.states, path[:-1]), minlength=3) / n_steps


__all__ = [
    "ExperimentConfig", "REGISTRY", "parse_config", "default_config", "with_param", "with_variants",
    "run_experiment", "oracle_rows", "format_oracle_table", "OracleRow", "example2_matrix",
    "bayes_matrix", "pseudo_marginal_toy", "PseudoMarginalTarget",
]
