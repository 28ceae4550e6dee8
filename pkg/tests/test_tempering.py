import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfmc.errors import ZeroDensity
from rfmc.metropolis import finite_kernel
from rfmc.models import example1, example4
from rfmc.models.toy import EXAMPLE1_PROPOSAL, EXAMPLE4_PROPOSAL
from rfmc.rng import stream
from rfmc.tempering import (TemperingEnsemble, estimate_alpha, modified_swap_probability, phase_stationarity,
                            product_target, run_tempering, standard_swap_probability, tempered)

E4 = example4()
one = lambda x: 1.0


def _ens(swap, sampler="jump", betas=(1.0, 5.0)):
    return TemperingEnsemble(betas, E4.log_target, EXAMPLE4_PROPOSAL, sampler, swap, states=E4.states)


def test_standard_swap_trivial_cases():
    assert standard_swap_probability(E4.log_target, 1, 5, 2, 2) == 1.0
    assert standard_swap_probability(E4.log_target, 2, 2, 1, 2) == 1.0


def test_standard_swap_example4_always_accepts():
    assert standard_swap_probability(E4.log_target, 1, 5, 2, 3) == 1.0
    assert standard_swap_probability(E4.log_target, 1, 5, 3, 2) == pytest.approx(2.0 ** -4)


def test_hot_target():
    p = np.exp(tempered(E4.log_target, 5.0)(np.array(E4.states)))
    assert np.allclose(p / p.sum(), [1 / 34, 32 / 34, 1 / 34])


def test_modified_swap_example4():
    ens = _ens("modified")
    a0, a5 = ens.alpha(0), ens.alpha(1)
    assert a0(2) == pytest.approx(1 / 2) and a5(2) == pytest.approx(1 / 32)
    assert a0(3) == pytest.approx(1.0) and a5(3) == pytest.approx(1.0)
    # alpha * pi^beta is uniform at both temperatures, so the swap is always accepted
    assert modified_swap_probability(E4.log_target, 1, 5, a0, a5, 2, 3) == pytest.approx(1.0)


def test_modified_swap_reduces_to_standard():
    for x1, x2 in [(1, 2), (2, 3), (3, 1), (2, 2)]:
        assert modified_swap_probability(E4.log_target, 1, 5, one, one, x1, x2) == pytest.approx(
            standard_swap_probability(E4.log_target, 1, 5, x1, x2))


def test_swap_zero_density():
    with pytest.raises(ZeroDensity):
        standard_swap_probability(example1().log_target, 1, 2, 1, 9)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([1, 2, 3]), st.sampled_from([1, 2, 3]), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_standard_swap_detailed_balance(x1, x2, b1, b2):
    lp = lambda x, b: b * float(E4.log_target([x])[0])
    fwd = math.exp(lp(x1, b1) + lp(x2, b2)) * standard_swap_probability(E4.log_target, b1, b2, x1, x2)
    bwd = math.exp(lp(x2, b1) + lp(x1, b2)) * standard_swap_probability(E4.log_target, b1, b2, x2, x1)
    assert fwd == pytest.approx(bwd, rel=1e-12)


def test_phase_stationarity():
    assert phase_stationarity(_ens("modified")).max_error < 1e-10
    assert phase_stationarity(_ens("standard")).tvd > 0.01
    assert phase_stationarity(_ens("standard", "metropolis")).max_error < 1e-10


def test_product_target_sums_to_one():
    assert product_target(_ens("modified")).sum() == pytest.approx(1.0)


def test_run_tempering_naive_and_modified():
    naive = run_tempering(_ens("standard"), (2, 2), 40_000, stream(1, "pt"))
    mod = run_tempering(_ens("modified"), (2, 2), 40_000, stream(1, "pt"))
    assert np.mean(naive.post_swap[:, 0] == 3) == pytest.approx(0.44, abs=0.02)
    assert np.mean(mod.post_swap[:, 0] == 3) == pytest.approx(1 / 3, abs=0.015)


def test_single_temperature_reduces_to_plain_run():
    ens = TemperingEnsemble((1.0,), example1().log_target, EXAMPLE1_PROPOSAL, states=example1().states)
    res = run_tempering(ens, (1,), 100_000, stream(2, "pt"))
    tr = res.traces[0]
    est = np.sum(tr.weights * (tr.states == 1)) / tr.weights.sum()
    assert est == pytest.approx(0.5, abs=0.01)
    assert len(res.swap_phase) == 0


def test_run_tempering_records(tmp_path):
    res = run_tempering(_ens("standard"), (2, 2), 100, stream(3, "pt"))
    assert res.post_swap.shape == (100, 2)
    assert res.pair_stats()[0]["proposed"] == 100
    res.write_swap_log(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("phase,pair,acceptance_prob,accepted")


def test_ensemble_validation():
    with pytest.raises(ValueError):
        _ens("bogus")
    with pytest.raises(ValueError):
        _ens("standard", betas=(1.0, 1.0))
    with pytest.raises(ValueError):
        TemperingEnsemble((1.0, 5.0), E4.log_target, EXAMPLE4_PROPOSAL, alpha_source="estimated")


def test_estimate_alpha():
    k = finite_kernel(EXAMPLE4_PROPOSAL, tempered(E4.log_target, 5.0), E4.states)
    est = estimate_alpha(k, E4.states, 2, 400_000, stream(4, "alpha"))
    exact = np.array([1.0, 1 / 32, 1.0])
    sig = est.binomial_sigma()
    assert abs(est.alpha[1] - 1 / 32) <= 2 * sig[1] + 1e-12
    assert est(1) == 1.0 and est(3) == 1.0
    assert np.allclose(est.alpha[[0, 2]], exact[[0, 2]])


def test_estimated_alpha_tables_in_ensemble():
    tables = []
    for b in (1.0, 5.0):
        k = finite_kernel(EXAMPLE4_PROPOSAL, tempered(E4.log_target, b), E4.states)
        tables.append(estimate_alpha(k, E4.states, 2, 200_000, stream(5, b)))
    ens = TemperingEnsemble((1.0, 5.0), E4.log_target, EXAMPLE4_PROPOSAL, "jump", "modified", states=E4.states,
                            alpha_source="estimated", alpha_tables=tuple(tables))
    assert ens.swap_probability(0, 2, 3) == pytest.approx(1.0, abs=0.05)
