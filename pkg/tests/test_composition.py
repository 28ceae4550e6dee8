import numpy as np
import pytest

from rfmc.composition import (AlternationSchedule, BudgetState, alternating_stationary, budget_equivalence_check,
                              budgeted_alternating_run, naive_alternating_run, naive_alternation_limit,
                              original_matrix)
from rfmc.metropolis import finite_jump_kernel, rejection_free_metropolis
from rfmc.models import example1, example3
from rfmc.models.toy import EXAMPLE1_PROPOSAL, EXAMPLE3_PROPOSALS
from rfmc.rng import stream

ind1 = lambda s: float(s == 1)


def _e3(eps, finite=True):
    t = example3(eps)
    if finite:
        return t, [finite_jump_kernel(q, t.log_target, t.states) for q in EXAMPLE3_PROPOSALS]
    return t, [rejection_free_metropolis(q, t.log_target) for q in EXAMPLE3_PROPOSALS]


def test_schedule_validation():
    with pytest.raises(ValueError):
        AlternationSchedule((), ())
    with pytest.raises(ValueError):
        AlternationSchedule((None,), (0,))


def test_budget_state():
    b = BudgetState(5, 0)
    assert b.charge(3) == 3 and b.remaining == 2
    assert b.charge(9) == 2 and b.exhausted


def test_original_matrix_roundtrip():
    t = example1()
    jk = finite_jump_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states)
    assert np.allclose(original_matrix(jk), [[2 / 3, 1 / 3, 0], [1 / 2, 1 / 4, 1 / 4], [0, 1 / 2, 1 / 2]])


def test_naive_alternation_is_biased_at_small_eps():
    t, ks = _e3(0.001)
    r = naive_alternating_run(ks, 1, 200_000, stream(1, "n"), record=False)
    lim = naive_alternation_limit(ks, ind1)
    assert r.estimate(ind1) == pytest.approx(lim, abs=0.02)
    assert lim > t.pi[0] + 0.15


def test_naive_bias_vanishes_once_state_2_is_a_mode():
    t, ks = _e3(0.3)
    for j in (1, 2, 3, 4):
        h = lambda s, j=j: float(s == j)
        assert naive_alternation_limit(ks, h) == pytest.approx(t.pi[j - 1], abs=1e-12)


def test_naive_bias_at_moderate_eps_is_small_but_measurable():
    t, ks = _e3(0.2)
    bias = naive_alternation_limit(ks, ind1) - t.pi[0]
    assert 0.005 < bias < 0.02


def test_naive_limit_grows_as_eps_shrinks():
    lims = [naive_alternation_limit(_e3(e)[1], ind1) for e in (0.3, 0.1, 0.01, 0.001)]
    assert all(a < b for a, b in zip(lims, lims[1:]))


def test_single_kernel_alternation_is_consistent():
    t = example1()
    jk = finite_jump_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states)
    r = naive_alternating_run([jk], 1, 200_000, stream(2, "n"), record=False)
    assert r.estimate(ind1) == pytest.approx(0.5, abs=0.01)


def test_budgeted_is_unbiased():
    t, ks = _e3(0.001)
    r = budgeted_alternating_run(AlternationSchedule.uniform(ks, 10), 1, 100_000, stream(3, "b"))
    exact = alternating_stationary(ks, 10)[0]
    assert exact == pytest.approx(t.pi[0], abs=1e-12)
    assert r.estimate(ind1) == pytest.approx(exact, abs=0.01)


def test_budgeted_l0_one_records_single_unit_weights():
    _, ks = _e3(0.1)
    r = budgeted_alternating_run(AlternationSchedule.uniform(ks, 1), 1, 2000, stream(4, "b"), record=True)
    assert np.all(r.trace.weights == 1)
    assert np.array_equal(r.trace.labels["turn"], np.arange(len(r.trace)))


def test_budgeted_turn_weights_sum_to_l0():
    _, ks = _e3(0.01)
    r = budgeted_alternating_run(AlternationSchedule((ks[0], ks[1]), (7, 3)), 1, 3000, stream(5, "b"),
                                 record=True)
    sums = np.bincount(r.trace.labels["turn"], weights=r.trace.weights)
    kern = np.array([r.trace.labels["kernel"][r.trace.labels["turn"] == t][0] for t in range(len(sums))])
    assert np.all(sums[kern == 0] == 7) and np.all(sums[kern == 1] == 3)


@pytest.mark.parametrize("runner", ["naive", "budgeted"])
def test_generic_and_compiled_paths_agree(runner):
    _, fk = _e3(0.1)
    _, gk = _e3(0.1, finite=False)
    states = [1, 2, 3, 4]
    if runner == "naive":
        a = naive_alternating_run(fk, 1, 500, stream(6, runner))
        b = naive_alternating_run(gk, 1, 500, stream(6, runner), states=states)
    else:
        a = budgeted_alternating_run(AlternationSchedule.uniform(fk, 4), 1, 300, stream(6, runner), record=True)
        b = budgeted_alternating_run(AlternationSchedule.uniform(gk, 4), 1, 300, stream(6, runner), record=True,
                                     states=states)
    assert np.array_equal(a.trace.states, b.trace.states)
    assert np.allclose(a.trace.weights, b.trace.weights)
    assert np.allclose(a.occupation, b.occupation)


def test_equivalence_example1():
    t = example1()
    jk = finite_jump_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states)
    rep = budget_equivalence_check(jk, 5, 2, 400_000, stream(7, "eq"))
    assert rep.within_3sigma, rep.as_dict()


def test_equivalence_l0_one_is_one_step_row():
    t = example1()
    jk = finite_jump_kernel(EXAMPLE1_PROPOSAL, t.log_target, t.states)
    rep = budget_equivalence_check(jk, 1, 2, 200_000, stream(8, "eq"))
    assert np.allclose(rep.exact, [1 / 2, 1 / 4, 1 / 4])
    assert rep.within_3sigma


def test_equivalence_example3_l0_20():
    _, ks = _e3(0.001)
    rep = budget_equivalence_check(ks[0], 20, 1, 400_000, stream(9, "eq"))
    assert rep.within_3sigma, rep.as_dict()


def test_trace_csv(tmp_path):
    _, ks = _e3(0.1)
    r = budgeted_alternating_run(AlternationSchedule.uniform(ks, 3), 1, 10, stream(10), record=True)
    r.write_trace_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "turn,kernel_index,state,weight" and len(lines) == len(r.trace) + 1
    with pytest.raises(ValueError):
        budgeted_alternating_run(AlternationSchedule.uniform(ks, 3), 1, 10, stream(10)).write_trace_csv(tmp_path / "x")
