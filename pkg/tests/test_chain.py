import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfmc import chain
from rfmc.chain import (MEAN, MULTIPLICITY, JumpKernel, MatrixKernel, WeightedTrace, escape_probability,
                        exact_stationary, hitting_probability, jump_matrix, jump_stationary_identity,
                        run_jump, run_original, sample_multiplicity, step_jump, to_matrix)
from rfmc.errors import DegenerateState, SingularSystem
from rfmc.metropolis import finite_jump_kernel, finite_kernel, metropolis_kernel
from rfmc.models import example1, example4
from rfmc.models.toy import EXAMPLE1_PROPOSAL, EXAMPLE4_PROPOSAL
from rfmc.rng import stream
from rfmc.tempering import tempered

E1 = example1()
P1 = np.array([[2 / 3, 1 / 3, 0], [1 / 2, 1 / 4, 1 / 4], [0, 1 / 2, 1 / 2]])


@pytest.fixture
def k1():
    return metropolis_kernel(EXAMPLE1_PROPOSAL, E1.log_target)


def _row(kernel, x):
    nb = kernel.neighbours(x)
    return dict(zip(map(int, nb), kernel.probabilities(x)))


@pytest.mark.parametrize("x, alpha", [(1, 1 / 3), (2, 3 / 4), (3, 1 / 2)])
def test_escape_probability_example1(k1, x, alpha):
    assert escape_probability(k1, x) == pytest.approx(alpha, abs=1e-15)


def test_escape_probability_example4_hot():
    t = example4()
    k = metropolis_kernel(EXAMPLE4_PROPOSAL, tempered(t.log_target, 5.0))
    assert escape_probability(k, 2) == pytest.approx(1 / 32, abs=1e-15)


def test_jump_transform_example1(k1):
    jk = chain.jump_transform(k1)
    nb, w, a = jk.jump_weights(2)
    p = dict(zip(map(int, nb), w / w.sum()))
    assert p[1] == pytest.approx(2 / 3)
    assert p[3] == pytest.approx(1 / 3)
    assert a == pytest.approx(3 / 4)


def test_jump_transform_of_rejection_free_kernel_is_identity():
    P = np.array([[0, 0.5, 0.5], [1, 0, 0], [0.25, 0.75, 0]])
    jk = JumpKernel(MatrixKernel(P))
    assert np.allclose(jump_matrix(P), P)
    assert jk.alpha(0) == 1.0


def test_jump_transform_example4_hot():
    t = example4()
    jk = finite_jump_kernel(EXAMPLE4_PROPOSAL, tempered(t.log_target, 5.0), t.states)
    assert np.allclose(jk.matrix()[1], [0.5, 0, 0.5])


def test_degenerate_state_raises():
    jk = JumpKernel(MatrixKernel(np.eye(2)))
    with pytest.raises(DegenerateState):
        jk.jump_weights(0)


def test_sample_multiplicity_alpha_one_is_one():
    rng = stream(1, "m")
    assert all(sample_multiplicity(1.0, rng) == 1 for _ in range(1000))


def test_sample_multiplicity_law():
    rng = stream(2, "m")
    m = chain.sample_multiplicities(0.75, 200_000, rng)
    assert np.mean(m == 1) == pytest.approx(3 / 4, abs=0.005)
    assert np.mean(m == 2) == pytest.approx(3 / 16, abs=0.005)


def test_sample_multiplicity_mean():
    m = chain.sample_multiplicities(1 / 32, 1_000_000, stream(3, "m"))
    assert m.mean() == pytest.approx(32, abs=0.5)


def test_step_jump_mode_mean(k1):
    jk = JumpKernel(k1)
    rng = stream(4, "s")
    assert step_jump(jk, 1, rng, MEAN) == (2, pytest.approx(3.0))
    draws = [step_jump(jk, 2, rng, MEAN) for _ in range(20_000)]
    assert all(w == pytest.approx(4 / 3) for _, w in draws)
    assert np.mean([y == 1 for y, _ in draws]) == pytest.approx(2 / 3, abs=0.015)


def test_step_jump_multiplicity_alpha_one():
    P = np.array([[0, 1.0], [1.0, 0]])
    jk = JumpKernel(MatrixKernel(P))
    rng = stream(5, "s")
    assert all(step_jump(jk, 0, rng, MULTIPLICITY)[1] == 1 for _ in range(100))


def test_step_jump_selectors_agree_in_law(k1):
    jk = JumpKernel(k1)
    rng = stream(6, "s")
    ys = [step_jump(jk, 2, rng, MEAN, selector="clocks")[0] for _ in range(20_000)]
    assert np.mean(np.array(ys) == 1) == pytest.approx(2 / 3, abs=0.015)


def test_run_original_zero_steps(k1):
    assert list(run_original(k1, 2, 0, stream(7))) == [2]


def test_run_original_occupation():
    fk = finite_kernel(EXAMPLE1_PROPOSAL, E1.log_target, E1.states)
    path = run_original(fk, 1, 1_000_000, stream(8))
    occ = np.bincount(path, minlength=4)[1:] / len(path)
    assert np.allclose(occ, E1.pi, atol=0.01)


def test_expanded_jump_trace_matches_original_law():
    jk = finite_jump_kernel(EXAMPLE1_PROPOSAL, E1.log_target, E1.states)
    tr = run_jump(jk, 1, 400_000, stream(9), MULTIPLICITY)
    path = tr.expand()[:1_000_000]
    n = len(path)
    occ = np.bincount(path, minlength=4)[1:] / n
    # generous sigma: consecutive states are correlated
    sigma = np.sqrt(E1.pi * (1 - E1.pi) / n) * 10
    assert np.all(np.abs(occ - E1.pi) < 3 * sigma)


def test_generic_and_compiled_paths_consume_rng_identically(k1):
    jk = JumpKernel(k1)
    fjk = finite_jump_kernel(EXAMPLE1_PROPOSAL, E1.log_target, E1.states)
    for mode in (MEAN, MULTIPLICITY):
        a = run_jump(jk, 2, 500, stream(10, mode), mode)
        b = run_jump(fjk, 2, 500, stream(10, mode), mode)
        assert np.array_equal(a.states, b.states)
        assert np.allclose(a.weights, b.weights)


def test_run_jump_to_returns_end_state():
    fjk = finite_jump_kernel(EXAMPLE1_PROPOSAL, E1.log_target, E1.states)
    tr, end = chain.run_jump_to(fjk, 1, 1, stream(11))
    assert list(tr.states) == [1] and end == 2


def test_weighted_trace_validation():
    with pytest.raises(ValueError):
        WeightedTrace([1, 2], [1.0], MEAN)
    with pytest.raises(ValueError):
        WeightedTrace([1], [1.0], "bogus")
    with pytest.raises(ValueError):
        WeightedTrace([1], [1.0], MEAN).expand()


def test_exact_stationary_example1(k1):
    P = to_matrix(k1, E1.states)
    assert np.allclose(P, P1, atol=1e-15)
    assert np.allclose(exact_stationary(P), [1 / 2, 1 / 3, 1 / 6], atol=1e-12)


def test_exact_stationary_two_state_symmetric():
    assert np.allclose(exact_stationary(np.array([[0.5, 0.5], [0.5, 0.5]])), [0.5, 0.5])


def test_exact_stationary_jump_chain_example1():
    pih = exact_stationary(jump_matrix(P1))
    assert np.allclose(pih, [1 / 3, 1 / 2, 1 / 6], atol=1e-12)
    assert np.allclose(pih, jump_stationary_identity(P1, E1.pi), atol=1e-12)


def test_exact_stationary_rejects_reducible():
    with pytest.raises(SingularSystem):
        exact_stationary(np.eye(3))


def test_hitting_probability_trivial_rows():
    P = np.array([[1, 0, 0], [0.5, 0, 0.5], [0, 0, 1]])
    h = hitting_probability(P, [2], [0])
    assert h[2] == 1.0 and h[0] == 0.0 and h[1] == pytest.approx(0.5)


def _random_chain(seed, n):
    rng = np.random.default_rng(seed)
    P = rng.random((n, n)) + 0.05
    P[np.arange(n), np.arange(n)] = rng.random(n)
    return P / P.sum(axis=1, keepdims=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 8))
def test_jump_identity_on_random_chains(seed, n):
    P = _random_chain(seed, n)
    pi = exact_stationary(P)
    assert np.allclose(pi @ P, pi, atol=1e-12)
    assert np.allclose(exact_stationary(jump_matrix(P)), jump_stationary_identity(P, pi), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 8))
def test_jump_matrix_rows_are_stochastic_with_zero_diagonal(seed, n):
    Pj = jump_matrix(_random_chain(seed, n))
    assert np.allclose(Pj.sum(axis=1), 1.0)
    assert np.all(np.diag(Pj) == 0)


def test_matrix_csv_writers(tmp_path):
    chain.write_matrix_csv(tmp_path / "m.csv", P1, [1, 2, 3])
    chain.write_vector_csv(tmp_path / "v.csv", E1.pi, [1, 2, 3])
    assert (tmp_path / "m.csv").read_text().splitlines()[0].startswith("state,")
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 4
