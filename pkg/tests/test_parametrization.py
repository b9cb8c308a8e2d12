import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brunovsky.bench import generate_system
from brunovsky.core import HypothesisViolated, ParameterSet, ShapeMismatch, SingularD, StaircasePair, brunovsky_target
from brunovsky.deadbeat import apply_predeadbeat, deadbeat_gain_staircase
from brunovsky.parametrization import (
    build_observation_matrix,
    build_transformations,
    chain_matrices,
    check_rank_constraints,
    default_parameters,
    decoupling_factors,
    factored_invertibility,
    stacked_factor_matrix,
    random_parameters,
    rank_constraints_satisfied,
)
from brunovsky.pipeline import proposed_pipeline
from brunovsky.staircase import index_summary, indices_from_mu, reduce_to_staircase
from helpers import target_system
from oracles import factor_instance, factor_pieces, relative_sigma_min, stacked_product

EPS = np.finfo(float).eps
MU_CHOICES = [(5, 5, 3, 2), (4, 4, 2, 2, 2, 1), (3, 1), (2, 2), (4,), (3, 2, 2, 1, 1)]


def staircase_of(mu, seed, cond=10.0):
    sys, truth = generate_system(mu, cond, seed, mode="transform")
    stair = reduce_to_staircase(sys)
    return sys, stair, index_summary(stair)


def three_state_params():
    return ParameterSet(
        (np.array([[1.0]]), np.array([[0.0, 1.0]])),
        (np.zeros((1, 0)), np.array([[0.0]])),
    )


# observation matrix


def test_three_state_observation(three_state):
    stair, idx = three_state
    obs = build_observation_matrix(three_state_params(), idx, stair)
    np.testing.assert_array_equal(obs.C, [[0, 0, 1], [0, 1, 0]])


def test_equal_indices_observation():
    idx = indices_from_mu([3, 3])
    S = np.array([[1.0, 2.0], [3.0, 4.0]])
    obs = build_observation_matrix(ParameterSet((S,), (np.zeros((2, 0)),)), idx)
    np.testing.assert_array_equal(obs.C[:, :4], 0.0)
    np.testing.assert_array_equal(obs.C[:, 4:], S)


def test_mixed_index_shapes():
    idx = indices_from_mu([4, 4, 2, 2, 2, 1])
    params = random_parameters(idx, 0)
    assert [s.shape for s in params.S_r] == [(2, 2), (3, 5), (1, 6)]
    assert [s.shape for s in params.S_f] == [(2, 0), (3, 4), (1, 9)]
    obs = build_observation_matrix(params, idx)
    assert idx.zero_prefix_widths == (13, 6, 0)
    assert not obs.group(0)[:, :13].any()
    assert not obs.group(1)[:, :6].any()
    np.testing.assert_array_equal(obs.group(1)[:, 6:11], params.S_r[1])
    np.testing.assert_array_equal(obs.group(1)[:, 11:], params.S_f[1])
    np.testing.assert_array_equal(obs.group(2)[:, 6:], params.S_f[2])
    assert params.size == idx.n_rank + idx.n_free == 46


def test_shape_mismatch():
    idx = indices_from_mu([2, 1])
    bad = ParameterSet((np.eye(2), np.eye(1)), (np.zeros((1, 0)), np.zeros((1, 1))))
    with pytest.raises(ShapeMismatch):
        build_observation_matrix(bad, idx)


# rank constraints


def test_default_parameters_pass(three_state):
    stair, idx = three_state
    params = default_parameters(stair, idx)
    np.testing.assert_array_equal(params.S_r[0], [[1.0]])
    np.testing.assert_allclose(np.abs(params.S_r[1]), [[0.0, 1.0]], atol=1e-15)
    np.testing.assert_array_equal(params.S_f[1], [[0.0]])
    assert np.all(check_rank_constraints(params, stair, idx) > 0)


def test_equal_indices_default_is_identity():
    _, stair, idx = staircase_of((3, 3, 3), 0)
    params = default_parameters(stair, idx)
    assert idx.g == 1
    np.testing.assert_array_equal(params.S_r[0], np.eye(3))
    assert params.S_f[0].shape == (3, 0)


@pytest.mark.parametrize("mu", MU_CHOICES)
def test_default_parameters_sigma_bound(mu):
    for seed in range(5):
        _, stair, idx = staircase_of(mu, seed)
        params = default_parameters(stair, idx)
        sig = check_rank_constraints(params, stair, idx)
        assert sig[0] >= 1 - 1e-12
        for j in range(1, idx.g):
            k = idx.distinct[j]
            s_block = np.linalg.svd(stair.block(k + 1, k), compute_uv=False)[-1]
            assert sig[j] >= min(1.0, s_block) * (1 - 1e-12)
        assert rank_constraints_satisfied(params, stair, idx)


def test_zero_leading_block_violates(three_state):
    stair, idx = three_state
    params = ParameterSet((np.zeros((1, 1)), np.array([[0.0, 1.0]])), (np.zeros((1, 0)), np.zeros((1, 1))))
    sig = check_rank_constraints(params, stair, idx)
    assert sig[0] == 0.0
    assert not rank_constraints_satisfied(params, stair, idx)
    with pytest.raises(SingularD):
        build_transformations(params, stair.A_s, stair.B_s, idx)


def test_gaussian_parameters_against_determinant():
    rng = np.random.default_rng(11)
    agree = 0
    for trial in range(1000):
        mu = [(2, 2, 1, 1, 1), (3, 2, 2, 1, 1), (2, 1, 1, 1, 1), (1, 1, 1, 1, 1)][trial % 4]
        sys, _ = generate_system(mu, 10.0, rng, mode="transform")
        stair = reduce_to_staircase(sys)
        idx = index_summary(stair)
        params = random_parameters(idx, rng)
        D = chain_matrices(params, stair.A_s, stair.B_s, idx).D
        assert D.shape == (5, 5)
        det_ok = abs(np.linalg.det(D)) > 1e-10 * np.prod(np.linalg.norm(D, axis=1))
        structural = rank_constraints_satisfied(params, stair, idx)
        agree += det_ok == structural
        assert structural
    assert agree == 1000


# factored invertibility


def test_factored_single_factor():
    A1 = np.array([[2.0, 1.0], [0.0, 1.0]])
    assert factored_invertibility([np.eye(2)], [A1])
    assert not factored_invertibility([np.array([[1.0, 1.0], [2.0, 2.0]])], [A1])


def test_factored_three_state(three_state):
    stair, idx = three_state
    S_blocks, A_blocks = decoupling_factors(three_state_params(), stair, idx)
    D = stacked_factor_matrix(S_blocks, A_blocks)
    D_direct = chain_matrices(three_state_params(), stair.A_s, stair.B_s, idx).D
    np.testing.assert_array_equal(D, np.eye(2))
    np.testing.assert_array_equal(D_direct, np.eye(2))
    assert factored_invertibility(S_blocks, A_blocks)


def test_stacked_factor_matrix_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        S, A, D, _ = factor_instance(rng)
        np.testing.assert_array_equal(stacked_factor_matrix(S, A), stacked_product(S, A))


def test_factored_exact_oracle():
    rng = np.random.default_rng(2024)
    done = invertible = 0
    while done < 1000:
        S, A, D, det = factor_instance(rng)
        rel = [relative_sigma_min(M) for M in factor_pieces(S, A)] + [relative_sigma_min(D)]
        if any(1e-10 <= v <= 1e-6 for v in rel):
            continue
        assert factored_invertibility(S, A) == (det != 0)
        done += 1
        invertible += det != 0
    assert 100 < invertible < 900


@given(st.integers(0, 2**32 - 1))
def test_factored_gaussian(seed):
    rng = np.random.default_rng(seed)
    S, A, _, _ = factor_instance(rng)
    S = [rng.standard_normal(s.shape) for s in S]
    A = [a + 0.1 * rng.standard_normal(a.shape) for a in A]
    D = stacked_product(S, A)
    assert factored_invertibility(S, A) == (relative_sigma_min(D) > 1e-10)


def test_factored_agrees_with_parametrized_D():
    for seed in range(10):
        _, stair, idx = staircase_of((5, 5, 3, 2), seed)
        params = random_parameters(idx, seed)
        S_blocks, A_blocks = decoupling_factors(params, stair, idx)
        D = chain_matrices(params, stair.A_s, stair.B_s, idx).D
        np.testing.assert_allclose(stacked_factor_matrix(S_blocks, A_blocks), D, rtol=1e-12, atol=1e-12 * np.abs(D).max())
        assert factored_invertibility(S_blocks, A_blocks) == rank_constraints_satisfied(params, stair, idx)


def test_factored_hypotheses():
    with pytest.raises(HypothesisViolated):
        factored_invertibility([np.eye(2)], [np.ones((2, 2))])
    with pytest.raises(HypothesisViolated):
        factored_invertibility([np.eye(1)], [np.eye(2)])
    with pytest.raises(HypothesisViolated):
        factored_invertibility([], [])


# transformation assembly


def test_three_state_triple(three_state):
    stair, idx = three_state
    triple = build_transformations(three_state_params(), stair.A_s, stair.B_s, idx)
    np.testing.assert_array_equal(triple.T, [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(triple.G, np.eye(2))
    np.testing.assert_array_equal(triple.F, np.zeros((2, 3)))
    assert triple.diagnostics["residual_A"] == 0.0 and triple.diagnostics["residual_B"] == 0.0


def test_equal_indices_D_is_stair_product():
    _, stair, idx = staircase_of((3, 3), 1)
    params = ParameterSet((np.eye(2),), (np.zeros((2, 0)),))
    D = chain_matrices(params, stair.A_s, stair.B_s, idx).D
    product = stair.block(3, 2) @ stair.block(2, 1) @ stair.block(1, 0)
    np.testing.assert_allclose(D, product, atol=1e-13)


@pytest.mark.parametrize("mu", [(2, 1), (3,), (5, 5, 3, 2), (1, 1, 1)])
def test_pipeline_fixed_point(mu):
    sys = target_system(mu)
    res = proposed_pipeline(sys)
    target = brunovsky_target(mu)
    d = res.triple.diagnostics
    assert d["residual_A"] <= 1e-12 and d["residual_B"] <= 1e-12
    T = res.triple.T
    np.testing.assert_allclose(np.linalg.solve(T.T, (T @ (sys.A + sys.B @ res.triple.F)).T).T, target.A_b, atol=1e-12)


@pytest.mark.parametrize("mu", MU_CHOICES)
def test_structural_zeros_exact(mu):
    for seed in range(3):
        _, stair, idx = staircase_of(mu, seed)
        params = random_parameters(idx, seed)
        obs = build_observation_matrix(params, idx)
        for j, k in enumerate(idx.distinct):
            R = obs.group(j)
            for i in range(k - 1):
                assert not (R @ stair.B_s).any(), (j, i)
                R = R @ stair.A_s


@pytest.mark.parametrize("mu", MU_CHOICES)
def test_G_inverts_D(mu):
    for seed in range(3):
        _, stair, idx = staircase_of(mu, seed)
        params = random_parameters(idx, seed + 100)
        triple = build_transformations(params, stair.A_s, stair.B_s, idx)
        D = chain_matrices(params, stair.A_s, stair.B_s, idx).D
        m = idx.m
        assert np.linalg.norm(triple.G @ D - np.eye(m)) <= 10 * m * EPS * np.linalg.cond(D) * 10


@given(st.sampled_from(MU_CHOICES), st.integers(0, 2**32 - 1))
def test_D_ignores_free_blocks(mu, seed):
    rng = np.random.default_rng(seed)
    _, stair, idx = staircase_of(mu, seed % 1000)
    params = random_parameters(idx, rng)
    perturbed = ParameterSet(params.S_r, tuple(s + rng.standard_normal(s.shape) for s in params.S_f))
    D1 = chain_matrices(params, stair.A_s, stair.B_s, idx).D
    D2 = chain_matrices(perturbed, stair.A_s, stair.B_s, idx).D
    assert np.array_equal(D1, D2)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@given(st.sampled_from(MU_CHOICES), st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(mu, seed, a, b):
    rng = np.random.default_rng(seed)
    _, stair, idx = staircase_of(mu, seed % 1000)
    P1, P2 = random_parameters(idx, rng), random_parameters(idx, rng)
    c1 = chain_matrices(P1, stair.A_s, stair.B_s, idx)
    c2 = chain_matrices(P2, stair.A_s, stair.B_s, idx)
    c = chain_matrices(P1.combine(a, P2, b), stair.A_s, stair.B_s, idx)
    for name in ("T", "D", "C_star"):
        lin = a * getattr(c1, name) + b * getattr(c2, name)
        scale = abs(a) * np.linalg.norm(getattr(c1, name)) + abs(b) * np.linalg.norm(getattr(c2, name))
        assert np.linalg.norm(getattr(c, name) - lin) <= 1e-9 * max(scale, 1e-300)


@pytest.mark.parametrize("mu", MU_CHOICES)
def test_feedback_without_preprocessing_is_nilpotent(mu):
    for seed in range(3):
        _, stair, idx = staircase_of(mu, seed)
        triple = build_transformations(default_parameters(stair, idx), stair.A_s, stair.B_s, idx)
        Acl = stair.A_s + stair.B_s @ triple.F
        power = np.linalg.matrix_power(Acl, idx.mu_max)
        assert np.linalg.norm(power) <= 1e-8 * max(1.0, np.linalg.norm(stair.A_s) ** (idx.mu_max - 1))


@pytest.mark.parametrize("cond", [1e2, 1e6, 1e10])
def test_residual_contract_on_preprocessed_pair(cond):
    for seed in range(5):
        sys, _ = generate_system((5, 5, 3, 2), cond, seed)
        stair = reduce_to_staircase(sys)
        idx = index_summary(stair)
        work = apply_predeadbeat(stair, deadbeat_gain_staircase(stair, idx))
        triple = build_transformations(random_parameters(idx, seed), work.A_s, work.B_s, idx)
        d = triple.diagnostics
        assert d["residual_A"] <= 1e-8 * np.linalg.norm(work.A_s) * d["kappa_T"]


def test_ground_truth_chain_starts_lie_in_family():
    # empirical check of the converse: chain-start rows of any Brunovsky T are admissible observation rows
    for seed in range(10):
        sys, truth = generate_system((4, 4, 2, 2, 2, 1), 10.0, seed, mode="transform")
        stair = reduce_to_staircase(sys)
        idx = index_summary(stair)
        T_s = truth.T @ stair.U.T
        starts = np.concatenate([[0], np.cumsum(idx.mu)[:-1]])
        C = T_s[starts]
        row = 0
        for k, eps_k, width in zip(idx.distinct, idx.multiplicities, idx.zero_prefix_widths):
            block = C[row : row + eps_k]
            assert np.linalg.norm(block[:, :width]) <= 1e-10 * np.linalg.norm(block)
            row += eps_k
