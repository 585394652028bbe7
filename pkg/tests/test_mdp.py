import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tabular_ail import (ConfigurationError, OccupancyMeasure, Policy, PolicyMixture, RewardWeights,
                         TabularMdp, Trajectory, TrajectoryDataset, build_random_mdp, compute_occupancy,
                         evaluate_policy_direct, l1_occupancy_distance, policy_value, sample_trajectories,
                         value_iteration)
from tabular_ail.envs import random_deterministic_policy, random_policy
from tabular_ail.mdp import SamplingEnv


def enumerate_occupancy(mdp, policy):
    """Weight every (s, a) sequence by its probability; no recursion shared with the library."""
    H, S, A = mdp.shape
    d = np.zeros((H, S, A))
    for seq in itertools.product(range(S * A), repeat=H):
        pairs = [divmod(x, A) for x in seq]
        p = mdp.initial_dist[pairs[0][0]]
        for h, (s, a) in enumerate(pairs):
            p *= policy.probs[h, s, a]
            if h + 1 < H:
                p *= mdp.transitions[h, s, a, pairs[h + 1][0]]
        for h, (s, a) in enumerate(pairs):
            d[h, s, a] += p
    return d


def small_mdps():
    return st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.integers(0, 10 ** 6))


# --- construction and validation ---------------------------------------------

def test_rejects_bad_rows():
    P = np.full((1, 2, 1, 2), 0.6)
    with pytest.raises(ConfigurationError):
        TabularMdp(P, np.array([0.5, 0.5]))


def test_renormalize_flag_is_explicit():
    P = np.full((1, 2, 1, 2), 0.6)
    mdp = TabularMdp(P, np.array([2.0, 2.0]), renormalize=True)
    assert np.allclose(mdp.transitions, 0.5)
    assert np.allclose(mdp.initial_dist, 0.5)


def test_rejects_rewards_outside_unit_interval():
    P = np.ones((1, 1, 1, 1))
    with pytest.raises(ConfigurationError):
        TabularMdp(P, np.ones(1), np.full((2, 1, 1), 1.5))


def test_arrays_are_read_only(chain_mdp):
    with pytest.raises(ValueError):
        chain_mdp.transitions[0, 0, 0, 0] = 0.5


def test_reward_weights_range():
    with pytest.raises(ConfigurationError):
        RewardWeights(np.full((1, 1, 1), 1.01))
    assert RewardWeights.zeros((2, 2, 2)).values.sum() == 0


def test_policy_dimension_mismatch(chain_mdp):
    with pytest.raises(ConfigurationError):
        compute_occupancy(chain_mdp, Policy.uniform(3, 2, 1))


def test_json_round_trip_is_bit_exact(tmp_path):
    P = np.zeros((2, 2, 2, 2))
    P[..., 0] = 0.25
    P[..., 1] = 0.75
    r = np.array([0.0, 0.5, 1.0, 0.125] * 3).reshape(3, 2, 2)
    mdp = TabularMdp(P, np.array([0.5, 0.5]), r)
    path = tmp_path / "m.json"
    mdp.save(path)
    back = TabularMdp.load(path)
    assert np.array_equal(back.transitions, mdp.transitions)
    assert np.array_equal(back.rewards, mdp.rewards)
    assert np.array_equal(back.initial_dist, mdp.initial_dist)
    assert set(mdp.to_dict()) == {"num_states", "num_actions", "horizon", "rho", "transitions", "rewards"}


@given(small_mdps())
def test_json_round_trip_random(dims):
    S, A, H, seed = dims
    mdp = build_random_mdp(S, A, H, seed)
    back = TabularMdp.from_json(mdp.to_json())
    assert np.array_equal(back.transitions, mdp.transitions)
    assert np.array_equal(back.rewards, mdp.rewards)


# --- occupancy ---------------------------------------------------------------

def test_degenerate_occupancy():
    mdp = TabularMdp(np.zeros((0, 1, 1, 1)), np.ones(1))
    d = compute_occupancy(mdp, Policy(np.ones((1, 1, 1))))
    assert d.values[0, 0, 0] == 1.0


def test_chain_occupancy(chain_mdp, single_action_policy):
    d = compute_occupancy(chain_mdp, single_action_policy).values
    assert d[1, 1, 0] == 1.0
    assert d[1, 0, 0] == 0.0


def test_occupancy_matches_enumeration_3x2x3():
    mdp = build_random_mdp(3, 2, 3, 11)
    pi = random_policy(3, 2, 3, 12)
    assert np.allclose(compute_occupancy(mdp, pi).values, enumerate_occupancy(mdp, pi), atol=1e-12)


@given(small_mdps())
def test_occupancy_layers_normalized(dims):
    S, A, H, seed = dims
    mdp = build_random_mdp(S, A, H, seed)
    d = compute_occupancy(mdp, random_policy(S, A, H, seed + 1)).values
    assert np.allclose(d.sum(axis=(1, 2)), 1.0, atol=1e-8)
    assert np.all(d >= 0)


def test_mixture_occupancy_is_weighted_average():
    mdp = build_random_mdp(3, 2, 3, 4)
    p1, p2 = random_policy(3, 2, 3, 5), random_policy(3, 2, 3, 6)
    mix = PolicyMixture((p1, p2), np.array([0.25, 0.75]))
    expected = 0.25 * compute_occupancy(mdp, p1).values + 0.75 * compute_occupancy(mdp, p2).values
    assert np.allclose(compute_occupancy(mdp, mix).values, expected)
    assert evaluate_policy_direct(mdp, mix) == pytest.approx(policy_value(compute_occupancy(mdp, mix), mdp.rewards))


def test_occupancy_flag_enforces_normalization():
    with pytest.raises(ConfigurationError):
        OccupancyMeasure(np.full((1, 2, 1), 0.4))
    assert OccupancyMeasure(np.full((1, 2, 1), 0.4), is_estimate=True).values.sum() == pytest.approx(0.8)


# --- values ------------------------------------------------------------------

def test_policy_value_zero_and_one_rewards():
    mdp = build_random_mdp(3, 2, 4, 0)
    occ = compute_occupancy(mdp, random_policy(3, 2, 4, 1))
    assert policy_value(occ, np.zeros((4, 3, 2))) == 0.0
    assert policy_value(occ, np.ones((4, 3, 2))) == pytest.approx(4.0, abs=1e-12)


def test_policy_value_shape_mismatch():
    occ = OccupancyMeasure(np.full((1, 1, 1), 1.0))
    with pytest.raises(ConfigurationError):
        policy_value(occ, np.zeros((2, 1, 1)))


def test_policy_value_matches_monte_carlo():
    mdp = build_random_mdp(3, 2, 3, 21)
    pi = random_policy(3, 2, 3, 22)
    data = sample_trajectories(mdp, pi, 10 ** 6, 23)
    steps = np.arange(3)
    returns = mdp.rewards[steps[None, :], data.states, data.actions].sum(axis=1)
    se = returns.std() / np.sqrt(len(returns))
    assert abs(returns.mean() - policy_value(compute_occupancy(mdp, pi), mdp.rewards)) <= 3 * se


def test_direct_evaluation_examples(chain_mdp, single_action_policy):
    assert evaluate_policy_direct(chain_mdp, single_action_policy) == 1.0
    mdp = TabularMdp(np.zeros((0, 2, 1, 2)), np.array([0.5, 0.5]), np.array([[[0.0], [1.0]]]))
    assert evaluate_policy_direct(mdp, Policy(np.ones((1, 2, 1)))) == 0.5


@given(small_mdps())
def test_dual_equivalence(dims):
    S, A, H, seed = dims
    mdp = build_random_mdp(S, A, H, seed)
    pi = random_policy(S, A, H, seed + 7)
    r = np.random.default_rng(seed).uniform(-1, 1, size=(H, S, A))
    assert policy_value(compute_occupancy(mdp, pi), r) == pytest.approx(evaluate_policy_direct(mdp, pi, r), abs=1e-8)


def test_value_iteration_zero_rewards_picks_lowest_action():
    mdp = build_random_mdp(3, 3, 3, 2)
    pi, value = value_iteration(mdp, np.zeros((3, 3, 3)))
    assert value == 0.0
    assert np.all(pi.greedy_actions() == 0)


def test_value_iteration_matches_enumeration_2x2x2():
    mdp = build_random_mdp(2, 2, 2, 31)
    best = max(evaluate_policy_direct(mdp, Policy.deterministic(np.array(c).reshape(2, 2), 2))
               for c in itertools.product(range(2), repeat=4))
    pi, value = value_iteration(mdp)
    assert value == pytest.approx(best, abs=1e-12)
    assert pi.is_deterministic
    assert evaluate_policy_direct(mdp, pi) == pytest.approx(value, abs=1e-12)


@given(small_mdps())
def test_value_iteration_dominates_random_policies(dims):
    S, A, H, seed = dims
    mdp = build_random_mdp(S, A, H, seed)
    r = np.random.default_rng(seed).uniform(-1, 1, size=(H, S, A))
    _, value = value_iteration(mdp, r)
    rng = np.random.default_rng(seed + 1)
    for _ in range(10):
        assert value >= evaluate_policy_direct(mdp, random_policy(S, A, H, rng), r) - 1e-9
        assert value >= evaluate_policy_direct(mdp, random_deterministic_policy(S, A, H, rng), r) - 1e-9


# --- sampling ----------------------------------------------------------------

def test_sample_zero_count():
    mdp = build_random_mdp(2, 2, 2, 0)
    assert len(sample_trajectories(mdp, Policy.uniform(2, 2, 2), 0, 1)) == 0


def test_deterministic_sampling_gives_identical_trajectories(chain_mdp, single_action_policy):
    data = sample_trajectories(chain_mdp, single_action_policy, 50, 3)
    assert np.all(data.states == data.states[0])
    assert data[0].steps == [(0, 0), (1, 0)]


def test_sampling_frequencies_match_occupancy():
    mdp = build_random_mdp(3, 2, 3, 41)
    pi = random_policy(3, 2, 3, 42)
    n = 10 ** 5
    freq = sample_trajectories(mdp, pi, n, 43).state_action_counts(3, 2) / n
    d = compute_occupancy(mdp, pi).values
    se = np.sqrt(d * (1 - d) / n)
    assert np.all(np.abs(freq - d) <= 5 * se + 1e-12)


def test_sampling_is_deterministic_given_seed():
    mdp = build_random_mdp(4, 2, 5, 0)
    pi = random_policy(4, 2, 5, 1)
    a, b = sample_trajectories(mdp, pi, 30, 9), sample_trajectories(mdp, pi, 30, 9)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)


def test_sampling_env_counts_only_rollouts():
    mdp = build_random_mdp(3, 2, 3, 0)
    env = SamplingEnv(mdp)
    pi = Policy.uniform(3, 3, 2)
    rng = np.random.default_rng(0)
    env.demonstrations(pi, 10, rng)
    assert env.episodes == 0
    env.rollout(pi, 7, rng)
    env.rollout_greedy(np.zeros((3, 3), dtype=int), rng)
    assert env.episodes == 8


def test_greedy_rollout_follows_kernel():
    mdp = build_random_mdp(3, 2, 2, 5)
    env = SamplingEnv(mdp)
    rng = np.random.default_rng(1)
    n = 20000
    actions = np.ones((2, 3), dtype=int)
    firsts = np.array([env.rollout_greedy(actions, rng)[0][0] for _ in range(n)])
    freq = np.bincount(firsts, minlength=3) / n
    se = np.sqrt(mdp.initial_dist * (1 - mdp.initial_dist) / n)
    assert np.all(np.abs(freq - mdp.initial_dist) <= 5 * se + 1e-12)


# --- datasets and distances --------------------------------------------------

def test_dataset_helpers():
    t1 = Trajectory(np.array([0, 1]), np.array([1, 0]))
    t2 = Trajectory(np.array([1, 1]), np.array([0, 0]))
    data = TrajectoryDataset.from_trajectories([t1, t2], 2)
    assert len(data) == 2 and data.horizon == 2
    assert data.subset([1])[0].steps == [(1, 0), (1, 0)]
    assert len(data.concat(data)) == 4
    assert data[0].prefix(1).steps == [(0, 1)]
    with pytest.raises(ConfigurationError):
        data.validate(1, 2)
    assert len(TrajectoryDataset.from_trajectories([], 3)) == 0


def test_l1_distance_examples():
    a = np.array([[[0.5], [0.5]]])
    b = np.array([[[0.3], [0.7]]])
    assert l1_occupancy_distance(a, a) == 0.0
    assert l1_occupancy_distance(a, b) == pytest.approx(0.4)
    with pytest.raises(ConfigurationError):
        l1_occupancy_distance(a, np.zeros((2, 2, 1)))


@given(small_mdps())
def test_l1_distance_bounds_and_symmetry(dims):
    S, A, H, seed = dims
    mdp = build_random_mdp(S, A, H, seed)
    d1 = compute_occupancy(mdp, random_policy(S, A, H, seed + 1))
    d2 = compute_occupancy(mdp, random_policy(S, A, H, seed + 2))
    dist = l1_occupancy_distance(d1, d2)
    assert 0.0 <= dist <= 2 * H + 1e-12
    assert dist == l1_occupancy_distance(d2, d1)
