import numpy as np
import pytest
from hypothesis import given, strategies as st

from tabular_ail import (ConfigurationError, ImitationBudget, Policy, ResetCliffSpec, TabularMdp, build_random_mdp,
                         build_reset_cliff, compute_occupancy, evaluate_policy_direct, reset_cliff_expert,
                         run_mbtail, sample_trajectories)
from tabular_ail.abstraction import (BisimulationError, StateAbstraction, abstract_bc_policy, abstract_dataset,
                                     abstract_occupancy, build_abstract_mdp, check_bisimulation, k_duplicate,
                                     lift_policy, lift_table, rf_express_abstract, run_mbtail_abstract,
                                     transition_aware_estimator_abstract)
from tabular_ail.ail_opt import OptimizerConfig
from tabular_ail.envs import random_policy
from tabular_ail.estimators import mle_estimator, split_dataset, transition_aware_estimator, bc_policy
from tabular_ail.rfe import rf_express


def split_bisimilar(base: TabularMdp, sizes, rng):
    """Split base state x into ``sizes[x]`` copies with random within-block weights."""
    H, X, A = base.shape
    phi = np.repeat(np.arange(X), sizes)
    S = len(phi)
    weights = np.empty(S)
    for x in range(X):
        weights[phi == x] = rng.dirichlet(np.ones(sizes[x]))
    P = base.transitions[:, phi][:, :, :, phi] * weights
    rho = base.initial_dist[phi] * weights
    rewards = base.rewards[:, phi]
    return TabularMdp(P, rho, rewards), StateAbstraction(np.tile(phi, (H, 1)), X)


def bisimilar_fixture(seed, sizes=(3, 3, 2), A=2, H=3):
    rng = np.random.default_rng(seed)
    base = build_random_mdp(len(sizes), A, H, rng)
    big, abstraction = split_bisimilar(base, sizes, rng)
    abs_expert = Policy.deterministic(rng.integers(A, size=(H, len(sizes))), A)
    return base, big, abstraction, abs_expert


# --- abstraction objects -----------------------------------------------------

def test_abstraction_validation_and_json(tmp_path):
    with pytest.raises(ConfigurationError):
        StateAbstraction(np.array([[0, 2]]), 2)
    ab = StateAbstraction(np.array([[0, 1, 1], [1, 0, 0]]), 2)
    path = tmp_path / "abs.json"
    ab.save(path)
    assert path.read_text() == "[[0, 1, 1], [1, 0, 0]]"
    back = StateAbstraction.load(path)
    assert np.array_equal(back.maps, ab.maps) and back.num_abstract == 2


def test_non_surjective_map_rejected_when_building():
    mdp = build_random_mdp(3, 2, 2, 0)
    with pytest.raises(ConfigurationError):
        build_abstract_mdp(mdp, StateAbstraction(np.zeros((2, 3), dtype=int), 2))


# --- bisimulation checks -----------------------------------------------------

def test_identity_is_bisimulation():
    mdp = build_random_mdp(4, 2, 3, 0)
    expert = Policy.deterministic(np.zeros((3, 4), dtype=int), 2)
    assert check_bisimulation(mdp, expert, StateAbstraction.identity(3, 4)).ok


def test_reset_cliff_merging_two_regular_states():
    spec = ResetCliffSpec(5, 3, 4, 10)
    mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
    maps = np.tile(np.array([0, 0, 1, 2, 3]), (4, 1))
    report = check_bisimulation(mdp, expert, StateAbstraction(maps, 4))
    assert report.ok and report.violation is None


def test_merging_absorbing_with_rewarded_state_fails():
    spec = ResetCliffSpec(5, 3, 4, 10)
    mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
    maps = np.tile(np.array([0, 1, 2, 3, 3]), (4, 1))
    report = check_bisimulation(mdp, expert, StateAbstraction(maps, 4))
    assert not report.ok and "reward" in report.violation


def test_transition_and_expert_violations_reported():
    P = np.zeros((1, 2, 1, 2))
    P[0, 0, 0, 0] = 1.0
    P[0, 1, 0, 1] = 1.0
    mdp = TabularMdp(P, np.array([0.5, 0.5]), np.zeros((2, 2, 1)))
    merged = StateAbstraction(np.array([[0, 0], [0, 1]]), 2)
    report = check_bisimulation(mdp, Policy(np.ones((2, 2, 1))), merged)
    assert not report.ok and "transition" in report.violation
    mdp2 = TabularMdp(np.full((1, 2, 2, 2), 0.5), np.array([0.5, 0.5]), np.zeros((2, 2, 2)))
    expert = Policy.deterministic(np.array([[0, 1], [0, 0]]), 2)
    report = check_bisimulation(mdp2, expert, StateAbstraction(np.array([[0, 0], [0, 0]]), 1))
    assert not report.ok and "expert" in report.violation


def test_bisimulation_needs_deterministic_expert():
    mdp = build_random_mdp(2, 2, 2, 0)
    with pytest.raises(ConfigurationError):
        check_bisimulation(mdp, Policy.uniform(2, 2, 2), StateAbstraction.identity(2, 2))


@given(st.integers(0, 10 ** 6))
def test_split_fixture_is_bisimilar(seed):
    base, big, abstraction, abs_expert = bisimilar_fixture(seed)
    assert check_bisimulation(big, lift_policy(abs_expert, abstraction), abstraction).ok


# --- abstract MDP and lifting ------------------------------------------------

def test_identity_abstract_mdp_is_original():
    mdp = build_random_mdp(3, 2, 3, 1)
    abs_mdp = build_abstract_mdp(mdp, StateAbstraction.identity(3, 3))
    assert np.allclose(abs_mdp.transitions, mdp.transitions)
    assert np.allclose(abs_mdp.rewards, mdp.rewards)
    assert np.allclose(abs_mdp.initial_dist, mdp.initial_dist)


def test_single_block_horizon_one():
    mdp = build_random_mdp(4, 3, 1, 2)
    abs_mdp = build_abstract_mdp(mdp, StateAbstraction.constant(1, 4))
    assert np.allclose(abs_mdp.initial_dist, [1.0])
    assert np.array_equal(abs_mdp.rewards[0, 0], mdp.rewards[0, 0])


@given(st.integers(0, 10 ** 6))
def test_value_and_occupancy_lifting(seed):
    base, big, abstraction, _ = bisimilar_fixture(seed)
    abs_mdp = build_abstract_mdp(big, abstraction)
    assert np.allclose(abs_mdp.transitions, base.transitions, atol=1e-12)
    assert np.array_equal(lift_table(abs_mdp.rewards, abstraction), big.rewards)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        pi = random_policy(3, 2, 3, rng)
        lifted = lift_policy(pi, abstraction)
        assert evaluate_policy_direct(abs_mdp, pi) == pytest.approx(evaluate_policy_direct(big, lifted), abs=1e-8)
        assert np.allclose(abstract_occupancy(big, lifted, abstraction).values,
                           compute_occupancy(abs_mdp, pi).values, atol=1e-8)


def test_lift_policy_examples():
    pi = random_policy(3, 2, 2, 0)
    assert np.array_equal(lift_policy(pi, StateAbstraction.identity(2, 3)).probs, pi.probs)
    single = random_policy(1, 2, 2, 1)
    lifted = lift_policy(single, StateAbstraction.constant(2, 4))
    assert np.all(lifted.probs == single.probs[:, :1])
    ab = StateAbstraction(np.array([[1, 0, 1], [0, 0, 1]]), 2)
    pi2 = random_policy(2, 2, 2, 3)
    lifted = lift_policy(pi2, ab)
    for h in range(2):
        for x in range(2):
            assert np.array_equal(lifted.probs[h, ab.preimage(h, x)[0]], pi2.probs[h, x])


def test_abstract_occupancy_examples():
    mdp = build_random_mdp(3, 2, 3, 4)
    pi = random_policy(3, 2, 3, 5)
    d = compute_occupancy(mdp, pi).values
    assert np.allclose(abstract_occupancy(mdp, pi, StateAbstraction.identity(3, 3)).values, d)
    single = abstract_occupancy(mdp, pi, StateAbstraction.constant(3, 3)).values
    assert np.allclose(single[:, 0], d.sum(axis=1))


def test_lifted_abstract_expert_equals_concrete_expert():
    base = build_random_mdp(3, 2, 3, 6)
    abs_expert = Policy.deterministic(np.array([[0, 1, 1], [1, 0, 1], [0, 0, 1]]), 2)
    big, abstraction, big_expert = k_duplicate(base, 3, abs_expert)
    assert np.array_equal(lift_policy(abs_expert, abstraction).probs, big_expert.probs)


# --- abstract exploration and estimation -------------------------------------

def test_identity_abstract_rfe_matches_concrete():
    mdp = build_random_mdp(3, 2, 3, 7)
    a = rf_express(mdp, 0.5, 0.1, 150, rng_seed=3, bonus_scale=0.1)
    b = rf_express_abstract(mdp, StateAbstraction.identity(3, 3), 0.5, 0.1, 150, rng_seed=3, bonus_scale=0.1)
    assert np.array_equal(a.model.transition_counts, b.model.transition_counts)
    assert a.episodes_used == b.episodes_used


def test_single_abstract_state_stopping_is_independent_of_state_count():
    used = []
    for S in (5, 10, 20):
        mdp = build_random_mdp(S, 2, 2, S)
        result = rf_express_abstract(mdp, StateAbstraction.constant(2, S), 0.5, 0.1, 10 ** 6, rng_seed=0,
                                     bonus_scale=0.001)
        assert not result.stopped_early
        used.append(result.episodes_used)
    assert used[0] == used[1] == used[2]


def test_identity_abstract_estimator_matches_concrete():
    spec = ResetCliffSpec(6, 3, 4, 20)
    mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
    split = split_dataset(sample_trajectories(mdp, expert, 20, 0), 1)
    ab = StateAbstraction.identity(4, 6)
    rollouts = sample_trajectories(mdp, lift_policy(abstract_bc_policy(split.d1, ab, 3), ab), 50, 2)
    assert np.array_equal(bc_policy(split.d1, 6, 3, 4).probs, abstract_bc_policy(split.d1, ab, 3).probs)
    assert np.array_equal(transition_aware_estimator_abstract(split, rollouts, ab, 3).values,
                          transition_aware_estimator(split, rollouts, 4, 6, 3).values)


def test_abstract_estimator_empty_d1_is_abstract_mle():
    from tabular_ail.estimators import DatasetSplit
    from tabular_ail import TrajectoryDataset
    base, big, ab, abs_expert = bisimilar_fixture(3)
    expert = lift_policy(abs_expert, ab)
    d1c = sample_trajectories(big, expert, 8, 0)
    split = DatasetSplit(TrajectoryDataset.empty(3), d1c, np.array([], int), np.arange(8))
    rollouts = sample_trajectories(big, expert, 5, 1)
    est = transition_aware_estimator_abstract(split, rollouts, ab, 2)
    assert np.array_equal(est.values, mle_estimator(abstract_dataset(d1c, ab), 3, 3, 2).values)


def abstract_estimator_error(k, m, n_rollouts, seed):
    spec = ResetCliffSpec(6, 3, 6, 20)
    base, abs_expert = build_reset_cliff(spec), reset_cliff_expert(spec)
    big, ab, expert = k_duplicate(base, k, abs_expert)
    rng = np.random.default_rng(seed)
    split = split_dataset(sample_trajectories(big, expert, m, rng), rng)
    rollouts = sample_trajectories(big, lift_policy(abstract_bc_policy(split.d1, ab, 3), ab), n_rollouts, rng)
    est = transition_aware_estimator_abstract(split, rollouts, ab, 3).values
    return np.abs(est - compute_occupancy(base, abs_expert).values).sum()


def test_abstract_estimator_decays_like_one_over_m_with_quadratic_rollouts():
    # the rollout term needs n' of order m^2 for the 1/m rate; below m=100 the held-out term still dominates
    ms = [100, 200, 400]
    errs = [np.mean([abstract_estimator_error(2, m, m * m, s) for s in range(20)]) for m in ms]
    slope = np.polyfit(np.log(ms), np.log(errs), 1)[0]
    assert -1.2 <= slope <= -0.8


def test_abstract_estimator_error_independent_of_state_count():
    errs = [np.mean([abstract_estimator_error(k, 60, 600, s) for s in range(40)]) for k in (1, 2)]
    assert abs(errs[0] - errs[1]) <= 0.2 * min(errs)


# --- abstract MB-TAIL --------------------------------------------------------

def test_identity_abstract_mbtail_is_bitwise_equal():
    spec = ResetCliffSpec(6, 3, 5, 20)
    mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
    kw = dict(opt_cfg=OptimizerConfig(iterations=60), seed=4, bonus_scale=0.1)
    a = run_mbtail(mdp, expert, ImitationBudget(20, 300), **kw)
    b = run_mbtail_abstract(mdp, expert, StateAbstraction.identity(5, 6), ImitationBudget(20, 300), **kw)
    assert np.array_equal(a.policy.probs, b.policy.probs)
    assert a.imitation_gap == b.imitation_gap


def test_single_block_constant_reward_gap_is_zero():
    mdp = build_random_mdp(4, 2, 3, 0).with_rewards(np.full((3, 4, 2), 0.5))
    expert = Policy.deterministic(np.zeros((3, 4), dtype=int), 2)
    ab = StateAbstraction.constant(3, 4)
    result = run_mbtail_abstract(mdp, expert, ab, ImitationBudget(4, 50), opt_cfg=OptimizerConfig(iterations=10),
                                 seed=0, true_mdp=mdp)
    assert result.imitation_gap == pytest.approx(0.0, abs=1e-12)


def test_violated_bisimulation_is_a_hard_error():
    spec = ResetCliffSpec(5, 3, 4, 10)
    mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
    bad = StateAbstraction(np.tile(np.array([0, 1, 2, 3, 3]), (4, 1)), 4)
    with pytest.raises(BisimulationError):
        run_mbtail_abstract(mdp, expert, bad, ImitationBudget(10, 100), seed=0, true_mdp=mdp)


def test_abstraction_helps_on_duplicated_cliff():
    spec = ResetCliffSpec(4, 3, 6, 10)
    big, ab, expert = k_duplicate(build_reset_cliff(spec), 3, reset_cliff_expert(spec))
    budget = ImitationBudget(10, 300)
    cfg = OptimizerConfig(iterations=100)
    abs_gaps, conc_gaps = [], []
    for seed in range(20):
        conc_gaps.append(run_mbtail(big, expert, budget, opt_cfg=cfg, seed=seed, bonus_scale=0.1).imitation_gap)
        abs_gaps.append(run_mbtail_abstract(big, expert, ab, budget, opt_cfg=cfg, seed=seed, bonus_scale=0.1,
                                            true_mdp=big).imitation_gap)
    assert np.mean(abs_gaps) <= np.mean(conc_gaps)


def test_k_duplicate_shapes():
    base = build_random_mdp(3, 2, 4, 0)
    big, ab, none = k_duplicate(base, 2)
    assert big.shape == (4, 6, 2) and ab.num_abstract == 3 and none is None
    with pytest.raises(ConfigurationError):
        k_duplicate(base, 0)
