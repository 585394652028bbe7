"""Imitation algorithms behind one calling convention.

Every algorithm is called as ``algo(env, expert, budget, seed=..., **params)``
and returns an :class:`ImitationResult`. ``env`` is a :class:`SamplingEnv`:
learners only sample from it, and the exact value handle is used for the
reported gap alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ail_opt import OptimizerConfig, diameter, solve_matching
from .estimators import (bc_policy, holdout_term, mle_estimator, rollout_term,
                         split_dataset, visited_states)
from .mdp import (ConfigurationError, OccupancyMeasure, Policy, PolicyMixture, SamplingEnv,
                  TabularMdp, TrajectoryDataset, as_env, evaluate_policy_direct, occupancy_table)
from .rfe import EmpiricalModel, rf_express


@dataclass(frozen=True)
class ImitationBudget:
    """Expert trajectories ``m`` and environment episodes.

    ``rfe_fraction`` of the interactions goes to reward-free exploration,
    the rest to estimator rollouts.
    """

    m: int
    interactions: int = 0
    rfe_fraction: float = 0.8

    def __post_init__(self):
        if self.m < 1 or self.interactions < 0 or not 0 <= self.rfe_fraction <= 1:
            raise ConfigurationError(f"invalid budget {self}")

    @property
    def exploration_episodes(self) -> int:
        return int(math.floor(self.rfe_fraction * self.interactions))

    @property
    def rollout_episodes(self) -> int:
        return self.interactions - self.exploration_episodes


@dataclass(eq=False)
class ImitationResult:
    policy: Policy | PolicyMixture
    imitation_gap: float
    interactions_used: int
    diagnostics: dict = field(default_factory=dict)


def imitation_gap(true_mdp: TabularMdp, expert, learned) -> float:
    """``V^expert - V^learned`` under the true dynamics and rewards."""
    return evaluate_policy_direct(true_mdp, expert) - evaluate_policy_direct(true_mdp, learned)


def _streams(seed, count: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


def _result(env: SamplingEnv, expert, policy, used: int, **diagnostics) -> ImitationResult:
    gap = env.exact_value(expert) - env.exact_value(policy)
    return ImitationResult(policy, gap, used, diagnostics)


def _demos(env: SamplingEnv, expert, m: int, stream, demonstrations) -> TrajectoryDataset:
    if demonstrations is not None:
        if len(demonstrations) != m:
            raise ConfigurationError(f"expected {m} demonstrations, got {len(demonstrations)}")
        return demonstrations
    return env.demonstrations(expert, m, np.random.default_rng(stream))


def run_bc(env, expert: Policy, budget: ImitationBudget, seed=None, demonstrations=None) -> ImitationResult:
    """Behavioral cloning on all m demonstrations; no environment interaction."""
    env = as_env(env)
    expert_stream, = _streams(seed, 1)
    data = _demos(env, expert, budget.m, expert_stream, demonstrations)
    policy = bc_policy(data, env.num_states, env.num_actions, env.horizon)
    return _result(env, expert, policy, 0, demonstrations=data)


def _pipeline_streams(seed):
    expert, rfe, split, rollout = _streams(seed, 4)
    return expert, rfe, split, rollout


def run_mbtail(env, expert: Policy, budget: ImitationBudget, epsilon: float = 0.1, delta: float = 0.1,
               opt_cfg: OptimizerConfig | None = None, seed=None, demonstrations=None,
               bonus_scale: float | None = None, inflation: float | None = None,
               transition_model: TabularMdp | None = None) -> ImitationResult:
    """Reward-free exploration, transition-aware estimation, then saddle-point matching.

    ``transition_model`` short-circuits exploration with a given model (the
    known-transition ablation); no exploration episodes are spent then.
    """
    env = as_env(env)
    if budget.m < 2 or budget.m % 2:
        raise ConfigurationError("MB-TAIL needs an even number (>= 2) of expert trajectories")
    H, S, A = env.shape
    expert_stream, rfe_stream, split_stream, rollout_stream = _pipeline_streams(seed)
    data = _demos(env, expert, budget.m, expert_stream, demonstrations)
    start = env.episodes

    if transition_model is None:
        rfe = rf_express(env, epsilon, delta, budget.exploration_episodes, rfe_stream, bonus_scale, inflation)
        model, explored, stopped_early = rfe.model.to_mdp(), rfe.episodes_used, rfe.stopped_early
    else:
        rfe = None
        model, explored, stopped_early = transition_model.without_rewards(), 0, False

    split = split_dataset(data, split_stream)
    bc = bc_policy(split.d1, S, A, H)
    rollouts = env.rollout(bc, budget.rollout_episodes, np.random.default_rng(rollout_stream))
    visited = visited_states(split.d1, S)
    target = OccupancyMeasure(rollout_term(rollouts, visited, S, A) + holdout_term(split.d1c, visited, S, A),
                              is_estimate=True)

    policy, trace = solve_matching(model, target, opt_cfg)
    used = env.episodes - start
    return _result(env, expert, policy, used, model=model, rfe=rfe, target=target, trace=trace,
                   exploration_episodes=explored, rollout_episodes=len(rollouts),
                   rfe_stopped_early=stopped_early, split=split, demonstrations=data)


def oal_bonus(counts: np.ndarray, total_interactions: int, delta: float) -> np.ndarray:
    """``sqrt(log(H|S||A| n / delta) / max(n_h(s,a), 1))``."""
    H, S, A = counts.shape
    return np.sqrt(math.log(H * S * A * max(total_interactions, 1) / delta) / np.maximum(counts, 1))


def _optimistic_q(P: np.ndarray, pi: np.ndarray, reward: np.ndarray) -> np.ndarray:
    H, S, A = pi.shape
    Q = np.empty((H, S, A))
    v_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        q = reward[h] if h == H - 1 else reward[h] + P[h] @ v_next
        cap = H - h
        Q[h] = np.clip(q, -cap, cap)
        v_next = np.sum(pi[h] * Q[h], axis=1)
    return Q


def run_oal(env, expert: Policy, budget: ImitationBudget, delta: float = 0.1, iterations: int = 500,
            seed=None, demonstrations=None) -> ImitationResult:
    """Optimistic online AIL baseline.

    Each iteration rolls out the current policy, refits the empirical model,
    takes a projected gradient step on the reward against the MLE target, and
    a multiplicative-weights step on the policy using bonus-inflated Q values.
    The output is the uniform mixture of the played policies.
    """
    env = as_env(env)
    H, S, A = env.shape
    expert_stream, online_stream = _streams(seed, 2)
    data = _demos(env, expert, budget.m, expert_stream, demonstrations)
    target = mle_estimator(data, H, S, A).values
    n_total = budget.interactions
    K = min(iterations, n_total)
    start = env.episodes
    if K == 0:
        return _result(env, expert, Policy.uniform(H, S, A), 0, iterations=0, demonstrations=data)

    rng = np.random.default_rng(online_stream)
    sizes = np.full(K, n_total // K)
    sizes[: n_total % K] += 1
    eta_pi = math.sqrt(2 * math.log(A) / K)
    D = diameter(H, S, A)

    logits = np.zeros((H, S, A))
    pi = np.full((H, S, A), 1.0 / A)
    w = np.zeros((H, S, A))
    counts = np.zeros((H, S, A), dtype=np.int64)
    tc = np.zeros((H - 1, S, A, S), dtype=np.int64)
    ic = np.zeros(S, dtype=np.int64)
    sq_total = 0.0
    played = []
    for k in range(K):
        policy = Policy(pi)
        played.append(policy)
        batch = env.rollout(policy, int(sizes[k]), rng)
        batch_model = EmpiricalModel.from_dataset(batch, S, A)
        counts += batch_model.visit_counts
        tc += batch_model.transition_counts
        ic += batch_model.initial_counts
        model = EmpiricalModel(counts, tc, ic)
        P_hat, rho_hat = model.p_hat, model.rho_hat

        bonus = oal_bonus(counts, n_total, delta)
        Q = _optimistic_q(P_hat, pi, w + bonus)

        g = occupancy_table(P_hat, rho_hat, pi) - target
        sq_total += float(np.sum(g * g))
        if sq_total > 0:
            w = np.clip(w - D / math.sqrt(sq_total) * g, -1.0, 1.0)

        logits = logits + eta_pi * Q
        logits -= logits.max(axis=2, keepdims=True)
        pi = np.exp(logits)
        pi /= pi.sum(axis=2, keepdims=True)

    mixture = PolicyMixture.uniform(played)
    return _result(env, expert, mixture, env.episodes - start, iterations=K, target=target,
                   demonstrations=data)


def _run_mbtail_abstract(env, expert, budget, seed=None, demonstrations=None, abstraction=None, **params):
    from .abstraction import run_mbtail_abstract

    if abstraction is None:
        raise ConfigurationError("mbtail-abs requires an abstraction")
    return run_mbtail_abstract(env, expert, abstraction, budget, seed=seed, demonstrations=demonstrations, **params)


ALGORITHMS = {
    "bc": run_bc,
    "oal": run_oal,
    "mbtail": run_mbtail,
    "mbtail-abs": _run_mbtail_abstract,
}
