"""Step-indexed state abstractions and the abstract MB-TAIL pipeline.

An abstraction is a table ``maps[h, s] -> x`` onto a shared abstract space
of size ``num_abstract``. Under bisimulation (equal rewards, equal
block-transition kernels and equal expert actions within each block), the
whole pipeline can run on abstract tables. Its cost then depends on the
number of blocks and not on ``|S|``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ail_opt import OptimizerConfig, solve_matching
from .algorithms import ImitationBudget, ImitationResult, _demos, _pipeline_streams
from .estimators import DatasetSplit, bc_policy, holdout_term, rollout_term, visited_states
from .mdp import (ConfigurationError, OccupancyMeasure, Policy, TabularMdp, TrajectoryDataset,
                  as_env, compute_occupancy)
from .rfe import RfeResult, explore

BISIM_TOL = 1e-9


class BisimulationError(ConfigurationError):
    pass


@dataclass(frozen=True, eq=False)
class StateAbstraction:
    maps: np.ndarray
    num_abstract: int

    def __post_init__(self):
        maps = np.array(self.maps, dtype=np.int64)
        if maps.ndim != 2:
            raise ConfigurationError("abstraction maps must have shape (H, S)")
        if maps.size and (maps.min() < 0 or maps.max() >= self.num_abstract):
            raise ConfigurationError("abstract index out of range")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    @property
    def horizon(self) -> int:
        return self.maps.shape[0]

    @property
    def num_states(self) -> int:
        return self.maps.shape[1]

    @classmethod
    def identity(cls, horizon: int, num_states: int) -> "StateAbstraction":
        return cls(np.tile(np.arange(num_states), (horizon, 1)), num_states)

    @classmethod
    def constant(cls, horizon: int, num_states: int) -> "StateAbstraction":
        return cls(np.zeros((horizon, num_states), dtype=np.int64), 1)

    def preimage(self, h: int, x: int) -> np.ndarray:
        return np.flatnonzero(self.maps[h] == x)

    def check_surjective(self) -> None:
        for h in range(self.horizon):
            missing = np.setdiff1d(np.arange(self.num_abstract), self.maps[h])
            if missing.size:
                raise ConfigurationError(f"abstract state {int(missing[0])} has no preimage at step {h}")

    def membership(self) -> np.ndarray:
        """One-hot table ``M[h, s, x] = 1{maps[h, s] == x}``."""
        M = np.zeros((self.horizon, self.num_states, self.num_abstract))
        M[np.arange(self.horizon)[:, None], np.arange(self.num_states)[None, :], self.maps] = 1.0
        return M

    def to_json(self) -> str:
        return json.dumps(self.maps.tolist())

    @classmethod
    def from_json(cls, text: str, num_abstract: int | None = None) -> "StateAbstraction":
        maps = np.array(json.loads(text), dtype=np.int64)
        return cls(maps, int(maps.max()) + 1 if num_abstract is None else num_abstract)

    @classmethod
    def load(cls, path) -> "StateAbstraction":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


@dataclass(frozen=True)
class BisimulationReport:
    ok: bool
    violation: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def _check_shapes(mdp: TabularMdp, abstraction: StateAbstraction) -> None:
    if abstraction.maps.shape != (mdp.horizon, mdp.num_states):
        raise ConfigurationError(
            f"abstraction shape {abstraction.maps.shape} does not match MDP {(mdp.horizon, mdp.num_states)}")


def block_kernel(mdp: TabularMdp, abstraction: StateAbstraction) -> np.ndarray:
    """``K[h, s, a, x'] = sum_{s' in block x' at step h+1} P_h(s' | s, a)``."""
    M = abstraction.membership()
    return np.einsum("hsat,htx->hsax", mdp.transitions, M[1:])


def check_bisimulation(mdp: TabularMdp, expert: Policy, abstraction: StateAbstraction) -> BisimulationReport:
    """Verify reward, block-transition and expert consistency within every block."""
    _check_shapes(mdp, abstraction)
    if not expert.is_deterministic:
        raise ConfigurationError("bisimulation check needs a deterministic expert")
    if mdp.rewards is None:
        raise ConfigurationError("bisimulation check needs rewards")
    K = block_kernel(mdp, abstraction)
    expert_actions = expert.greedy_actions()
    for h in range(mdp.horizon):
        for x in range(abstraction.num_abstract):
            block = abstraction.preimage(h, x)
            if block.size < 2:
                continue
            s0 = block[0]
            for s in block[1:]:
                if np.any(np.abs(mdp.rewards[h, s] - mdp.rewards[h, s0]) > BISIM_TOL):
                    return BisimulationReport(False, f"reward mismatch at step {h} between states {s0} and {s}")
                if h < mdp.horizon - 1 and np.any(np.abs(K[h, s] - K[h, s0]) > BISIM_TOL):
                    return BisimulationReport(False, f"transition mismatch at step {h} between states {s0} and {s}")
                if expert_actions[h, s] != expert_actions[h, s0]:
                    return BisimulationReport(False, f"expert action mismatch at step {h} between states {s0} and {s}")
    return BisimulationReport(True)


def _representatives(abstraction: StateAbstraction) -> np.ndarray:
    """Lowest state index in every block, shape ``(H, num_abstract)``."""
    abstraction.check_surjective()
    H, X = abstraction.horizon, abstraction.num_abstract
    reps = np.empty((H, X), dtype=np.int64)
    for h in range(H):
        for x in range(X):
            reps[h, x] = abstraction.preimage(h, x)[0]
    return reps


def build_abstract_mdp(mdp: TabularMdp, abstraction: StateAbstraction) -> TabularMdp:
    """Abstract MDP read off the lowest-index representative of each block."""
    _check_shapes(mdp, abstraction)
    reps = _representatives(abstraction)
    H = mdp.horizon
    K = block_kernel(mdp, abstraction)
    P = np.stack([K[h, reps[h]] for h in range(H - 1)]) if H > 1 else np.zeros(
        (0, abstraction.num_abstract, mdp.num_actions, abstraction.num_abstract))
    rho = np.bincount(abstraction.maps[0], weights=mdp.initial_dist, minlength=abstraction.num_abstract)
    rewards = None if mdp.rewards is None else np.stack([mdp.rewards[h, reps[h]] for h in range(H)])
    return TabularMdp(P, rho, rewards, renormalize=False)


def lift_policy(abs_policy: Policy, abstraction: StateAbstraction) -> Policy:
    """``pi_h(a | s) = pi^phi_h(a | phi_h(s))``."""
    H, X, _ = abs_policy.shape
    if (H, X) != (abstraction.horizon, abstraction.num_abstract):
        raise ConfigurationError("abstract policy does not match abstraction")
    return Policy(np.take_along_axis(abs_policy.probs, abstraction.maps[:, :, None], axis=1))


def lift_table(abs_table: np.ndarray, abstraction: StateAbstraction) -> np.ndarray:
    """Precompose an ``(H, X, ...)`` table with the maps, giving ``(H, S, ...)``."""
    idx = abstraction.maps.reshape(abstraction.maps.shape + (1,) * (abs_table.ndim - 2))
    return np.take_along_axis(abs_table, idx, axis=1)


def aggregate_occupancy(values: np.ndarray, abstraction: StateAbstraction) -> np.ndarray:
    """Block sums ``d^phi_h(x, a) = sum_{s in block x} d_h(s, a)``."""
    return np.einsum("hsa,hsx->hxa", values, abstraction.membership())


def abstract_occupancy(mdp: TabularMdp, policy: Policy, abstraction: StateAbstraction) -> OccupancyMeasure:
    _check_shapes(mdp, abstraction)
    return OccupancyMeasure(aggregate_occupancy(compute_occupancy(mdp, policy).values, abstraction))


def abstract_dataset(data: TrajectoryDataset, abstraction: StateAbstraction) -> TrajectoryDataset:
    """Replace each state by its abstract index at the same step."""
    if len(data) == 0:
        return data
    steps = np.arange(data.horizon)
    return TrajectoryDataset(abstraction.maps[steps[None, :], data.states], data.actions)


def rf_express_abstract(env, abstraction: StateAbstraction, epsilon: float, delta: float, max_episodes: int,
                        rng_seed=None, bonus_scale: float | None = None,
                        inflation: float | None = None) -> RfeResult:
    """RF-Express on abstract counts; rollouts play the lifted greedy policy."""
    env = as_env(env)
    if abstraction.maps.shape != (env.horizon, env.num_states):
        raise ConfigurationError("abstraction does not match environment")
    return explore(env, epsilon, delta, max_episodes, rng_seed, bonus_scale, inflation,
                   state_maps=abstraction.maps, num_abstract=abstraction.num_abstract)


def abstract_bc_policy(d1: TrajectoryDataset, abstraction: StateAbstraction, num_actions: int) -> Policy:
    return bc_policy(abstract_dataset(d1, abstraction), abstraction.num_abstract, num_actions, abstraction.horizon)


def transition_aware_estimator_abstract(split: DatasetSplit, rollouts: TrajectoryDataset,
                                        abstraction: StateAbstraction, num_actions: int) -> OccupancyMeasure:
    """Transition-aware estimator on abstract states.

    ``rollouts`` must come from ``lift_policy(abstract_bc_policy(split.d1))``.
    """
    if len(rollouts) == 0:
        raise ConfigurationError("transition-aware estimator needs at least one rollout")
    X = abstraction.num_abstract
    d1 = abstract_dataset(split.d1, abstraction)
    visited = visited_states(d1, X)
    values = (rollout_term(abstract_dataset(rollouts, abstraction), visited, X, num_actions)
              + holdout_term(abstract_dataset(split.d1c, abstraction), visited, X, num_actions))
    return OccupancyMeasure(values, is_estimate=True)


def run_mbtail_abstract(env, expert: Policy, abstraction: StateAbstraction, budget: ImitationBudget,
                        epsilon: float = 0.1, delta: float = 0.1, opt_cfg: OptimizerConfig | None = None,
                        seed=None, demonstrations=None, bonus_scale: float | None = None,
                        inflation: float | None = None, true_mdp: TabularMdp | None = None) -> ImitationResult:
    """MB-TAIL with every learning step on abstract tables; returns the lifted policy.

    Pass ``true_mdp`` to verify bisimulation up front (a violation raises
    :class:`BisimulationError`). Same seed and identity abstraction give
    exactly the result of :func:`run_mbtail`.
    """
    from .algorithms import _result

    env = as_env(env)
    H, S, A = env.shape
    if abstraction.maps.shape != (H, S):
        raise ConfigurationError("abstraction does not match environment")
    if true_mdp is not None:
        report = check_bisimulation(true_mdp, expert, abstraction)
        if not report:
            raise BisimulationError(report.violation)
    if budget.m < 2 or budget.m % 2:
        raise ConfigurationError("MB-TAIL needs an even number (>= 2) of expert trajectories")
    X = abstraction.num_abstract
    expert_stream, rfe_stream, split_stream, rollout_stream = _pipeline_streams(seed)
    data = _demos(env, expert, budget.m, expert_stream, demonstrations)
    start = env.episodes

    from .estimators import split_dataset

    split = split_dataset(data, split_stream)
    bc = lift_policy(abstract_bc_policy(split.d1, abstraction, A), abstraction)
    rollouts = env.rollout(bc, budget.rollout_episodes, np.random.default_rng(rollout_stream))
    visited = visited_states(abstract_dataset(split.d1, abstraction), X)
    target = OccupancyMeasure(
        rollout_term(abstract_dataset(rollouts, abstraction), visited, X, A)
        + holdout_term(abstract_dataset(split.d1c, abstraction), visited, X, A), is_estimate=True)

    rfe = rf_express_abstract(env, abstraction, epsilon, delta, budget.exploration_episodes, rfe_stream,
                              bonus_scale, inflation)
    model = rfe.model.to_mdp()
    abs_policy, trace = solve_matching(model, target, opt_cfg)
    policy = lift_policy(abs_policy, abstraction)
    return _result(env, expert, policy, env.episodes - start, model=model, rfe=rfe, target=target, trace=trace,
                   abstract_policy=abs_policy, exploration_episodes=rfe.episodes_used,
                   rollout_episodes=len(rollouts), rfe_stopped_early=rfe.stopped_early, split=split,
                   demonstrations=data)


def k_duplicate(mdp: TabularMdp, k: int, expert: Policy | None = None):
    """Copy every state ``k`` times with identical behavior.

    Returns ``(big_mdp, abstraction, big_expert)``, where the abstraction
    maps each copy back to its original and is a bisimulation by
    construction. Transition mass into a block splits evenly over its
    copies, and so does the initial mass.
    """
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    H, S, A = mdp.shape
    orig = np.repeat(np.arange(S), k)
    P = mdp.transitions[:, orig][:, :, :, orig] / k
    rho = mdp.initial_dist[orig] / k
    rewards = None if mdp.rewards is None else mdp.rewards[:, orig]
    big = TabularMdp(P, rho, rewards)
    abstraction = StateAbstraction(np.tile(orig, (H, 1)), S)
    big_expert = None if expert is None else Policy(expert.probs[:, orig])
    return big, abstraction, big_expert
