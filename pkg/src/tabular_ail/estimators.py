"""Estimators of the expert state-action distribution.

Two estimators are provided: the plain count-based MLE and the
transition-aware estimator. The transition-aware estimator splits the
expert data in half. The first half ``d1`` fixes which truncated
trajectories count as "observed" and trains a BC policy whose environment
rollouts estimate the observed part. The held-out half ``d1c`` estimates
the rest by counting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ConfigurationError, OccupancyMeasure, Policy, Trajectory, TrajectoryDataset


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    d1: TrajectoryDataset
    d1c: TrajectoryDataset
    d1_indices: np.ndarray
    d1c_indices: np.ndarray


@dataclass(frozen=True, eq=False)
class VisitedStateSets:
    """Boolean mask ``per_step[h, s]``: was state s seen at step h."""

    per_step: np.ndarray

    def states_at(self, h: int) -> set[int]:
        return set(np.flatnonzero(self.per_step[h]).tolist())


def mle_estimator(data: TrajectoryDataset, horizon: int, num_states: int, num_actions: int) -> OccupancyMeasure:
    """Empirical frequency of each (s, a) at each step."""
    if len(data) == 0:
        raise ConfigurationError("MLE needs at least one trajectory")
    if data.horizon != horizon:
        raise ConfigurationError("dataset horizon mismatch")
    counts = data.state_action_counts(num_states, num_actions)
    return OccupancyMeasure(counts / len(data), is_estimate=True)


def split_dataset(data: TrajectoryDataset, rng_seed=None) -> DatasetSplit:
    """Uniformly random half/half partition of an even-sized dataset."""
    m = len(data)
    if m % 2:
        raise ConfigurationError(f"dataset size must be even to split in halves, got {m}")
    perm = np.random.default_rng(rng_seed).permutation(m)
    first, second = np.sort(perm[: m // 2]), np.sort(perm[m // 2:])
    return DatasetSplit(data.subset(first), data.subset(second), first, second)


def bc_policy(d1: TrajectoryDataset, num_states: int, num_actions: int, horizon: int) -> Policy:
    """Count-ratio behavioral cloning; uniform on (h, s) never seen."""
    if len(d1) == 0:
        return Policy.uniform(horizon, num_states, num_actions)
    counts = d1.state_action_counts(num_states, num_actions).astype(float)
    totals = counts.sum(axis=2, keepdims=True)
    uniform = np.full(counts.shape, 1.0 / num_actions)
    return Policy(np.divide(counts, totals, out=uniform, where=totals > 0))


def visited_states(data: TrajectoryDataset, num_states: int) -> VisitedStateSets:
    mask = np.zeros((data.horizon, num_states), dtype=bool)
    for h in range(data.horizon):
        mask[h, data.states[:, h]] = True
    return VisitedStateSets(mask)


def trajectory_in_tr_set(tr: Trajectory, h: int, visited: VisitedStateSets) -> bool:
    """Whether the length-``h`` prefix of ``tr`` only passes through visited states.

    ``h`` counts steps (1 <= h <= H), so ``h=1`` checks the initial state only.
    """
    if not 1 <= h <= len(tr):
        raise ConfigurationError(f"prefix length must lie in [1, {len(tr)}], got {h}")
    steps = np.arange(h)
    return bool(np.all(visited.per_step[steps, tr.states[:h]]))


def tr_membership(data: TrajectoryDataset, visited: VisitedStateSets) -> np.ndarray:
    """``inside[i, h]``: is the length-(h+1) prefix of trajectory i in the observed set."""
    if len(data) == 0:
        return np.zeros((0, data.horizon), dtype=bool)
    steps = np.arange(data.horizon)
    seen = visited.per_step[steps[None, :], data.states]
    return np.logical_and.accumulate(seen, axis=1)


def _masked_frequency(data: TrajectoryDataset, mask: np.ndarray, num_states: int, num_actions: int) -> np.ndarray:
    H = data.horizon
    counts = np.zeros((H, num_states, num_actions))
    for h in range(H):
        rows = mask[:, h]
        np.add.at(counts[h], (data.states[rows, h], data.actions[rows, h]), 1.0)
    return counts / len(data)


def rollout_term(rollouts: TrajectoryDataset, visited: VisitedStateSets,
                 num_states: int, num_actions: int) -> np.ndarray:
    """Frequency of (s, a) over rollouts whose prefix stays in the observed set."""
    if len(rollouts) == 0:
        return np.zeros((rollouts.horizon, num_states, num_actions))
    return _masked_frequency(rollouts, tr_membership(rollouts, visited), num_states, num_actions)


def holdout_term(d1c: TrajectoryDataset, visited: VisitedStateSets,
                 num_states: int, num_actions: int) -> np.ndarray:
    """Frequency of (s, a) over held-out expert trajectories that leave the observed set."""
    if len(d1c) == 0:
        raise ConfigurationError("held-out expert half is empty")
    return _masked_frequency(d1c, ~tr_membership(d1c, visited), num_states, num_actions)


def transition_aware_estimator(split: DatasetSplit, rollouts: TrajectoryDataset, horizon: int,
                               num_states: int, num_actions: int) -> OccupancyMeasure:
    """Rollout term over the observed region plus held-out MLE on its complement.

    ``rollouts`` must come from ``bc_policy(split.d1)``. The layers are not
    renormalized.
    """
    if len(rollouts) == 0:
        raise ConfigurationError("transition-aware estimator needs at least one rollout")
    if rollouts.horizon != horizon or split.d1c.horizon != horizon:
        raise ConfigurationError("dataset horizon mismatch")
    visited = visited_states(split.d1, num_states)
    values = (rollout_term(rollouts, visited, num_states, num_actions)
              + holdout_term(split.d1c, visited, num_states, num_actions))
    return OccupancyMeasure(values, is_estimate=True)
