"""Exact machinery for finite-horizon tabular MDPs.

Array conventions (all steps are 0-indexed in code):

    transitions[h, s, a, s']   h = 0 .. H-2   (the last step needs no kernel)
    rewards[h, s, a]           h = 0 .. H-1
    policy.probs[h, s, a]
    occupancy.values[h, s, a]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

PROB_TOL = 1e-9
OCC_TOL = 1e-8


class ConfigurationError(ValueError):
    """Inputs with inconsistent shapes or invalid probability tables."""


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_simplex(arr: np.ndarray, what: str, tol: float = PROB_TOL) -> None:
    if arr.size == 0:
        return
    if np.any(arr < -tol) or not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{what} has negative or non-finite entries")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ConfigurationError(f"{what} rows do not sum to 1 (max deviation {worst:.3g})")


def _renormalize(arr: np.ndarray) -> np.ndarray:
    arr = np.clip(np.asarray(arr, dtype=float), 0.0, None)
    sums = arr.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise ConfigurationError("cannot renormalize an all-zero probability row")
    return arr / sums


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Episodic MDP ``(S, A, P, r, H, rho)`` with dense tables.

    ``rewards`` may be omitted for reward-free settings. Pass
    ``renormalize=True`` to rescale probability rows instead of rejecting
    them; rows are never rescaled silently.
    """

    transitions: np.ndarray
    initial_dist: np.ndarray
    rewards: np.ndarray | None = None
    renormalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        rho = np.asarray(self.initial_dist, dtype=float)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ConfigurationError(f"transitions must have shape (H-1, S, A, S), got {P.shape}")
        if rho.shape != (P.shape[1],):
            raise ConfigurationError(f"initial_dist must have shape ({P.shape[1]},), got {rho.shape}")
        if self.renormalize:
            P = _renormalize(P) if P.size else P
            rho = _renormalize(rho)
        _check_simplex(P, "transitions")
        _check_simplex(rho, "initial_dist")
        object.__setattr__(self, "transitions", _frozen(P))
        object.__setattr__(self, "initial_dist", _frozen(rho))
        if self.rewards is not None:
            r = np.asarray(self.rewards, dtype=float)
            expected = (P.shape[0] + 1, P.shape[1], P.shape[2])
            if r.shape != expected:
                raise ConfigurationError(f"rewards must have shape {expected}, got {r.shape}")
            if np.any(r < 0) or np.any(r > 1):
                raise ConfigurationError("rewards must lie in [0, 1]")
            object.__setattr__(self, "rewards", _frozen(r))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0] + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        """``(H, S, A)``, the shape of every per-step table."""
        return (self.horizon, self.num_states, self.num_actions)

    def with_rewards(self, rewards) -> "TabularMdp":
        return TabularMdp(self.transitions, self.initial_dist, rewards)

    def without_rewards(self) -> "TabularMdp":
        return TabularMdp(self.transitions, self.initial_dist, None)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "horizon": self.horizon,
            "rho": self.initial_dist.tolist(),
            "transitions": self.transitions.tolist(),
            "rewards": None if self.rewards is None else self.rewards.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict, renormalize: bool = False) -> "TabularMdp":
        S, A, H = int(doc["num_states"]), int(doc["num_actions"]), int(doc["horizon"])
        P = np.array(doc["transitions"], dtype=float)
        if P.size == 0:
            P = np.zeros((H - 1, S, A, S))
        if P.shape != (H - 1, S, A, S):
            raise ConfigurationError(f"transitions shape {P.shape} does not match header {(H - 1, S, A, S)}")
        rewards = doc.get("rewards")
        return cls(P, doc["rho"], None if rewards is None else np.array(rewards, dtype=float), renormalize)

    @classmethod
    def from_json(cls, text: str, renormalize: bool = False) -> "TabularMdp":
        return cls.from_dict(json.loads(text), renormalize)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "TabularMdp":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True, eq=False)
class Policy:
    """Non-stationary stochastic policy, ``probs[h, s, a] = pi_h(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 3:
            raise ConfigurationError(f"policy probs must have shape (H, S, A), got {p.shape}")
        _check_simplex(p, "policy")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.probs.shape

    @classmethod
    def uniform(cls, horizon: int, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "Policy":
        """Build from an integer table ``actions[h, s]``."""
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros(actions.shape + (num_actions,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs)

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=-1)


@dataclass(frozen=True, eq=False)
class PolicyMixture:
    """Trajectory-level mixture: draw one member per episode, then follow it.

    Its occupancy (and value) is the weighted average of the members'.
    """

    policies: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.policies) == 0 or w.shape != (len(self.policies),):
            raise ConfigurationError("mixture needs one weight per member policy")
        _check_simplex(w, "mixture weights")
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, policies) -> "PolicyMixture":
        policies = tuple(policies)
        return cls(policies, np.full(len(policies), 1.0 / len(policies)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.policies[0].shape


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """State-action visitation table ``values[h, s, a] = d_h(s, a)``.

    True occupancies have unit mass per step; estimates (``is_estimate``)
    only need to be nonnegative.
    """

    values: np.ndarray
    is_estimate: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ConfigurationError(f"occupancy must have shape (H, S, A), got {v.shape}")
        if np.any(v < -OCC_TOL):
            raise ConfigurationError("occupancy has negative entries")
        if not self.is_estimate:
            mass = v.sum(axis=(1, 2))
            if np.any(np.abs(mass - 1.0) > OCC_TOL):
                raise ConfigurationError("occupancy layers must each sum to 1")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def state_marginal(self) -> np.ndarray:
        return self.values.sum(axis=2)


@dataclass(frozen=True, eq=False)
class RewardWeights:
    """Adversarial reward iterate, constrained to the sup-norm unit ball."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ConfigurationError(f"reward weights must have shape (H, S, A), got {v.shape}")
        if np.any(np.abs(v) > 1.0):
            raise ConfigurationError("reward weights must lie in [-1, 1]")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def zeros(cls, shape) -> "RewardWeights":
        return cls(np.zeros(shape))


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states.tolist(), self.actions.tolist()))

    def prefix(self, length: int) -> "Trajectory":
        return Trajectory(self.states[:length], self.actions[:length])


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """Ordered batch of length-H trajectories stored as two ``(N, H)`` int arrays."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        if s.ndim != 2 or s.shape != a.shape:
            raise ConfigurationError(f"states/actions must be matching (N, H) arrays, got {s.shape} and {a.shape}")
        object.__setattr__(self, "states", _frozen(s, np.int64))
        object.__setattr__(self, "actions", _frozen(a, np.int64))

    @classmethod
    def empty(cls, horizon: int) -> "TrajectoryDataset":
        return cls(np.zeros((0, horizon), dtype=np.int64), np.zeros((0, horizon), dtype=np.int64))

    @classmethod
    def from_trajectories(cls, trajectories, horizon: int) -> "TrajectoryDataset":
        trajectories = list(trajectories)
        if not trajectories:
            return cls.empty(horizon)
        return cls(np.stack([t.states for t in trajectories]), np.stack([t.actions for t in trajectories]))

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i])

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices) -> "TrajectoryDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return TrajectoryDataset(self.states[idx], self.actions[idx])

    def concat(self, other: "TrajectoryDataset") -> "TrajectoryDataset":
        return TrajectoryDataset(np.vstack([self.states, other.states]), np.vstack([self.actions, other.actions]))

    def validate(self, num_states: int, num_actions: int) -> None:
        if len(self) and (self.states.min() < 0 or self.states.max() >= num_states):
            raise ConfigurationError("trajectory state index out of range")
        if len(self) and (self.actions.min() < 0 or self.actions.max() >= num_actions):
            raise ConfigurationError("trajectory action index out of range")

    def state_action_counts(self, num_states: int, num_actions: int) -> np.ndarray:
        """Integer table ``counts[h, s, a]`` over the whole dataset."""
        H = self.horizon
        counts = np.zeros((H, num_states, num_actions), dtype=np.int64)
        for h in range(H):
            np.add.at(counts[h], (self.states[:, h], self.actions[:, h]), 1)
        return counts


def _check_policy(mdp: TabularMdp, policy) -> None:
    if policy.shape != mdp.shape:
        raise ConfigurationError(f"policy shape {policy.shape} does not match MDP {mdp.shape}")


def _rewards_array(mdp: TabularMdp, rewards) -> np.ndarray:
    if rewards is None:
        if mdp.rewards is None:
            raise ConfigurationError("no rewards supplied and MDP carries none")
        return mdp.rewards
    r = rewards.values if isinstance(rewards, RewardWeights) else np.asarray(rewards, dtype=float)
    if r.shape != mdp.shape:
        raise ConfigurationError(f"reward shape {r.shape} does not match MDP {mdp.shape}")
    return r


def occupancy_table(P: np.ndarray, rho: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Forward flow recursion on raw arrays; no validation."""
    H = pi.shape[0]
    d = np.empty(pi.shape)
    d[0] = rho[:, None] * pi[0]
    for h in range(1, H):
        state = np.einsum("sa,sat->t", d[h - 1], P[h - 1])
        d[h] = state[:, None] * pi[h]
    return d


def compute_occupancy(mdp: TabularMdp, policy) -> OccupancyMeasure:
    """State-action occupancy of ``policy`` (a Policy or PolicyMixture) in ``mdp``."""
    if isinstance(policy, PolicyMixture):
        _check_policy(mdp, policy)
        d = sum(w * occupancy_table(mdp.transitions, mdp.initial_dist, p.probs)
                for w, p in zip(policy.weights, policy.policies))
        return OccupancyMeasure(d)
    _check_policy(mdp, policy)
    return OccupancyMeasure(occupancy_table(mdp.transitions, mdp.initial_dist, policy.probs))


def policy_value(occupancy: OccupancyMeasure, rewards) -> float:
    """Dual form of the value: ``sum_h sum_{s,a} d_h(s,a) r_h(s,a)``."""
    r = rewards.values if isinstance(rewards, RewardWeights) else np.asarray(rewards, dtype=float)
    if r.shape != occupancy.shape:
        raise ConfigurationError(f"reward shape {r.shape} does not match occupancy {occupancy.shape}")
    return float(np.sum(occupancy.values * r))


def value_table(P: np.ndarray, pi: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Backward recursion on raw arrays; returns ``V[h, s]`` for h = 0..H."""
    H, S, _ = pi.shape
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        q = r[h] if h == H - 1 else r[h] + P[h] @ V[h + 1]
        V[h] = np.sum(pi[h] * q, axis=1)
    return V


def evaluate_policy_direct(mdp: TabularMdp, policy, rewards=None) -> float:
    """Expected return by backward induction (rewards default to ``mdp.rewards``)."""
    r = _rewards_array(mdp, rewards)
    if isinstance(policy, PolicyMixture):
        _check_policy(mdp, policy)
        return float(sum(w * evaluate_policy_direct(mdp, p, r) for w, p in zip(policy.weights, policy.policies)))
    _check_policy(mdp, policy)
    V = value_table(mdp.transitions, policy.probs, r)
    return float(mdp.initial_dist @ V[0])


def optimal_actions(P: np.ndarray, rho: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, float]:
    """Raw-array value iteration; ties go to the lowest action index."""
    H, S, _ = r.shape
    actions = np.empty((H, S), dtype=np.int64)
    v_next = np.zeros(S)
    for h in range(H - 1, -1, -1):
        q = r[h] if h == H - 1 else r[h] + P[h] @ v_next
        actions[h] = np.argmax(q, axis=1)
        v_next = np.take_along_axis(q, actions[h][:, None], axis=1)[:, 0]
    return actions, float(rho @ v_next)


def value_iteration(mdp: TabularMdp, rewards=None) -> tuple[Policy, float]:
    """Exact finite-horizon optimal control. Rewards may be negative."""
    r = _rewards_array(mdp, rewards)
    actions, value = optimal_actions(mdp.transitions, mdp.initial_dist, r)
    return Policy.deterministic(actions, mdp.num_actions), value


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    idx = (u[:, None] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def rollout_arrays(P: np.ndarray, rho: np.ndarray, pi: np.ndarray, count: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    H, S, _ = pi.shape
    states = np.empty((count, H), dtype=np.int64)
    actions = np.empty((count, H), dtype=np.int64)
    if count == 0:
        return states, actions
    s = _inverse_cdf(np.broadcast_to(rho, (count, S)), rng.random(count))
    for h in range(H):
        states[:, h] = s
        a = _inverse_cdf(pi[h, s], rng.random(count))
        actions[:, h] = a
        if h < H - 1:
            s = _inverse_cdf(P[h, s, a], rng.random(count))
    return states, actions


def sample_trajectories(mdp: TabularMdp, policy, count: int, rng_seed=None) -> TrajectoryDataset:
    """Draw ``count`` i.i.d. episodes. ``rng_seed`` may be an int, SeedSequence or Generator."""
    if count < 0:
        raise ConfigurationError("count must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    if isinstance(policy, PolicyMixture):
        _check_policy(mdp, policy)
        members = rng.choice(len(policy.policies), size=count, p=policy.weights)
        states = np.empty((count, mdp.horizon), dtype=np.int64)
        actions = np.empty_like(states)
        for k in np.unique(members):
            rows = np.flatnonzero(members == k)
            states[rows], actions[rows] = rollout_arrays(
                mdp.transitions, mdp.initial_dist, policy.policies[k].probs, len(rows), rng)
        return TrajectoryDataset(states, actions)
    _check_policy(mdp, policy)
    return TrajectoryDataset(*rollout_arrays(mdp.transitions, mdp.initial_dist, policy.probs, count, rng))


def l1_occupancy_distance(a, b) -> float:
    """``sum_h || a_h - b_h ||_1``; accepts OccupancyMeasure or raw arrays."""
    va = a.values if isinstance(a, OccupancyMeasure) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, OccupancyMeasure) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ConfigurationError(f"occupancy shapes differ: {va.shape} vs {vb.shape}")
    return float(np.abs(va - vb).sum())


class SamplingEnv:
    """Sampling-only access to a true MDP.

    Learners draw episodes through :meth:`rollout` (counted as environment
    interactions) and expert demonstrations through :meth:`demonstrations`
    (not counted). The wrapped MDP is only reachable via :meth:`exact_value`,
    which exists for reporting imitation gaps.
    """

    def __init__(self, mdp: TabularMdp):
        self._mdp = mdp
        self._cdf = np.cumsum(mdp.transitions, axis=-1)
        self._rho_cdf = np.cumsum(mdp.initial_dist)
        self.episodes = 0

    @property
    def num_states(self) -> int:
        return self._mdp.num_states

    @property
    def num_actions(self) -> int:
        return self._mdp.num_actions

    @property
    def horizon(self) -> int:
        return self._mdp.horizon

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._mdp.shape

    def rollout(self, policy, count: int, rng) -> TrajectoryDataset:
        self.episodes += count
        return sample_trajectories(self._mdp, policy, count, rng)

    def rollout_greedy(self, actions: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """One episode of the deterministic policy ``actions[h, s]``."""
        self.episodes += 1
        H = self.horizon
        last = self.num_states - 1
        u = rng.random(H)
        states = np.empty(H, dtype=np.int64)
        acts = np.empty(H, dtype=np.int64)
        s = min(int(np.searchsorted(self._rho_cdf, u[0], side="right")), last)
        for h in range(H):
            a = int(actions[h, s])
            states[h], acts[h] = s, a
            if h < H - 1:
                s = min(int(np.searchsorted(self._cdf[h, s, a], u[h + 1], side="right")), last)
        return states, acts

    def demonstrations(self, expert, count: int, rng) -> TrajectoryDataset:
        return sample_trajectories(self._mdp, expert, count, rng)

    def exact_value(self, policy) -> float:
        return evaluate_policy_direct(self._mdp, policy)


def as_env(env) -> SamplingEnv:
    return env if isinstance(env, SamplingEnv) else SamplingEnv(env)
