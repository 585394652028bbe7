"""Reward-free exploration with the RF-Express bonus recursion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .envs import random_policy
from .mdp import (ConfigurationError, TabularMdp, as_env,
                  evaluate_policy_direct, occupancy_table)


def beta(n, delta: float, num_states: int, num_actions: int, horizon: int):
    """Confidence threshold ``log(3|S||A|H/delta) + |S| log(8e(n+1))``.

    Vectorized over ``n``.
    """
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ConfigurationError("n must be nonnegative")
    out = math.log(3 * num_states * num_actions * horizon / delta) + num_states * np.log(8 * math.e * (n + 1))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    """Count tables from exploration data and the induced kernel estimate.

    ``visit_counts[h, s, a]`` covers all H steps; ``transition_counts`` only
    the first H-1. ``initial_counts`` records episode start states and gives
    the initial-distribution estimate.
    """

    visit_counts: np.ndarray
    transition_counts: np.ndarray
    initial_counts: np.ndarray

    def __post_init__(self):
        n = np.array(self.visit_counts, dtype=np.int64)
        tc = np.array(self.transition_counts, dtype=np.int64)
        ic = np.array(self.initial_counts, dtype=np.int64)
        H, S, A = n.shape
        if tc.shape != (H - 1, S, A, S) or ic.shape != (S,):
            raise ConfigurationError("count tables have inconsistent shapes")
        if not np.array_equal(tc.sum(axis=-1), n[:-1]):
            raise ConfigurationError("transition counts do not add up to visit counts")
        for name, arr in (("visit_counts", n), ("transition_counts", tc), ("initial_counts", ic)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, horizon: int, num_states: int, num_actions: int) -> "EmpiricalModel":
        return cls(np.zeros((horizon, num_states, num_actions), dtype=np.int64),
                   np.zeros((horizon - 1, num_states, num_actions, num_states), dtype=np.int64),
                   np.zeros(num_states, dtype=np.int64))

    @classmethod
    def from_dataset(cls, data, num_states: int, num_actions: int) -> "EmpiricalModel":
        H = data.horizon
        tc = np.zeros((H - 1, num_states, num_actions, num_states), dtype=np.int64)
        for h in range(H - 1):
            np.add.at(tc[h], (data.states[:, h], data.actions[:, h], data.states[:, h + 1]), 1)
        ic = np.bincount(data.states[:, 0], minlength=num_states) if len(data) else np.zeros(num_states, np.int64)
        return cls(data.state_action_counts(num_states, num_actions), tc, ic)

    @property
    def horizon(self) -> int:
        return self.visit_counts.shape[0]

    @property
    def num_states(self) -> int:
        return self.visit_counts.shape[1]

    @property
    def num_actions(self) -> int:
        return self.visit_counts.shape[2]

    @property
    def episodes(self) -> int:
        return int(self.initial_counts.sum())

    @property
    def p_hat(self) -> np.ndarray:
        n = self.visit_counts[:-1, :, :, None]
        uniform = np.full(self.transition_counts.shape, 1.0 / self.num_states)
        return np.divide(self.transition_counts, n, out=uniform, where=n > 0)

    @property
    def rho_hat(self) -> np.ndarray:
        total = self.initial_counts.sum()
        if total == 0:
            return np.full(self.num_states, 1.0 / self.num_states)
        return self.initial_counts / total

    def to_mdp(self) -> TabularMdp:
        """Reward-free MDP with the estimated kernel and initial distribution."""
        return TabularMdp(self.p_hat, self.rho_hat)

    def to_dict(self) -> dict:
        doc = self.to_mdp().to_dict()
        doc["counts"] = {
            "visits": self.visit_counts.tolist(),
            "transitions": self.transition_counts.tolist(),
            "initial": self.initial_counts.tolist(),
        }
        return doc

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "EmpiricalModel":
        doc = json.loads(text)
        H, S, A = doc["horizon"], doc["num_states"], doc["num_actions"]
        c = doc["counts"]
        tc = np.array(c["transitions"], dtype=np.int64).reshape(H - 1, S, A, S)
        return cls(np.array(c["visits"], dtype=np.int64), tc, np.array(c["initial"], dtype=np.int64))


@dataclass(frozen=True, eq=False)
class RfeBonus:
    """``w_table`` holds the clamped bonus W; ``raw_table`` the value before ``min(H, .)``."""

    w_table: np.ndarray
    raw_table: np.ndarray

    def greedy_actions(self) -> np.ndarray:
        """Argmax of W with ties broken by the unclamped value, then lowest index.

        Since ``W = min(H, raw)`` is monotone in ``raw``, this is always a
        maximizer of W.
        """
        return np.argmax(self.raw_table, axis=-1)


def _first_term(counts: np.ndarray, delta: float, scale: float, horizon: int) -> np.ndarray:
    _, S, A = counts.shape
    safe = np.maximum(counts, 1)
    term = scale * beta(safe, delta, S, A, horizon) / safe
    return np.where(counts > 0, term, np.inf)


def _recursion(first: np.ndarray, p_hat: np.ndarray, horizon: int, inflation: float) -> tuple[np.ndarray, np.ndarray]:
    raw = first.copy()
    for h in range(horizon - 2, -1, -1):
        raw[h] += inflation * (p_hat[h] @ np.minimum(horizon, raw[h + 1]).max(axis=1))
    return np.minimum(horizon, raw), raw


def _bonus_table(counts, p_hat, delta, horizon, scale, inflation) -> tuple[np.ndarray, np.ndarray]:
    return _recursion(_first_term(counts, delta, scale, horizon), p_hat, horizon, inflation)


def default_bonus_scale(horizon: int) -> float:
    return 15.0 * horizon ** 2


def compute_bonus(model: EmpiricalModel, delta: float, horizon: int | None = None,
                  bonus_scale: float | None = None, inflation: float | None = None) -> RfeBonus:
    """Backward recursion for the exploration bonus ``W_h(s, a)``.

    Unvisited pairs get ``W = H`` directly. ``bonus_scale`` replaces the
    ``15 H^2`` factor and ``inflation`` the ``1 + 1/H`` factor.
    """
    H = model.horizon if horizon is None else horizon
    scale = default_bonus_scale(H) if bonus_scale is None else bonus_scale
    infl = 1.0 + 1.0 / H if inflation is None else inflation
    return RfeBonus(*_bonus_table(model.visit_counts, model.p_hat, delta, H, scale, infl))


def stopping_statistic(w_table: np.ndarray, rho: np.ndarray) -> float:
    """``sum_s rho(s) [3e sqrt(W_1(s, g(s))) + W_1(s, g(s))]`` with g greedy.

    Every greedy action attains ``max_a W_1(s, a)``, so the max is used directly.
    """
    w1 = w_table[0].max(axis=1)
    return float(rho @ (3 * math.e * np.sqrt(w1) + w1))


@dataclass(frozen=True, eq=False)
class RfeResult:
    model: EmpiricalModel
    episodes_used: int
    stopped_early: bool
    final_statistic: float

    def __iter__(self):
        yield self.model
        yield self.episodes_used


def explore(env, epsilon: float, delta: float, max_episodes: int, rng_seed=None,
            bonus_scale: float | None = None, inflation: float | None = None,
            state_maps: np.ndarray | None = None, num_abstract: int | None = None) -> RfeResult:
    """RF-Express loop, optionally counting through per-step state maps.

    With ``state_maps`` (shape ``(H, S)``), counts and the bonus live on the
    abstract space and each rollout plays the lifted greedy policy.
    """
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if max_episodes < 0:
        raise ConfigurationError("max_episodes must be nonnegative")
    env = as_env(env)
    rng = np.random.default_rng(rng_seed)
    H, A = env.horizon, env.num_actions
    if state_maps is None:
        X = env.num_states
        maps = None
    else:
        maps = np.asarray(state_maps, dtype=np.int64)
        X = int(num_abstract)
    scale = default_bonus_scale(H) if bonus_scale is None else bonus_scale
    infl = 1.0 + 1.0 / H if inflation is None else inflation

    n = np.zeros((H, X, A), dtype=np.int64)
    tc = np.zeros((H - 1, X, A, X), dtype=np.int64)
    ic = np.zeros(X, dtype=np.int64)
    p_hat = np.full((H - 1, X, A, X), 1.0 / X)
    first = _first_term(n, delta, scale, H)
    # only the H visited cells change per episode, so beta is updated in place
    b0 = beta(0, delta, X, A, H) - X * math.log(8 * math.e)
    steps = np.arange(H)

    t = 0
    while True:
        W, raw = _recursion(first, p_hat, H, infl)
        greedy = np.argmax(raw, axis=-1)
        rho_hat = ic / t if t > 0 else np.full(X, 1.0 / X)
        stat = stopping_statistic(W, rho_hat)
        if stat <= epsilon / 2:
            stopped_early = False
            break
        if t >= max_episodes:
            stopped_early = True
            break
        actions = greedy if maps is None else np.take_along_axis(greedy, maps, axis=1)
        s, a = env.rollout_greedy(actions, rng)
        x = s if maps is None else maps[steps, s]
        n[steps, x, a] += 1
        cnt = n[steps, x, a]
        first[steps, x, a] = scale * (b0 + X * np.log(8 * math.e * (cnt + 1))) / cnt
        tc[steps[:-1], x[:-1], a[:-1], x[1:]] += 1
        ic[x[0]] += 1
        rows = (steps[:-1], x[:-1], a[:-1])
        p_hat[rows] = tc[rows] / n[rows][:, None]
        t += 1
    return RfeResult(EmpiricalModel(n, tc, ic), t, stopped_early, stat)


def rf_express(mdp, epsilon: float, delta: float, max_episodes: int, rng_seed=None,
               bonus_scale: float | None = None, inflation: float | None = None) -> RfeResult:
    """Run RF-Express until the stopping rule fires or ``max_episodes`` is spent.

    ``mdp`` is a :class:`SamplingEnv` or a TabularMdp (wrapped for sampling).
    """
    return explore(mdp, epsilon, delta, max_episodes, rng_seed, bonus_scale, inflation)


def uniform_evaluation_error(mdp: TabularMdp, model, probe_count: int, rng_seed=None,
                             probes=(), worst_case_policies=()) -> float:
    """Largest ``|V^{pi,P,r} - V^{pi,P_hat,r}|`` over a set of probes.

    Random probes draw Dirichlet policies and rewards uniform on [-1, 1].
    ``probes`` adds explicit ``(policy, reward)`` pairs; each policy in
    ``worst_case_policies`` is probed with its maximizing reward
    ``sign(d^{pi,P} - d^{pi,P_hat})``, giving the exact sup over rewards
    for that policy. The result lower-bounds the sup over all pairs.
    """
    if probe_count < 1:
        raise ConfigurationError("probe_count must be >= 1")
    model_mdp = model.to_mdp() if isinstance(model, EmpiricalModel) else model
    if model_mdp.shape != mdp.shape:
        raise ConfigurationError("model and MDP shapes differ")
    rng = np.random.default_rng(rng_seed)
    H, S, A = mdp.shape
    worst = 0.0
    pairs = [(random_policy(S, A, H, rng), rng.uniform(-1.0, 1.0, size=(H, S, A))) for _ in range(probe_count)]
    pairs.extend(probes)
    for policy, reward in pairs:
        gap = evaluate_policy_direct(mdp, policy, reward) - evaluate_policy_direct(model_mdp, policy, reward)
        worst = max(worst, abs(gap))
    for policy in worst_case_policies:
        diff = (occupancy_table(mdp.transitions, mdp.initial_dist, policy.probs)
                - occupancy_table(model_mdp.transitions, model_mdp.initial_dist, policy.probs))
        worst = max(worst, float(np.abs(diff).sum()))
    return worst

