"""Benchmark environments: Reset Cliff and seeded random MDPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ConfigurationError, Policy, TabularMdp


@dataclass(frozen=True)
class ResetCliffSpec:
    """Reset Cliff dimensions.

    The last state is the absorbing state ``b`` and the last action is the
    expert action. ``m`` (number of expert trajectories) shapes the initial
    distribution.
    """

    num_states: int = 20
    num_actions: int = 5
    horizon: int = 20
    m: int = 100

    def __post_init__(self):
        if self.num_states < 3 or self.num_actions < 2 or self.horizon < 1 or self.m < 1:
            raise ConfigurationError(f"invalid Reset Cliff spec {self}")
        if (self.num_states - 2) / self.m > 1:
            raise ConfigurationError(
                f"m={self.m} too small for {self.num_states} states: (|S|-2)/m must be <= 1")

    @property
    def absorbing_state(self) -> int:
        return self.num_states - 1

    @property
    def expert_action(self) -> int:
        return self.num_actions - 1


def reset_cliff_initial_dist(num_states: int, m: int) -> np.ndarray:
    rho = np.zeros(num_states)
    rho[: num_states - 2] = 1.0 / m
    rho[num_states - 2] = 1.0 - (num_states - 2) / m
    return rho


def build_reset_cliff(spec: ResetCliffSpec) -> TabularMdp:
    """Reset Cliff: any non-expert action drops into the absorbing state.

    The expert action moves uniformly over the non-absorbing states and is
    the only rewarded action; the absorbing state pays nothing.
    """
    S, A, H = spec.num_states, spec.num_actions, spec.horizon
    b, a_e = spec.absorbing_state, spec.expert_action
    P = np.zeros((H - 1, S, A, S))
    P[:, :, :, b] = 1.0
    P[:, :b, a_e, :] = 0.0
    P[:, :b, a_e, :b] = 1.0 / (S - 1)
    r = np.zeros((H, S, A))
    r[:, :b, a_e] = 1.0
    return TabularMdp(P, reset_cliff_initial_dist(S, spec.m), r)


def reset_cliff_expert(spec: ResetCliffSpec) -> Policy:
    """The deterministic expert: always play the expert action."""
    actions = np.full((spec.horizon, spec.num_states), spec.expert_action)
    return Policy.deterministic(actions, spec.num_actions)


def build_random_mdp(num_states: int, num_actions: int, horizon: int, rng_seed=None) -> TabularMdp:
    """Flat-Dirichlet kernels and initial distribution, uniform [0, 1] rewards."""
    if min(num_states, num_actions, horizon) < 1:
        raise ConfigurationError("all dimensions must be >= 1")
    rng = np.random.default_rng(rng_seed)
    alpha = np.ones(num_states)
    P = rng.dirichlet(alpha, size=(horizon - 1, num_states, num_actions))
    rho = rng.dirichlet(alpha)
    # Dirichlet draws can miss the simplex by an ulp; a single state must give exactly 1
    P /= P.sum(axis=-1, keepdims=True)
    rho /= rho.sum()
    r = rng.random((horizon, num_states, num_actions))
    return TabularMdp(P.reshape(horizon - 1, num_states, num_actions, num_states), rho, r)


def random_policy(num_states: int, num_actions: int, horizon: int, rng=None) -> Policy:
    rng = np.random.default_rng(rng)
    return Policy(rng.dirichlet(np.ones(num_actions), size=(horizon, num_states)))


def random_deterministic_policy(num_states: int, num_actions: int, horizon: int, rng=None) -> Policy:
    rng = np.random.default_rng(rng)
    return Policy.deterministic(rng.integers(num_actions, size=(horizon, num_states)), num_actions)
