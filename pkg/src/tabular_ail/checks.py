"""Brute-force oracles and the invariant suite behind ``tabular-ail check``.

The enumerators walk every trajectory or every deterministic policy, so
they only make sense on tiny instances. They are deliberately written as
plain loops with no shared code from the fast paths they cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .envs import random_policy
from .mdp import (OCC_TOL, Policy, TabularMdp, compute_occupancy, evaluate_policy_direct,
                  policy_value, value_iteration)

ENUM_LIMIT = 4096


def enumerate_trajectories(mdp: TabularMdp, policy: Policy):
    """Yield ``(states, actions, probability)`` for every length-H trajectory with positive mass."""
    H, S, A = mdp.shape
    P, rho, pi = mdp.transitions, mdp.initial_dist, policy.probs

    def walk(h, states, actions, prob):
        s = states[-1]
        for a in range(A):
            pa = prob * pi[h, s, a]
            if pa == 0.0:
                continue
            if h == H - 1:
                yield tuple(states), tuple(actions) + (a,), pa
                continue
            for s2 in range(S):
                p2 = pa * P[h, s, a, s2]
                if p2 > 0.0:
                    yield from walk(h + 1, states + [s2], actions + [a], p2)

    for s in range(S):
        if rho[s] > 0.0:
            yield from walk(0, [s], [], rho[s])


def brute_force_occupancy(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    H, S, A = mdp.shape
    d = np.zeros((H, S, A))
    for states, actions, prob in enumerate_trajectories(mdp, policy):
        for h in range(H):
            d[h, states[h], actions[h]] += prob
    return d


def deterministic_policy_count(mdp: TabularMdp) -> int:
    H, S, A = mdp.shape
    return A ** (S * H)


def enumerate_deterministic_policies(horizon: int, num_states: int, num_actions: int):
    for choice in itertools.product(range(num_actions), repeat=horizon * num_states):
        yield Policy.deterministic(np.array(choice).reshape(horizon, num_states), num_actions)


def brute_force_optimum(mdp: TabularMdp, rewards=None) -> float:
    """Best value over all deterministic policies, by exhaustive search."""
    H, S, A = mdp.shape
    return max(evaluate_policy_direct(mdp, pi, rewards) for pi in enumerate_deterministic_policies(H, S, A))


@dataclass
class CheckReport:
    results: list = field(default_factory=list)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.results.append((name, bool(ok), detail))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.results)

    def lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else "")
                for name, ok, detail in self.results]


def run_invariant_suite(mdp: TabularMdp, probes: int = 20, rng_seed=0) -> CheckReport:
    """Occupancy normalization, dual consistency, VI optimality and enumeration checks."""
    report = CheckReport()
    H, S, A = mdp.shape
    rng = np.random.default_rng(rng_seed)
    rewards = mdp.rewards if mdp.rewards is not None else rng.uniform(size=(H, S, A))

    worst_norm, worst_dual = 0.0, 0.0
    policies = [random_policy(S, A, H, rng) for _ in range(probes)]
    for pi in policies:
        d = compute_occupancy(mdp, pi).values
        worst_norm = max(worst_norm, float(np.abs(d.sum(axis=(1, 2)) - 1).max()))
        worst_dual = max(worst_dual, abs(policy_value(compute_occupancy(mdp, pi), rewards)
                                         - evaluate_policy_direct(mdp, pi, rewards)))
    report.add("occupancy layers sum to 1", worst_norm <= OCC_TOL, f"max deviation {worst_norm:.3e}")
    report.add("dual value equals backward recursion", worst_dual <= 1e-8, f"max deviation {worst_dual:.3e}")

    vi_policy, vi_value = value_iteration(mdp, rewards)
    worst_probe = max(evaluate_policy_direct(mdp, pi, rewards) for pi in policies)
    report.add("value iteration beats random probes", vi_value >= worst_probe - 1e-9,
               f"VI {vi_value:.6f} vs best probe {worst_probe:.6f}")
    report.add("value iteration returns its own value",
               abs(evaluate_policy_direct(mdp, vi_policy, rewards) - vi_value) <= 1e-8)

    paths = S * A
    if paths ** H <= 10 ** 5:
        dev = float(np.abs(brute_force_occupancy(mdp, policies[0]) - compute_occupancy(mdp, policies[0]).values).max())
        report.add("occupancy matches trajectory enumeration", dev <= 1e-8, f"max deviation {dev:.3e}")
    else:
        report.add("occupancy matches trajectory enumeration", True, "skipped (instance too large)")

    if deterministic_policy_count(mdp) <= ENUM_LIMIT:
        best = brute_force_optimum(mdp, rewards)
        report.add("value iteration matches policy enumeration", vi_value >= best - 1e-9,
                   f"VI {vi_value:.6f} vs enumeration {best:.6f}")
    else:
        report.add("value iteration matches policy enumeration", True, "skipped (instance too large)")
    return report
