"""
Episodic tabular MDPs
=====================

Build a small MDP, compute occupancy measures, check the two value forms
against each other, and solve it by value iteration.
"""

import numpy as np

from tabular_ail import (Policy, build_random_mdp, compute_occupancy, evaluate_policy_direct, policy_value,
                         sample_trajectories, value_iteration)

# %%
# A seeded random MDP: 3 states, 2 actions, horizon 4. Kernels and the
# initial distribution are flat-Dirichlet, rewards uniform on [0, 1].
mdp = build_random_mdp(3, 2, 4, rng_seed=0)
print("shape (H, S, A):", mdp.shape)

# %%
# Occupancy of the uniform policy. Each step is a distribution over (s, a).
uniform = Policy.uniform(4, 3, 2)
occ = compute_occupancy(mdp, uniform)
print("per-step mass:", occ.values.sum(axis=(1, 2)))

# %%
# The dual value sum_h <d_h, r_h> equals the backward-recursion value.
print("dual value  :", policy_value(occ, mdp.rewards))
print("direct value:", evaluate_policy_direct(mdp, uniform))

# %%
# Value iteration gives a deterministic optimal policy (ties go to the
# lowest action index).
expert, v_star = value_iteration(mdp)
print("optimal value:", v_star)
print("optimal actions per step:\n", expert.probs.argmax(axis=2))

# %%
# Monte-Carlo check: empirical state-action frequencies approach the
# occupancy measure.
data = sample_trajectories(mdp, expert, 20000, rng_seed=1)
empirical = data.state_action_counts(3, 2) / len(data)
print("max |empirical - exact|:", np.abs(empirical - compute_occupancy(mdp, expert).values).max())
