"""
BC, OAL and MB-TAIL on Reset Cliff
==================================

Reset Cliff punishes any deviation from the expert by dropping into an
absorbing state, so compounding errors matter. BC uses demonstrations
only. OAL and MB-TAIL also spend environment interactions.
"""

import numpy as np

from tabular_ail import (ImitationBudget, ResetCliffSpec, build_reset_cliff, evaluate_policy_direct,
                         reset_cliff_expert, run_bc, run_mbtail, run_oal)
from tabular_ail.ail_opt import OptimizerConfig
from tabular_ail.mdp import SamplingEnv

spec = ResetCliffSpec(num_states=10, num_actions=4, horizon=10, m=20)
mdp, expert = build_reset_cliff(spec), reset_cliff_expert(spec)
print("expert value:", evaluate_policy_direct(mdp, expert))

# %%
# The algorithms only see a sampling handle. The handle counts episodes,
# so the reported interaction count can be audited.
for budget in (0, 500, 2000):
    gaps = {"bc": [], "oal": [], "mbtail": []}
    for seed in range(3):
        b = ImitationBudget(m=20, interactions=budget)
        gaps["bc"].append(run_bc(SamplingEnv(mdp), expert, b, seed=seed).imitation_gap)
        gaps["oal"].append(run_oal(SamplingEnv(mdp), expert, b, iterations=200, seed=seed).imitation_gap)
        env = SamplingEnv(mdp)
        res = run_mbtail(env, expert, b, opt_cfg=OptimizerConfig(iterations=200), seed=seed, bonus_scale=0.1)
        assert res.interactions_used == env.episodes <= budget
        gaps["mbtail"].append(res.imitation_gap)
    print(f"budget {budget:5d}: " + "  ".join(f"{k} {np.mean(v):.2f}" for k, v in gaps.items()))
