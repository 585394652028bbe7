"""
Imitation through a bisimulation abstraction
============================================

Duplicate every Reset Cliff state k times. The copies are bisimilar, so
MB-TAIL can explore, estimate and match on the small abstract space and
lift the result back.
"""

import numpy as np

from tabular_ail import ImitationBudget, ResetCliffSpec, build_reset_cliff, reset_cliff_expert, run_mbtail
from tabular_ail.abstraction import (StateAbstraction, build_abstract_mdp, check_bisimulation, k_duplicate,
                                     run_mbtail_abstract)
from tabular_ail.ail_opt import OptimizerConfig

spec = ResetCliffSpec(num_states=4, num_actions=3, horizon=6, m=10)
big, abstraction, expert = k_duplicate(build_reset_cliff(spec), 3, reset_cliff_expert(spec))
print("concrete states:", big.num_states, " abstract states:", abstraction.num_abstract)

# %%
# The bisimulation check compares rewards, block transition kernels and
# expert actions inside each block.
print(check_bisimulation(big, expert, abstraction))
bad = StateAbstraction(np.tile(np.array([0] * 3 + [1] * 3 + [2] * 3 + [2] * 3), (6, 1)), 3)
print(check_bisimulation(big, expert, bad))

# %%
# The abstract MDP built from the blocks.
print("abstract MDP shape:", build_abstract_mdp(big, abstraction).shape)

# %%
# Paired comparison at the same budget and seeds.
budget, cfg = ImitationBudget(10, 300), OptimizerConfig(iterations=100)
conc, abst = [], []
for seed in range(10):
    conc.append(run_mbtail(big, expert, budget, opt_cfg=cfg, seed=seed, bonus_scale=0.1).imitation_gap)
    abst.append(run_mbtail_abstract(big, expert, abstraction, budget, opt_cfg=cfg, seed=seed, bonus_scale=0.1,
                                    true_mdp=big).imitation_gap)
print(f"mean gap concrete {np.mean(conc):.3f}  abstract {np.mean(abst):.3f}")
