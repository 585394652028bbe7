"""
Reward-free exploration with RF-Express
=======================================

Explore without rewards until the bonus-based stopping rule certifies
that every policy can be evaluated to within epsilon / 2, then probe the
learned model.
"""

from tabular_ail import build_random_mdp
from tabular_ail.rfe import beta, rf_express, uniform_evaluation_error

mdp = build_random_mdp(4, 2, 4, rng_seed=0)

# %%
# The confidence radius beta grows like S log n.
for n in (1, 10, 100, 1000):
    print(f"beta(n={n:4d}) = {beta(n, 0.05, 4, 2, 4):.3f}")

# %%
# With the default constant (15 H^2) the stopping rule needs far more
# episodes than a desk budget, so the run hits its cap.
capped = rf_express(mdp, epsilon=0.5, delta=0.05, max_episodes=2000, rng_seed=0)
print("default scale: episodes", capped.episodes_used, "stopped early:", capped.stopped_early,
      f"statistic {capped.final_statistic:.2f}")

# %%
# A practical bonus scale stops naturally.
result = rf_express(mdp, epsilon=0.5, delta=0.05, max_episodes=10 ** 6, rng_seed=0, bonus_scale=0.003)
print("scale 0.003: episodes", result.episodes_used, "stopped early:", result.stopped_early)

# %%
# Uniform evaluation error of the learned model, probed with random
# (policy, reward) pairs.
err = uniform_evaluation_error(mdp, result.model, probe_count=200, rng_seed=1)
print(f"probed uniform evaluation error: {err:.4f} (target <= 0.25)")
