"""Tabular imitation learning with unknown transitions."""

from .mdp import (ConfigurationError, OccupancyMeasure, Policy, PolicyMixture, RewardWeights,
                  SamplingEnv, TabularMdp, Trajectory, TrajectoryDataset, compute_occupancy,
                  evaluate_policy_direct, l1_occupancy_distance, policy_value,
                  sample_trajectories, value_iteration)
from .envs import ResetCliffSpec, build_random_mdp, build_reset_cliff, reset_cliff_expert
from .algorithms import ALGORITHMS, ImitationBudget, ImitationResult, imitation_gap, run_bc, run_mbtail, run_oal

__version__ = "0.1.0"
