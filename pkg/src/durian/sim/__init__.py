"""Synthetic environment, toy policy and training loop."""

from durian.sim.env import SyntheticTask, TaskDims, generate_task, tilted_spectrum
from durian.sim.experiment import run_comparison, run_experiment
from durian.sim.policy import ToyPolicy, rollout
from durian.sim.stats import ExtremeStats, analyze_reward_records, extreme_stats
from durian.sim.trainer import TrainerState, train_step

__all__ = [
    "ExtremeStats", "SyntheticTask", "TaskDims", "ToyPolicy", "TrainerState",
    "analyze_reward_records", "extreme_stats", "generate_task", "rollout",
    "run_comparison", "run_experiment", "tilted_spectrum", "train_step",
]
