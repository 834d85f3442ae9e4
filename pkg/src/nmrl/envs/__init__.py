"""Benchmark environments with hidden ground-truth reward monitors."""

from .mab import EpisodeExhausted, MabEnv
from .monitors import (
    MAB_SCHEMES,
    ROBOT_ACTIONS,
    ROBOT_SCHEMES,
    RewardMonitor,
    ground_truth_dfa,
    monitor_specs,
    suffix_pattern_dfa,
)
from .robot import RobotWorldEnv


def make_env(name: str, scheme: str, seed: int = 0, **params):
    if name == "mab":
        return MabEnv(scheme=scheme, seed=seed, **params)
    if name == "robot":
        return RobotWorldEnv(scheme=scheme, seed=seed, **params)
    raise ValueError(f"unknown environment {name!r} (expected 'mab' or 'robot')")


__all__ = [
    "EpisodeExhausted", "MabEnv", "RobotWorldEnv", "RewardMonitor", "make_env",
    "ground_truth_dfa", "monitor_specs", "suffix_pattern_dfa",
    "MAB_SCHEMES", "ROBOT_SCHEMES", "ROBOT_ACTIONS",
]
