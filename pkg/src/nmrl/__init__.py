"""Reinforcement learning with non-Markovian rewards via learned reward machines."""

__version__ = "0.1.0"
