"""Non-Markovian multi-armed bandit.

One MDP state; action ``i`` plays arm ``i + 1``. Every pull is an
effective event, and rewards come only from the hidden monitors.
"""

from __future__ import annotations

import random
from typing import Iterable

import numpy as np

from ..automata import Dfa
from ..core import AlphabetMode, RewardType, StepResult, SymbolEncoder
from .monitors import MonitorSpec, RewardMonitor, lift, monitor_specs


class EpisodeExhausted(RuntimeError):
    pass


class MabEnv:
    n_states = 1

    def __init__(self, scheme: str = "S1", n_arms: int = 3, steps_per_episode: int = 20,
                 reward_value: float = 10.0, gamma: float = 0.99, seed: int = 0,
                 alphabet_mode: AlphabetMode = AlphabetMode.ACTION_ONLY):
        if n_arms < 3:
            raise ValueError("the bandit schemes use arms 1-3")
        self.scheme = scheme
        self.n_actions = n_arms
        self.episode_length = steps_per_episode
        self.gamma = gamma
        self.encoder = SymbolEncoder(alphabet_mode, n_arms, 1)
        self.n_symbols = self.encoder.n_symbols
        specs = monitor_specs(scheme)
        if n_arms != 3:
            specs = [_widen(s, n_arms) for s in specs]
        self.specs = specs
        self.monitors = [RewardMonitor(s.base, s.delay, reward_value) for s in specs]
        self.reward_types = [RewardType(i, reward_value, f"{scheme}.{i}") for i in range(len(specs))]
        self.rng = random.Random(seed)
        self.t = 0

    def reset(self) -> int:
        self.t = 0
        for m in self.monitors:
            m.reset()
        return 0

    def step(self, action: int) -> StepResult:
        if self.t >= self.episode_length:
            raise EpisodeExhausted(f"episode already ran {self.episode_length} steps")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range")
        self.t += 1
        fired = tuple(i for i, m in enumerate(self.monitors) if m.advance(action))
        return StepResult(0, fired, 0.0, self.encoder.encode(action, 0), False)

    # model access for planners and oracles
    def symbol(self, state: int, action: int, next_state: int) -> int | None:
        return self.encoder.encode(action, next_state)

    def is_terminal(self, state: int) -> bool:
        return False

    def transition_probs(self, state: int, action: int) -> list[tuple[int, float]]:
        return [(0, 1.0)]

    def markov_reward(self, state: int, action: int) -> float:
        return 0.0

    def initial_distribution(self) -> list[tuple[int, float]]:
        return [(0, 1.0)]

    def ground_truth_machines(self) -> list[Dfa]:
        return [lift(s.language(), self.encoder) for s in self.specs]

    def nmr_value(self, fired: Iterable[int]) -> float:
        return sum(self.reward_types[t].value for t in fired)


def _widen(spec: MonitorSpec, n_arms: int) -> MonitorSpec:
    """Arms beyond the third break every pattern: they return to the start state."""
    base = spec.base
    extra = np.full((base.n_states, n_arms - 3), base.initial, dtype=np.int64)
    return MonitorSpec(Dfa(np.hstack([base.delta, extra]), base.initial, base.accepting), spec.delay)
