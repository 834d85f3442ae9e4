"""Tabular Q-learning over product states (MDP state, machine states).

A product state is the pair ``(s, qs)`` with ``qs`` a tuple holding one
state per tracked reward machine. Missing table rows are created on first
touch with their initial value: the summed value of every reward type whose
machine component is accepting, zero otherwise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .automata import Dfa, initial_machine_states
from .core import Episode

Key = tuple[int, tuple[int, ...]]


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 0.9
    end: float = 0.1
    rate: float = 1e-6

    def __call__(self, step: int) -> float:
        return max(self.end, self.start - self.rate * step)


class QTable:
    def __init__(self, n_actions: int, alpha: float = 0.1, gamma: float = 0.99,
                 machines: Sequence[Dfa] = (), values: Sequence[float] = ()):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 <= gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.machines = list(machines)
        self.values = list(values)
        self.table: dict[Key, list[float]] = {}

    def init_value(self, qs: tuple[int, ...]) -> float:
        return sum(v for d, q, v in zip(self.machines, qs, self.values) if q in d.accepting)

    def row(self, key: Key) -> list[float]:
        row = self.table.get(key)
        if row is None:
            row = [self.init_value(key[1])] * self.n_actions
            self.table[key] = row
        return row

    def peek(self, key: Key) -> list[float]:
        """Row values without creating the entry."""
        row = self.table.get(key)
        return list(row) if row is not None else [self.init_value(key[1])] * self.n_actions

    def update(self, key: Key, action: int, reward: float, next_key: Key, terminal: bool = False) -> float:
        row = self.row(key)
        target = reward if terminal else reward + self.gamma * max(self.row(next_key))
        row[action] += self.alpha * (target - row[action])
        return row[action]


def q_update(q: QTable, key: Key, action: int, reward: float, next_key: Key, terminal: bool = False) -> QTable:
    q.update(key, action, reward, next_key, terminal)
    return q


def greedy_action(row: Sequence[float], rng: random.Random) -> int:
    """Argmax with uniformly random tie-breaking."""
    best = max(row)
    ties = [a for a, v in enumerate(row) if v == best]
    return ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]


def select_action(q: QTable, key: Key, eps: float, rng: random.Random) -> int:
    if eps > 0 and rng.random() < eps:
        return rng.randrange(q.n_actions)
    return greedy_action(q.peek(key), rng)


def replay_episode(q: QTable, episode: Episode, machines: Sequence[Dfa], values: Sequence[float]) -> None:
    """Apply the Q update along a stored episode, tracking machine states afresh.

    The reward of each update is the one recorded: Markovian part plus the
    values of the reward types that fired.
    """
    rows = [d.rows for d in machines]
    qs = initial_machine_states(machines)
    for tr in episode.transitions:
        r = tr.reward
        for t in tr.fired:
            r += values[t]
        qs2 = qs if tr.symbol is None else tuple(rw[q][tr.symbol] for rw, q in zip(rows, qs))
        q.update((tr.state, qs), tr.action, r, (tr.next_state, qs2), tr.done)
        qs = qs2


def reinit_with_automata(episodes: Iterable[Episode], machines: Sequence[Dfa], values: Sequence[float],
                         n_actions: int, alpha: float = 0.1, gamma: float = 0.99,
                         max_episodes: int = 50_000) -> QTable:
    """Fresh table for new machines, warmed by replaying the most recent episodes, oldest first."""
    q = QTable(n_actions, alpha, gamma, machines, values)
    episodes = list(episodes)[-max_episodes:] if max_episodes else []
    for ep in episodes:
        replay_episode(q, ep, machines, values)
    return q


class QAgent:
    """Q-learning agent with the uniform interface the orchestrator drives."""

    def __init__(self, n_actions: int, values: Sequence[float], alpha: float = 0.1, gamma: float = 0.99,
                 machines: Sequence[Dfa] = (), replay_cap: int = 50_000):
        self.n_actions = n_actions
        self.values = list(values)
        self.alpha = alpha
        self.gamma = gamma
        self.replay_cap = replay_cap
        self.q = QTable(n_actions, alpha, gamma, machines, values)

    def begin_episode(self) -> None:
        pass

    def act(self, key: Key, t: int, eps: float, rng: random.Random) -> int:
        return select_action(self.q, key, eps, rng)

    def greedy(self, key: Key, t: int = 0, rng: random.Random | None = None) -> int:
        row = self.q.peek(key)
        if rng is None:
            return row.index(max(row))
        return greedy_action(row, rng)

    def observe(self, key: Key, action: int, res, next_key: Key) -> None:
        r = res.reward
        for t in res.fired:
            r += self.values[t]
        self.q.update(key, action, r, next_key, res.done)

    def set_machines(self, machines: Sequence[Dfa], episodes: Iterable[Episode] = ()) -> None:
        self.q = reinit_with_automata(episodes, machines, self.values, self.n_actions,
                                      self.alpha, self.gamma, self.replay_cap)


def greedy_eval(policy, env, machines: Sequence[Dfa], episodes: int = 20) -> float:
    """Mean discounted return of ``policy(key, t) -> action`` over full episodes.

    ``env`` should be a dedicated evaluation instance; machine states are
    tracked online from the effective symbols.
    """
    rows = [d.rows for d in machines]
    total = 0.0
    for _ in range(episodes):
        s = env.reset()
        qs = initial_machine_states(machines)
        disc = 1.0
        ret = 0.0
        for t in range(env.episode_length):
            a = policy((s, qs), t)
            res = env.step(a)
            ret += disc * (res.reward + env.nmr_value(res.fired))
            disc *= env.gamma
            if res.symbol is not None:
                qs = tuple(rw[q][res.symbol] for rw, q in zip(rows, qs))
            s = res.state
            if res.done:
                break
        total += ret
    return total / episodes
