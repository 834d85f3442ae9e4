"""Stochastic grid world with stains, fruits and a basket.

Cells are indexed ``y * size + x`` with ``y = 0`` the top row. The state
records the object layout of the episode, the robot cell, which stains are
cleaned and where each fruit is (floor, held, basket); its integer id is a
mixed-radix encoding of those fields.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from ..automata import Dfa
from ..core import AlphabetMode, RewardType, StepResult, SymbolEncoder
from .monitors import CLEAN, DOWN, LEFT, PICK, PUT, RIGHT, UP, RewardMonitor, lift, monitor_specs

FLOOR, HELD, BASKET = 0, 1, 2
MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}
SIDEWAYS = {UP: (LEFT, RIGHT), DOWN: (RIGHT, LEFT), LEFT: (DOWN, UP), RIGHT: (UP, DOWN)}
P_INTENDED = 0.6
P_SLIP = 0.2
P_SUCCESS = 0.6


@dataclass(frozen=True)
class RobotState:
    layout: tuple[int, ...]
    """Stain cells followed by fruit cells."""
    pos: int
    cleaned: tuple[bool, ...]
    fruits: tuple[int, ...]


class RobotWorldEnv:
    n_actions = 7

    def __init__(self, scheme: str = "R1", size: int = 5, n_stains: int = 2, n_fruits: int = 2,
                 episode_length: int = 60, start: tuple[int, int] = (0, 0),
                 basket: tuple[int, int] | None = None, reward_value: float = 100.0,
                 gamma: float = 0.999999, seed: int = 0,
                 alphabet_mode: AlphabetMode = AlphabetMode.ACTION_ONLY):
        self.scheme = scheme
        self.size = size
        self.n_cells = size * size
        self.n_stains = n_stains
        self.n_fruits = n_fruits
        self.episode_length = episode_length
        self.gamma = gamma
        bx, by = basket if basket is not None else (size - 1, size - 1)
        self.start = start[1] * size + start[0]
        self.basket = by * size + bx
        self.free_cells = [c for c in range(self.n_cells) if c not in (self.start, self.basket)]
        if len(self.free_cells) < n_stains + n_fruits:
            raise ValueError("grid too small for the requested objects")
        n_obj = n_stains + n_fruits
        self._radix_pos = self.n_cells
        self._radix_clean = 2 ** n_stains
        self._radix_fruit = 3 ** n_fruits
        self.n_states = self.n_cells ** n_obj * self.n_cells * self._radix_clean * self._radix_fruit
        self.encoder = SymbolEncoder(alphabet_mode, self.n_actions, self.n_states)
        self.n_symbols = self.encoder.n_symbols
        self.specs = monitor_specs(scheme, n_stains)
        self.monitors = [RewardMonitor(s.base, s.delay, reward_value) for s in self.specs]
        self.reward_types = [RewardType(i, reward_value, f"{scheme}.{i}") for i in range(len(self.specs))]
        self.rng = random.Random(seed)
        self.t = 0
        self.current: RobotState | None = None

    # -- encoding ---------------------------------------------------------

    def encode(self, st: RobotState) -> int:
        code = 0
        for c in reversed(st.layout):
            code = code * self.n_cells + c
        code = code * self._radix_pos + st.pos
        bits = 0
        for i, done in enumerate(st.cleaned):
            bits |= int(done) << i
        code = code * self._radix_clean + bits
        f = 0
        for status in reversed(st.fruits):
            f = f * 3 + status
        return code * self._radix_fruit + f

    def decode(self, sid: int) -> RobotState:
        sid, f = divmod(sid, self._radix_fruit)
        sid, bits = divmod(sid, self._radix_clean)
        sid, pos = divmod(sid, self._radix_pos)
        layout = []
        for _ in range(self.n_stains + self.n_fruits):
            sid, c = divmod(sid, self.n_cells)
            layout.append(c)
        fruits = []
        for _ in range(self.n_fruits):
            f, status = divmod(f, 3)
            fruits.append(status)
        cleaned = tuple(bool(bits >> i & 1) for i in range(self.n_stains))
        return RobotState(tuple(layout), pos, cleaned, tuple(fruits))

    # -- dynamics ---------------------------------------------------------

    def _move(self, pos: int, direction: int) -> int:
        x, y = pos % self.size, pos // self.size
        dx, dy = MOVES[direction]
        nx, ny = x + dx, y + dy
        if 0 <= nx < self.size and 0 <= ny < self.size:
            return ny * self.size + nx
        return pos

    def outcomes(self, st: RobotState, action: int) -> tuple[list[tuple[float, RobotState]], float]:
        """Successor distribution and Markovian reward of one action."""
        if action in MOVES:
            side_a, side_b = SIDEWAYS[action]
            out = [
                (P_INTENDED, self._with_pos(st, self._move(st.pos, action))),
                (P_SLIP, self._with_pos(st, self._move(st.pos, side_a))),
                (P_SLIP, self._with_pos(st, self._move(st.pos, side_b))),
            ]
            return out, -1.0
        ns = self.n_stains
        if action == CLEAN:
            for i in range(ns):
                if st.layout[i] == st.pos and not st.cleaned[i]:
                    cleaned = st.cleaned[:i] + (True,) + st.cleaned[i + 1 :]
                    return [(P_SUCCESS, RobotState(st.layout, st.pos, cleaned, st.fruits)),
                            (1 - P_SUCCESS, st)], 0.0
        elif action == PICK:
            for j in range(self.n_fruits):
                if st.layout[ns + j] == st.pos and st.fruits[j] == FLOOR:
                    fruits = st.fruits[:j] + (HELD,) + st.fruits[j + 1 :]
                    return [(P_SUCCESS, RobotState(st.layout, st.pos, st.cleaned, fruits)),
                            (1 - P_SUCCESS, st)], 0.0
        elif action == PUT:
            if st.pos == self.basket and HELD in st.fruits:
                fruits = tuple(BASKET if s == HELD else s for s in st.fruits)
                return [(P_SUCCESS, RobotState(st.layout, st.pos, st.cleaned, fruits)),
                        (1 - P_SUCCESS, st)], 0.0
        else:
            raise ValueError(f"action {action} out of range")
        return [(1.0, st)], -1.0

    @staticmethod
    def _with_pos(st: RobotState, pos: int) -> RobotState:
        return RobotState(st.layout, pos, st.cleaned, st.fruits)

    def terminal(self, st: RobotState) -> bool:
        return all(st.cleaned) and all(s == BASKET for s in st.fruits)

    # -- episode interface -----------------------------------------------

    def reset(self) -> int:
        self.t = 0
        for m in self.monitors:
            m.reset()
        layout = tuple(self.rng.sample(self.free_cells, self.n_stains + self.n_fruits))
        self.current = RobotState(layout, self.start, (False,) * self.n_stains, (FLOOR,) * self.n_fruits)
        self.state_id = self.encode(self.current)
        return self.state_id

    def step(self, action: int) -> StepResult:
        st = self.current
        outs, reward = self.outcomes(st, action)
        roll = self.rng.random()
        nxt = outs[-1][1]
        acc = 0.0
        for p, cand in outs:
            acc += p
            if roll < acc:
                nxt = cand
                break
        self.t += 1
        sid = self.encode(nxt)
        if nxt == st:
            sym = None
            fired: tuple[int, ...] = ()
        else:
            sym = self.encoder.encode(action, sid)
            fired = tuple(i for i, m in enumerate(self.monitors) if m.advance(action))
        self.current = nxt
        self.state_id = sid
        return StepResult(sid, fired, reward, sym, self.terminal(nxt))

    # model access for planners and oracles
    def symbol(self, state: int, action: int, next_state: int) -> int | None:
        if state == next_state:
            return None
        return self.encoder.encode(action, next_state)

    def is_terminal(self, state: int) -> bool:
        return self.terminal(self.decode(state))

    def transition_probs(self, state: int, action: int) -> list[tuple[int, float]]:
        outs, _ = self.outcomes(self.decode(state), action)
        merged: dict[int, float] = {}
        for p, st in outs:
            sid = self.encode(st)
            merged[sid] = merged.get(sid, 0.0) + p
        return sorted(merged.items())

    def markov_reward(self, state: int, action: int) -> float:
        return self.outcomes(self.decode(state), action)[1]

    def initial_distribution(self) -> list[tuple[int, float]]:
        """Uniform over object layouts; only practical on small grids."""
        from itertools import permutations

        layouts = list(permutations(self.free_cells, self.n_stains + self.n_fruits))
        p = 1.0 / len(layouts)
        fresh = ((False,) * self.n_stains, (FLOOR,) * self.n_fruits)
        return [(self.encode(RobotState(lay, self.start, *fresh)), p) for lay in layouts]

    def ground_truth_machines(self) -> list[Dfa]:
        return [lift(s.language(), self.encoder) for s in self.specs]

    def nmr_value(self, fired: Iterable[int]) -> float:
        return sum(self.reward_types[t].value for t in fired)
