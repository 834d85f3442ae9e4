"""Ground-truth reward monitors for the bandit and robot schemes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..automata import Dfa, delayed, from_transitions, minimize
from ..core import SymbolEncoder

# robot action ids
UP, DOWN, LEFT, RIGHT, CLEAN, PICK, PUT = range(7)
ROBOT_ACTIONS = ("up", "down", "left", "right", "clean", "pick", "put")

MAB_SCHEMES = ("S1", "S2", "S3", "S4")
ROBOT_SCHEMES = ("R1", "R2", "R3", "R4")
DELAY = 3


class UnknownScheme(ValueError):
    pass


def suffix_pattern_dfa(pattern: tuple[int, ...], n_symbols: int) -> Dfa:
    """Minimal DFA for Σ*·pattern (Knuth-Morris-Pratt automaton).

    State i means the longest suffix of the input that is a prefix of
    ``pattern`` has length i; state ``len(pattern)`` accepts.
    """
    m = len(pattern)
    delta = np.zeros((m + 1, n_symbols), dtype=np.int64)
    for q in range(m + 1):
        for a in range(n_symbols):
            seen = pattern[:q] + (a,)
            k = min(m, len(seen))
            while k > 0 and seen[len(seen) - k :] != pattern[:k]:
                k -= 1
            delta[q, a] = k
    return Dfa(delta, 0, frozenset({m}))


def _count_then_pick(n_stains: int, n_symbols: int, latch: bool) -> Dfa:
    """Fires on a pick once ``n_stains`` effective cleans have happened.

    With ``latch`` only the first such pick fires; afterwards the machine
    sits in a non-accepting sink.
    """
    done, acc = n_stains, n_stains + 1
    trans = {}
    default = {}
    for k in range(n_stains):
        trans[(k, CLEAN)] = k + 1
        default[k] = k
    trans[(done, PICK)] = acc
    default[done] = done
    if latch:
        sink = acc + 1
        default[acc] = sink
        default[sink] = sink
        n = acc + 2
    else:
        trans[(acc, PICK)] = acc
        default[acc] = done
        n = acc + 1
    return from_transitions(n, n_symbols, trans, [acc], default=default)


@dataclass(frozen=True)
class MonitorSpec:
    base: Dfa
    delay: int = 0

    def language(self) -> Dfa:
        """The learner-facing target: the delay folded into the machine."""
        return minimize(delayed(self.base, self.delay))


def monitor_specs(scheme: str, n_stains: int = 2) -> list[MonitorSpec]:
    """Per-reward-type monitor definitions over the action-only alphabet."""
    if scheme in MAB_SCHEMES:
        s1 = suffix_pattern_dfa((0, 0, 0, 0, 2), 3)   # arm 1 four times, then arm 3
        s3 = suffix_pattern_dfa((2, 2, 1), 3)         # arm 3 twice, then arm 2
        return {
            "S1": [MonitorSpec(s1)],
            "S2": [MonitorSpec(s1, DELAY)],
            "S3": [MonitorSpec(s3)],
            "S4": [MonitorSpec(s1), MonitorSpec(s3)],
        }[scheme]
    if scheme in ROBOT_SCHEMES:
        k = len(ROBOT_ACTIONS)
        r1 = _count_then_pick(n_stains, k, latch=False)
        r2 = _count_then_pick(n_stains, k, latch=True)
        r3 = suffix_pattern_dfa((RIGHT, RIGHT, PICK), k)
        return {
            "R1": [MonitorSpec(r1)],
            "R2": [MonitorSpec(r2, DELAY)],
            "R3": [MonitorSpec(r3)],
            "R4": [MonitorSpec(r1), MonitorSpec(r3)],
        }[scheme]
    raise UnknownScheme(scheme)


def lift(dfa: Dfa, encoder: SymbolEncoder) -> Dfa:
    """Re-express an action-only machine over the encoder's alphabet."""
    if encoder.n_symbols == dfa.n_symbols:
        return dfa
    actions = np.array([encoder.decode(s)[0] for s in range(encoder.n_symbols)], dtype=np.int64)
    return Dfa(dfa.delta[:, actions], dfa.initial, dfa.accepting)


def ground_truth_dfa(scheme: str, rtype: int = 0, n_stains: int = 2,
                     encoder: SymbolEncoder | None = None) -> Dfa:
    """Minimal monitor DFA for one reward type of a scheme."""
    specs = monitor_specs(scheme, n_stains)
    if not 0 <= rtype < len(specs):
        raise ValueError(f"scheme {scheme} has {len(specs)} reward type(s)")
    d = specs[rtype].language()
    return lift(d, encoder) if encoder is not None else d


@dataclass
class RewardMonitor:
    """Runs the undelayed machine and emits firings ``delay`` symbols late.

    While a delayed firing is pending, symbols are consumed without moving
    the machine; once it fires, the machine continues from its accepting
    state.
    """

    dfa: Dfa
    delay: int = 0
    value: float = 1.0
    state: int = field(init=False)
    countdown: int = field(init=False, default=0)

    def __post_init__(self):
        self.reset()

    def reset(self) -> None:
        self.state = self.dfa.initial
        self.countdown = 0

    def advance(self, sym: int) -> bool:
        if self.countdown:
            self.countdown -= 1
            return self.countdown == 0
        self.state = self.dfa.rows[self.state][sym]
        if self.state in self.dfa.accepting:
            if self.delay == 0:
                return True
            self.countdown = self.delay
        return False
