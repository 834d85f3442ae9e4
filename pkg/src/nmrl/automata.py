"""Deterministic finite automata used as reward machines.

A :class:`Dfa` is total over a dense integer alphabet ``0..n_symbols-1``.
Learned machines and ground-truth monitors share this representation, and
the product state of an MDP state with one machine state per reward type
is tracked with :func:`product_step`.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Word = tuple[int, ...]


class AutomatonError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dfa:
    """Total DFA with transition table ``delta[state, symbol]``."""

    delta: np.ndarray
    initial: int
    accepting: frozenset[int]
    _rows: list[list[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        delta = np.array(self.delta, dtype=np.int64)
        if delta.ndim != 2 or delta.shape[0] == 0:
            raise AutomatonError("delta must be a non-empty 2-d table")
        n = delta.shape[0]
        if delta.size and (delta.min() < 0 or delta.max() >= n):
            raise AutomatonError("delta must be total over the declared states")
        if not 0 <= self.initial < n:
            raise AutomatonError(f"initial state {self.initial} out of range")
        acc = frozenset(int(q) for q in self.accepting)
        if any(not 0 <= q < n for q in acc):
            raise AutomatonError("accepting states out of range")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "accepting", acc)
        object.__setattr__(self, "_rows", delta.tolist())

    @property
    def n_states(self) -> int:
        return self.delta.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.delta.shape[1]

    @property
    def rows(self) -> list[list[int]]:
        """Transition table as nested lists, for tight Python loops."""
        return self._rows

    def step(self, q: int, sym: int) -> int:
        if not 0 <= sym < self.n_symbols:
            raise AutomatonError(f"symbol {sym} outside alphabet of size {self.n_symbols}")
        return self._rows[q][sym]

    def run(self, word: Iterable[int], start: int | None = None) -> int:
        q = self.initial if start is None else start
        rows = self._rows
        for sym in word:
            q = rows[q][sym]
        return q

    def trajectory(self, word: Iterable[int]) -> list[int]:
        """States visited reading ``word``, including the initial one."""
        q = self.initial
        out = [q]
        rows = self._rows
        for sym in word:
            q = rows[q][sym]
            out.append(q)
        return out

    def accepts(self, word: Iterable[int]) -> bool:
        return self.run(word) in self.accepting

    def is_accepting(self, q: int) -> bool:
        return q in self.accepting

    def __eq__(self, other):
        if not isinstance(other, Dfa):
            return NotImplemented
        return (
            self.initial == other.initial
            and self.accepting == other.accepting
            and self.delta.shape == other.delta.shape
            and bool(np.array_equal(self.delta, other.delta))
        )

    def __hash__(self):
        return hash((self.initial, self.accepting, self.delta.tobytes(), self.delta.shape))

    def __repr__(self):
        return (
            f"Dfa(n_states={self.n_states}, n_symbols={self.n_symbols}, "
            f"accepting={sorted(self.accepting)})"
        )

    # -- serialization --------------------------------------------------

    def to_text(self) -> str:
        """Tabular format: header, one transition row per state, accepting line.

        The initial state is always renumbered to 0 on output.
        """
        d = self if self.initial == 0 else _renumber(self, _initial_first(self))
        lines = [f"{d.n_states} {d.n_symbols}"]
        lines += [" ".join(str(x) for x in row) for row in d.rows]
        lines.append("accepting " + " ".join(str(q) for q in sorted(d.accepting)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Dfa":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        try:
            n, k = (int(x) for x in lines[0].split())
            rows = [[int(x) for x in ln.split()] for ln in lines[1 : 1 + n]]
            acc_line = lines[1 + n].split()
        except (IndexError, ValueError) as exc:
            raise AutomatonError("malformed DFA text") from exc
        if acc_line[0] != "accepting" or any(len(r) != k for r in rows):
            raise AutomatonError("malformed DFA text")
        return cls(np.array(rows, dtype=np.int64).reshape(n, k), 0, frozenset(int(x) for x in acc_line[1:]))

    def to_dot(self, symbol_names: Sequence[str] | None = None) -> str:
        names = symbol_names or [str(a) for a in range(self.n_symbols)]
        out = ["digraph dfa {", "  rankdir=LR;", '  __start [shape=point];']
        for q in range(self.n_states):
            shape = "doublecircle" if q in self.accepting else "circle"
            out.append(f"  q{q} [shape={shape}];")
        out.append(f"  __start -> q{self.initial};")
        for q in range(self.n_states):
            grouped: dict[int, list[str]] = {}
            for a in range(self.n_symbols):
                grouped.setdefault(self._rows[q][a], []).append(names[a])
            for dst, labels in grouped.items():
                out.append(f'  q{q} -> q{dst} [label="{",".join(labels)}"];')
        out.append("}")
        return "\n".join(out) + "\n"


def trivial_dfa(n_symbols: int, accepting: bool = False) -> Dfa:
    """Single-state machine: the 'vanilla' augmentation."""
    return Dfa(np.zeros((1, n_symbols), dtype=np.int64), 0, frozenset({0} if accepting else ()))


def from_transitions(n_states: int, n_symbols: int, trans: dict[tuple[int, int], int],
                     accepting: Iterable[int], default: dict[int, int] | None = None,
                     initial: int = 0) -> Dfa:
    """Build a DFA from a sparse transition dict.

    Missing entries fall back to ``default[state]`` when given, otherwise to
    the initial state.
    """
    delta = np.empty((n_states, n_symbols), dtype=np.int64)
    for q in range(n_states):
        fallback = initial if default is None else default.get(q, initial)
        for a in range(n_symbols):
            delta[q, a] = trans.get((q, a), fallback)
    return Dfa(delta, initial, frozenset(accepting))


def product_step(machine_states: tuple[int, ...], sym: int | None, dfas: Sequence[Dfa]) -> tuple[int, ...]:
    """Advance every machine component on one event symbol.

    A filtered step (``sym is None``) leaves all components unchanged.
    """
    if sym is None:
        return machine_states
    return tuple(d.rows[q][sym] for q, d in zip(machine_states, dfas))


def initial_machine_states(dfas: Sequence[Dfa]) -> tuple[int, ...]:
    return tuple(d.initial for d in dfas)


# -- reachability, minimization, equivalence ------------------------------

def reachable(d: Dfa) -> list[int]:
    """Reachable states in breadth-first order (symbols ascending)."""
    seen = {d.initial}
    order = [d.initial]
    queue = deque(order)
    rows = d.rows
    while queue:
        q = queue.popleft()
        for r in rows[q]:
            if r not in seen:
                seen.add(r)
                order.append(r)
                queue.append(r)
    return order


def _initial_first(d: Dfa) -> list[int]:
    order = [d.initial] + [q for q in range(d.n_states) if q != d.initial]
    return order


def _renumber(d: Dfa, order: list[int]) -> Dfa:
    index = {q: i for i, q in enumerate(order)}
    delta = np.array([[index[r] for r in d.rows[q]] for q in order], dtype=np.int64)
    return Dfa(delta, 0, frozenset(index[q] for q in d.accepting if q in index))


def minimize(d: Dfa) -> Dfa:
    """Language-equivalent minimal DFA, states numbered in BFS order.

    Unreachable states are dropped, then Moore partition refinement merges
    indistinguishable states.
    """
    states = reachable(d)
    rows = d.rows
    block = {q: (1 if q in d.accepting else 0) for q in states}
    n_blocks = len(set(block.values()))
    while True:
        sigs: dict[tuple, int] = {}
        new_block = {}
        for q in states:
            sig = (block[q], *(block[r] for r in rows[q]))
            new_block[q] = sigs.setdefault(sig, len(sigs))
        block = new_block
        if len(sigs) == n_blocks:
            break
        n_blocks = len(sigs)

    # canonical numbering: BFS over blocks from the initial block
    rep: dict[int, int] = {}
    for q in states:
        rep.setdefault(block[q], q)
    start = block[d.initial]
    order = [start]
    index = {start: 0}
    queue = deque([start])
    while queue:
        b = queue.popleft()
        for r in rows[rep[b]]:
            nb = block[r]
            if nb not in index:
                index[nb] = len(order)
                order.append(nb)
                queue.append(nb)
    delta = np.array([[index[block[r]] for r in rows[rep[b]]] for b in order], dtype=np.int64)
    acc = frozenset(index[b] for b in order if rep[b] in d.accepting)
    return Dfa(delta, 0, acc)


def equivalent(d1: Dfa, d2: Dfa) -> Word | None:
    """Shortest word on which ``d1`` and ``d2`` disagree, or ``None``.

    Breadth-first search over the synchronous product, symbols in ascending
    order, so the returned counterexample is shortlex-minimal.
    """
    if d1.n_symbols != d2.n_symbols:
        raise AutomatonError("alphabet sizes differ")
    start = (d1.initial, d2.initial)
    parent: dict[tuple[int, int], tuple[tuple[int, int], int] | None] = {start: None}
    queue = deque([start])
    r1, r2 = d1.rows, d2.rows
    while queue:
        p = queue.popleft()
        if (p[0] in d1.accepting) != (p[1] in d2.accepting):
            word = []
            node = p
            while parent[node] is not None:
                node, a = parent[node]
                word.append(a)
            return tuple(reversed(word))
        for a in range(d1.n_symbols):
            nxt = (r1[p[0]][a], r2[p[1]][a])
            if nxt not in parent:
                parent[nxt] = (p, a)
                queue.append(nxt)
    return None


def same_language(d1: Dfa, d2: Dfa) -> bool:
    return equivalent(d1, d2) is None


def delayed(d: Dfa, delay: int) -> Dfa:
    """Postpone acceptance by ``delay`` symbols.

    Every transition into an accepting state is rerouted through a chain of
    ``delay`` non-accepting states that advance on any symbol; the chain ends
    in the original accepting state. Input read inside the chain is ignored.
    """
    if delay <= 0:
        return d
    if d.initial in d.accepting:
        raise AutomatonError("cannot delay a machine whose initial state accepts")
    n, k = d.n_states, d.n_symbols
    acc = sorted(d.accepting)
    chain_start = {}
    rows = [list(r) for r in d.rows]
    for f in acc:
        first = len(rows)
        chain_start[f] = first
        for i in range(delay):
            nxt = first + i + 1 if i + 1 < delay else f
            rows.append([nxt] * k)
    for q in range(n):
        rows[q] = [chain_start.get(r, r) for r in rows[q]]
    return minimize(Dfa(np.array(rows, dtype=np.int64), d.initial, frozenset(acc)))


# -- random machines for testing learners ---------------------------------

def random_dfa(n_states: int, n_symbols: int, rng: random.Random, p_accept: float = 0.5) -> Dfa:
    """Random DFA whose states are all reachable (a random spanning tree is laid first)."""
    delta = [[-1] * n_symbols for _ in range(n_states)]
    free = [(0, a) for a in range(n_symbols)]
    for q in range(1, n_states):
        src, a = free.pop(rng.randrange(len(free)))
        delta[src][a] = q
        free.extend((q, b) for b in range(n_symbols))
    for src, a in free:
        delta[src][a] = rng.randrange(n_states)
    acc = frozenset(q for q in range(n_states) if rng.random() < p_accept)
    return Dfa(np.array(delta, dtype=np.int64).reshape(n_states, n_symbols), 0, acc)


def random_minimal_dfa(n_states: int, n_symbols: int, rng: random.Random, max_tries: int = 10_000) -> Dfa:
    """Rejection-sample a DFA whose minimal form has exactly ``n_states`` states."""
    for _ in range(max_tries):
        d = minimize(random_dfa(n_states, n_symbols, rng))
        if d.n_states == n_states:
            return d
    raise AutomatonError(f"no minimal {n_states}-state DFA found in {max_tries} tries")
