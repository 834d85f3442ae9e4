"""Shared domain types: reward types, traces, trace storage, environments.

States, actions and event symbols are plain ints. A trace is the sequence
of event symbols an episode produced plus the steps at which each reward
type fired; labels are always per reward type.
"""

from __future__ import annotations

import enum
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Protocol, Sequence

Word = tuple[int, ...]


class Label(enum.Enum):
    POSITIVE = 1
    NEGATIVE = 0
    UNKNOWN = -1


class Markovian(enum.Enum):
    UNKNOWN = "unknown"
    MARKOVIAN = "markovian"
    NON_MARKOVIAN = "non_markovian"


@dataclass(frozen=True)
class RewardType:
    id: int
    value: float
    name: str = ""
    markovian_hint: Markovian = Markovian.UNKNOWN


class AlphabetMode(enum.Enum):
    ACTION_ONLY = "action-only"
    ACTION_STATE = "action+state"


MAX_SYMBOLS = 100_000


@dataclass(frozen=True)
class SymbolEncoder:
    """Maps an effective (action, resulting state) pair to an event symbol id."""

    mode: AlphabetMode
    n_actions: int
    n_states: int

    def __post_init__(self):
        if self.n_symbols > MAX_SYMBOLS:
            raise ValueError(
                f"{self.mode.value} alphabet would have {self.n_symbols} symbols; "
                "use action-only for large state spaces"
            )

    @property
    def n_symbols(self) -> int:
        if self.mode is AlphabetMode.ACTION_ONLY:
            return self.n_actions
        return self.n_actions * self.n_states

    def encode(self, action: int, next_state: int) -> int:
        if self.mode is AlphabetMode.ACTION_ONLY:
            return action
        return action * self.n_states + next_state

    def decode(self, sym: int) -> tuple[int, int | None]:
        if self.mode is AlphabetMode.ACTION_ONLY:
            return sym, None
        return divmod(sym, self.n_states)


class StepResult(NamedTuple):
    state: int
    fired: tuple[int, ...]
    reward: float
    """Markovian reward component."""
    symbol: int | None
    """Event symbol, ``None`` when the step had no effect and is filtered."""
    done: bool
    """Terminal state reached (time-limit truncation is not reported here)."""


class Environment(Protocol):
    """Episodic environment with hidden non-Markovian reward monitors.

    ``step`` is the only consumer of the environment's seeded random stream.
    """

    n_states: int
    n_actions: int
    n_symbols: int
    episode_length: int
    gamma: float
    reward_types: Sequence[RewardType]

    def reset(self) -> int: ...

    def step(self, action: int) -> StepResult: ...

    def symbol(self, state: int, action: int, next_state: int) -> int | None: ...

    def is_terminal(self, state: int) -> bool: ...

    def nmr_value(self, fired: Iterable[int]) -> float: ...


# -- traces -----------------------------------------------------------------

@dataclass
class Trace:
    symbols: list[int] = field(default_factory=list)
    rewards: list[tuple[int, int]] = field(default_factory=list)
    """(prefix length at firing, reward type) pairs."""
    closed: bool = False

    def __len__(self):
        return len(self.symbols)

    def word(self) -> Word:
        return tuple(self.symbols)

    def firings(self, rtype: int) -> tuple[int, ...]:
        return tuple(i for i, t in self.rewards if t == rtype)

    def label(self, rtype: int) -> Label:
        n = len(self.symbols)
        if n > 0 and any(i == n and t == rtype for i, t in self.rewards):
            return Label.POSITIVE
        return Label.NEGATIVE if self.closed else Label.UNKNOWN

    def prefix_label(self, rtype: int, length: int) -> Label:
        """Observed label of the prefix of the given length."""
        if length > len(self.symbols):
            return Label.UNKNOWN
        if length > 0 and (length, rtype) in self.rewards:
            return Label.POSITIVE
        return Label.NEGATIVE


def record_step(trace: Trace, sym: int | None, fired: Iterable[int]) -> Trace:
    """Append one environment step to an in-progress trace.

    Filtered steps (``sym is None``) leave the symbol sequence unchanged.
    """
    if sym is not None:
        trace.symbols.append(sym)
    n = len(trace.symbols)
    for t in fired:
        trace.rewards.append((n, t))
    return trace


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    fired: tuple[int, ...]
    symbol: int | None
    next_state: int
    done: bool


@dataclass
class Episode:
    """Full step record of one trial, kept for experience replay."""

    transitions: list[Transition] = field(default_factory=list)
    trace: Trace = field(default_factory=Trace)

    def add(self, tr: Transition) -> None:
        self.transitions.append(tr)
        record_step(self.trace, tr.symbol, tr.fired)


class TraceStore:
    """Labelled samples per reward type plus a replay buffer of episodes.

    Positive samples are every prefix that ends at a firing; they are kept
    indefinitely. Full traces that do not end at a firing enter a bounded
    FIFO of negatives. Identical words accumulate weight instead of being
    stored twice. Strict prefixes of stored words are implicitly negative
    unless they are themselves positive samples.
    """

    def __init__(self, n_types: int, neg_capacity: int = 1000, replay_capacity: int = 50_000):
        if neg_capacity < 1:
            raise ValueError("neg_capacity must be positive")
        self.n_types = n_types
        self.neg_capacity = neg_capacity
        self.positives: list[dict[Word, int]] = [{} for _ in range(n_types)]
        self.negatives: list[OrderedDict[Word, list]] = [OrderedDict() for _ in range(n_types)]
        self.replay: deque[Episode] = deque(maxlen=replay_capacity)
        self.episodes_closed = 0

    def close_episode(self, episode: Episode | Trace) -> None:
        if isinstance(episode, Episode):
            trace = episode.trace
            self.replay.append(episode)
        else:
            trace = episode
        trace.closed = True
        self.episodes_closed += 1
        word = trace.word()
        for t in range(self.n_types):
            fires = trace.firings(t)
            for i in sorted(set(fires)):
                key = word[:i]
                self.positives[t][key] = self.positives[t].get(key, 0) + 1
            if len(word) not in fires:
                self._add_negative(t, word, fires)

    def _add_negative(self, t: int, word: Word, fires: tuple[int, ...]) -> None:
        fifo = self.negatives[t]
        entry = fifo.get(word)
        if entry is not None:
            entry[0] += 1
            return
        fifo[word] = [1, frozenset(fires)]
        while len(fifo) > self.neg_capacity:
            fifo.popitem(last=False)

    def n_positive(self, t: int) -> int:
        return sum(self.positives[t].values())

    def n_positive_distinct(self, t: int) -> int:
        return len(self.positives[t])

    def total_weight(self, t: int) -> int:
        return sum(self.positives[t].values()) + sum(e[0] for e in self.negatives[t].values())

    def samples(self, t: int, max_neg_len: int | None = None) -> list[tuple[Word, bool, int]]:
        """Explicit ``(word, is_positive, weight)`` samples for one reward type.

        Negatives longer than ``max_neg_len`` are truncated (tail dropped).
        A negative that coincides with a positive sample, which truncation
        can produce, is skipped: positive evidence wins.
        """
        out: dict[tuple[Word, bool], int] = {}
        pos = self.positives[t]
        for w, n in pos.items():
            out[(w, True)] = out.get((w, True), 0) + n
        for w, (n, fires) in self.negatives[t].items():
            if max_neg_len is not None and len(w) > max_neg_len:
                w = w[:max_neg_len]
                if len(w) in fires:
                    continue
            if w in pos:
                continue
            out[(w, False)] = out.get((w, False), 0) + n
        return [(w, lab, n) for (w, lab), n in out.items()]

    def labelled_prefixes(self, t: int) -> Iterable[tuple[Word, bool]]:
        """Every stored word with its label, positives first."""
        for w in self.positives[t]:
            yield w, True
        for w, (_, fires) in self.negatives[t].items():
            yield w, False

    def max_negative_length(self, t: int) -> int:
        return max((len(w) for w in self.negatives[t]), default=0)

    def min_positive_length(self, t: int) -> int:
        return min((len(w) for w in self.positives[t]), default=0)


# -- Abbadingo sample files ---------------------------------------------------

def write_abbadingo(samples: Iterable[tuple[Word, bool, int]], n_symbols: int, out: IO[str]) -> None:
    """Abbadingo One layout; weights are emitted by repeating lines."""
    lines = []
    for word, positive, weight in samples:
        line = f"{1 if positive else 0} {len(word)}" + "".join(f" {s}" for s in word)
        lines.extend([line] * weight)
    out.write(f"{len(lines)} {n_symbols}\n")
    for line in lines:
        out.write(line + "\n")


def read_abbadingo(src: IO[str]) -> tuple[list[tuple[Word, bool, int]], int]:
    """Parse an Abbadingo file; repeated lines collapse into weights."""
    header = src.readline().split()
    if len(header) != 2:
        raise ValueError("Abbadingo header must be '<num_traces> <alphabet_size>'")
    n_traces, n_symbols = int(header[0]), int(header[1])
    counts: dict[tuple[Word, bool], int] = {}
    read = 0
    for raw in src:
        parts = raw.split()
        if not parts:
            continue
        label, length = int(parts[0]), int(parts[1])
        word = tuple(int(x) for x in parts[2 : 2 + length])
        if len(word) != length:
            raise ValueError(f"trace length mismatch on line {read + 2}")
        if label not in (0, 1):
            raise ValueError(f"unsupported label {label} on line {read + 2}")
        if any(not 0 <= s < n_symbols for s in word):
            raise ValueError(f"symbol outside alphabet on line {read + 2}")
        key = (word, label == 1)
        counts[key] = counts.get(key, 0) + 1
        read += 1
    if read != n_traces:
        raise ValueError(f"header announces {n_traces} traces, found {read}")
    return [(w, lab, n) for (w, lab), n in counts.items()], n_symbols
