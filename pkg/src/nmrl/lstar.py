"""Angluin-style exact learning with access words and test words.

The learner is a generator: it yields :class:`MembershipQuery` and
:class:`EquivalenceQuery` objects and receives the answers via ``send``.
That lets an environment-backed teacher answer queries over many episodes
while several learners (one per reward type) make progress side by side.
:func:`drive` runs any of these generators against a synchronous teacher.

Counterexamples are processed by binary search over the split points of
the counterexample (Rivest and Schapire), adding one access word and one
test word per counterexample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Generator, NamedTuple, Protocol

from .automata import Dfa, equivalent

Word = tuple[int, ...]


class MembershipQuery(NamedTuple):
    word: Word


class EquivalenceQuery(NamedTuple):
    hypothesis: Dfa


Query = MembershipQuery | EquivalenceQuery
Learner = Generator[Query, object, object]


class InconsistentTeacher(RuntimeError):
    """Teacher answers contradict each other or the membership cache."""


class TableNotClosed(RuntimeError):
    pass


class QueryBudgetExhausted(RuntimeError):
    pass


class Teacher(Protocol):
    def member(self, word: Word) -> bool: ...

    def equivalence(self, hypothesis: Dfa) -> Word | None: ...


class DfaTeacher:
    """Perfect teacher for a known target: exact membership, product-BFS equivalence."""

    def __init__(self, target: Dfa):
        self.target = target

    def member(self, word: Word) -> bool:
        return self.target.accepts(word)

    def equivalence(self, hypothesis: Dfa) -> Word | None:
        return equivalent(self.target, hypothesis)


@dataclass
class ObservationTable:
    n_symbols: int
    access: list[Word] = field(default_factory=lambda: [()])
    tests: list[Word] = field(default_factory=lambda: [()])
    cache: dict[Word, bool] = field(default_factory=dict)

    def member(self, word: Word):
        if word in self.cache:
            return self.cache[word]
        ans = yield MembershipQuery(word)
        ans = bool(ans)
        self.cache[word] = ans
        return ans

    def row(self, word: Word):
        out = []
        for u in self.tests:
            out.append((yield from self.member(word + u)))
        return tuple(out)

    def t_equivalent(self, v: Word, w: Word):
        for u in self.tests:
            if (yield from self.member(v + u)) != (yield from self.member(w + u)):
                return False
        return True

    def close(self):
        """Add one-symbol extensions of access words until the table is closed."""
        changed = True
        while changed:
            changed = False
            rows = set()
            for q in self.access:
                rows.add((yield from self.row(q)))
            for q in list(self.access):
                for a in range(self.n_symbols):
                    ext = q + (a,)
                    r = yield from self.row(ext)
                    if r not in rows:
                        self.access.append(ext)
                        rows.add(r)
                        changed = True
        return self

    def _cached_row(self, word: Word) -> tuple[bool, ...]:
        try:
            return tuple(self.cache[word + u] for u in self.tests)
        except KeyError as exc:
            raise TableNotClosed(f"membership of {exc.args[0]} not yet known") from None

    def hypothesis(self) -> Dfa:
        """States are access words; ε is initial; accepting iff the access word is in L."""
        import numpy as np

        index: dict[tuple[bool, ...], int] = {}
        for i, q in enumerate(self.access):
            r = self._cached_row(q)
            if r in index:
                raise InconsistentTeacher(f"access words {self.access[index[r]]} and {q} are not separated")
            index[r] = i
        delta = np.empty((len(self.access), self.n_symbols), dtype=np.int64)
        for i, q in enumerate(self.access):
            for a in range(self.n_symbols):
                r = self._cached_row(q + (a,))
                if r not in index:
                    raise TableNotClosed(f"no access word matches {q + (a,)}")
                delta[i, a] = index[r]
        acc = frozenset(i for i, q in enumerate(self.access) if self.cache[q])
        return Dfa(delta, 0, acc)

    def process_counterexample(self, w: Word, hyp: Dfa):
        """Binary search for adjacent split points whose substituted words disagree.

        Returns the new access word and test word; raises
        :class:`InconsistentTeacher` if ``w`` is not actually misclassified.
        """
        states = hyp.trajectory(w)
        n = len(w)

        def alpha(i):
            return (yield from self.member(self.access[states[i]] + w[i:]))

        lo_val = yield from alpha(0)
        hi_val = yield from alpha(n)
        if lo_val == hi_val:
            raise InconsistentTeacher(f"{w} is not a counterexample under cached answers")
        lo, hi = 0, n
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if (yield from alpha(mid)) == lo_val:
                lo = mid
            else:
                hi = mid
        q = self.access[states[lo]] + (w[lo],)
        t = w[lo + 1 :]
        if t in self.tests and q in self.access:
            raise InconsistentTeacher(f"counterexample {w} yields no new distinction")
        return q, t

    def add(self, q: Word, t: Word) -> None:
        if q not in self.access:
            self.access.append(q)
        if t not in self.tests:
            self.tests.append(t)


def lstar(n_symbols: int, table: ObservationTable | None = None) -> Learner:
    """The learner loop; returns the hypothesis the teacher accepts."""
    tbl = table if table is not None else ObservationTable(n_symbols)
    while True:
        yield from tbl.close()
        hyp = tbl.hypothesis()
        cex = yield EquivalenceQuery(hyp)
        if cex is None:
            return hyp
        q, t = yield from tbl.process_counterexample(tuple(cex), hyp)
        tbl.add(q, t)


def drive(gen, teacher: Teacher, on_query: Callable[[Query, object], None] | None = None):
    """Run a learner generator to completion against a synchronous teacher."""
    try:
        query = next(gen)
        while True:
            if isinstance(query, MembershipQuery):
                ans = teacher.member(query.word)
            else:
                ans = teacher.equivalence(query.hypothesis)
            if on_query is not None:
                on_query(query, ans)
            query = gen.send(ans)
    except StopIteration as stop:
        return stop.value


# synchronous wrappers over the generator steps

def t_equivalent(v: Word, w: Word, tbl: ObservationTable, teacher: Teacher) -> bool:
    return drive(tbl.t_equivalent(v, w), teacher)


def close_table(tbl: ObservationTable, teacher: Teacher) -> ObservationTable:
    return drive(tbl.close(), teacher)


def build_hypothesis(tbl: ObservationTable) -> Dfa:
    return tbl.hypothesis()


def process_counterexample(w: Word, tbl: ObservationTable, hyp: Dfa, teacher: Teacher) -> tuple[Word, Word]:
    return drive(tbl.process_counterexample(tuple(w), hyp), teacher)


@dataclass
class LStarResult:
    dfa: Dfa
    provisional: bool
    membership_queries: int
    equivalence_queries: int
    log: list[str]


def format_query(query: Query, answer) -> str:
    if isinstance(query, MembershipQuery):
        return f"M {' '.join(map(str, query.word)) or 'ε'} -> {int(bool(answer))}"
    if answer is None:
        return f"E {query.hypothesis.n_states} -> yes"
    return f"E {query.hypothesis.n_states} -> {' '.join(map(str, answer)) or 'ε'}"


def lstar_run(teacher: Teacher, n_symbols: int, max_membership: int | None = None,
              keep_log: bool = False) -> LStarResult:
    """Learn until the teacher approves a hypothesis or the query budget runs out.

    On budget exhaustion the last hypothesis offered is returned with
    ``provisional=True`` (a one-state rejecting machine if none was offered).
    """
    from .automata import trivial_dfa

    counts = {"m": 0, "e": 0}
    log: list[str] = []
    last = [trivial_dfa(n_symbols)]

    class Counting:
        def member(self, word):
            if max_membership is not None and counts["m"] >= max_membership:
                raise QueryBudgetExhausted
            counts["m"] += 1
            return teacher.member(word)

        def equivalence(self, hyp):
            counts["e"] += 1
            last[0] = hyp
            return teacher.equivalence(hyp)

    def on_query(q, a):
        if keep_log:
            log.append(format_query(q, a))

    try:
        dfa = drive(lstar(n_symbols), Counting(), on_query)
        provisional = False
    except QueryBudgetExhausted:
        dfa, provisional = last[0], True
    return LStarResult(dfa, provisional, counts["m"], counts["e"], log)
