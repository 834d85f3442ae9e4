"""Passive DFA inference by evidence-driven state merging (red-blue search).

A prefix tree acceptor is built from weighted labelled words. Merging a
blue state into a red one folds the blue subtree into the red automaton;
the fold fails if a class would hold both positive and negative evidence.
Every fold mutation goes through an undo log, so scoring a candidate and
rejecting an incompatible merge leave the state untouched.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .automata import Dfa, minimize
from .core import TraceStore

log = logging.getLogger(__name__)

Word = tuple[int, ...]
Sample = tuple[Word, bool, int]


class InconsistentSample(ValueError):
    """The same word is labelled both positive and negative."""


@dataclass
class Pta:
    n_symbols: int
    children: list[list[int]]
    pos: list[int]
    neg: list[int]
    words: list[Word]

    @property
    def n_nodes(self) -> int:
        return len(self.children)

    def label(self, node: int) -> bool | None:
        if self.pos[node]:
            return True
        if self.neg[node]:
            return False
        return None


def build_pta(samples: Iterable[Sample], n_symbols: int, prefix_negative: bool = True) -> Pta:
    """Prefix tree acceptor with weighted evidence, nodes in shortlex order.

    With ``prefix_negative`` every strict prefix of a sample word that is
    not itself a positive sample counts as negative evidence, weighted like
    the word that passes through it (rewards had not fired there).
    """
    trie: dict[Word, list[int]] = {(): [0, 0, 0]}  # pos, neg, pass-through
    for word, positive, weight in samples:
        word = tuple(word)
        if weight < 1:
            raise ValueError("sample weights must be >= 1")
        if any(not 0 <= s < n_symbols for s in word):
            raise ValueError(f"symbol outside alphabet in {word}")
        for i in range(len(word)):
            node = trie.setdefault(word[:i], [0, 0, 0])
            node[2] += weight
        node = trie.setdefault(word, [0, 0, 0])
        node[0 if positive else 1] += weight
    for word, (p, n, _) in trie.items():
        if p and n:
            raise InconsistentSample(f"word {word} labelled both positive and negative")

    order = sorted(trie, key=lambda w: (len(w), w))
    index = {w: i for i, w in enumerate(order)}
    children = [[-1] * n_symbols for _ in order]
    pos, neg = [0] * len(order), [0] * len(order)
    for i, w in enumerate(order):
        if w:
            children[index[w[:-1]]][w[-1]] = i
        p, n, through = trie[w]
        pos[i] = p
        neg[i] = n + (through if prefix_negative and not p else 0)
    return Pta(n_symbols, children, pos, neg, order)


class MergeState:
    """Union-find partition of PTA nodes with red/blue colouring."""

    def __init__(self, pta: Pta, score_mode: str = "pairs"):
        if score_mode not in ("pairs", "evidence"):
            raise ValueError(f"unknown score mode {score_mode!r}")
        self.pta = pta
        self.n_symbols = pta.n_symbols
        self.trans = [list(c) for c in pta.children]
        self.pos = list(pta.pos)
        self.neg = list(pta.neg)
        self.rep = list(range(pta.n_nodes))
        self.red: list[int] = [0]
        self.score_mode = score_mode
        self._undo: list[tuple[list, int, int]] = []

    def find(self, x: int) -> int:
        rep = self.rep
        while rep[x] != x:
            x = rep[x]
        return x

    def snapshot(self) -> tuple:
        return (tuple(map(tuple, self.trans)), tuple(self.pos), tuple(self.neg),
                tuple(self.rep), tuple(self.red))

    def copy(self) -> "MergeState":
        other = MergeState.__new__(MergeState)
        other.pta = self.pta
        other.n_symbols = self.n_symbols
        other.trans = [list(t) for t in self.trans]
        other.pos = list(self.pos)
        other.neg = list(self.neg)
        other.rep = list(self.rep)
        other.red = list(self.red)
        other.score_mode = self.score_mode
        other._undo = []
        return other

    def blue(self) -> list[int]:
        red = set(self.red)
        out = set()
        for r in self.red:
            for c in self.trans[r]:
                if c >= 0:
                    c = self.find(c)
                    if c not in red:
                        out.add(c)
        return sorted(out)

    def _set(self, arr: list, i: int, value: int) -> None:
        self._undo.append((arr, i, arr[i]))
        arr[i] = value

    def _rollback(self, mark: int) -> None:
        undo = self._undo
        while len(undo) > mark:
            arr, i, old = undo.pop()
            arr[i] = old

    def _fold(self, red: int, blue: int) -> int | None:
        """Worklist fold of ``blue`` into ``red``; returns the score or ``None``."""
        pos, neg, trans, rep = self.pos, self.neg, self.trans, self.rep
        evidence = self.score_mode == "evidence"
        score = 0
        work = [(red, blue)]
        while work:
            q, b = work.pop()
            q = self.find(q)
            if q == b:
                continue
            pq, nq, pb, nb = pos[q], neg[q], pos[b], neg[b]
            if (pq and nb) or (nq and pb):
                return None
            if pq and pb:
                score += pq + pb if evidence else min(pq, pb)
            if nq and nb:
                score += nq + nb if evidence else min(nq, nb)
            self._set(rep, b, q)
            if pb:
                self._set(pos, q, pq + pb)
            if nb:
                self._set(neg, q, nq + nb)
            tq, tb = trans[q], trans[b]
            for a in range(self.n_symbols):
                cb = tb[a]
                if cb < 0:
                    continue
                cq = tq[a]
                if cq < 0:
                    self._set(tq, a, cb)
                else:
                    work.append((cq, cb))
        return score

    def score(self, red: int, blue: int) -> int | None:
        """EDSM score of merging ``blue`` into ``red``; state is left unchanged."""
        mark = len(self._undo)
        result = self._fold(red, blue)
        self._rollback(mark)
        return result

    def merge(self, red: int, blue: int) -> bool:
        """Apply the merge in place; on incompatibility nothing changes."""
        mark = len(self._undo)
        result = self._fold(red, blue)
        if result is None:
            self._rollback(mark)
            return False
        del self._undo[mark:]
        return True

    def promote(self, blue: int) -> None:
        self.red.append(blue)

    def to_dfa(self) -> Dfa:
        """Quotient over red states; missing transitions go to a rejecting sink."""
        reds = sorted(self.red, key=lambda r: r)
        index = {r: i for i, r in enumerate(reds)}
        n = len(reds)
        sink = n
        delta = np.full((n + 1, self.n_symbols), sink, dtype=np.int64)
        for r in reds:
            for a, c in enumerate(self.trans[r]):
                if c >= 0:
                    delta[index[r], a] = index[self.find(c)]
        acc = frozenset(index[r] for r in reds if self.pos[r] > 0)
        return Dfa(delta, index[self.find(0)], acc)


def try_merge(ms: MergeState, red: int, blue: int) -> MergeState | None:
    """Merged copy of ``ms``, or ``None`` if the merge is incompatible."""
    if red not in ms.red:
        raise ValueError(f"{red} is not a red state")
    if blue not in ms.blue():
        raise ValueError(f"{blue} is not a blue state")
    out = ms.copy()
    return out if out.merge(red, blue) else None


def edsm_score(ms: MergeState, red: int, blue: int) -> int | None:
    return ms.score(red, blue)


def reference_fold(pta: Pta, red_partition: Sequence[Sequence[int]], red: int, blue: int) -> list[frozenset[int]] | None:
    """Recursive fold over an explicit partition; slow, for cross-checking.

    ``red_partition`` lists current classes; returns the classes after
    merging the class of ``blue`` into the class of ``red`` and closing
    under determinism, or ``None`` on a label clash.
    """
    cls_of = {}
    for i, cls in enumerate(red_partition):
        for x in cls:
            cls_of[x] = i
    classes = [set(c) for c in red_partition]
    parent = list(range(len(classes)))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    def succ(i, a):
        for x in classes[i]:
            c = pta.children[x][a]
            if c >= 0:
                return find(cls_of[c])
        return None

    def union(i, j):
        i, j = find(i), find(j)
        if i == j:
            return True
        nodes = classes[i] | classes[j]
        if any(pta.pos[x] for x in nodes) and any(pta.neg[x] for x in nodes):
            return False
        si = [succ(i, a) for a in range(pta.n_symbols)]
        sj = [succ(j, a) for a in range(pta.n_symbols)]
        parent[j] = i
        classes[i] = nodes
        for a in range(pta.n_symbols):
            if si[a] is not None and sj[a] is not None:
                if not union(si[a], sj[a]):
                    return False
        return True

    if not union(cls_of[red], cls_of[blue]):
        return None
    out = {}
    for i in range(len(classes)):
        out.setdefault(find(i), set()).update(red_partition[i])
    return sorted((frozenset(c) for c in out.values()), key=min)


def edsm_run(samples: Iterable[Sample] | Pta, n_symbols: int | None = None,
             prefix_negative: bool = True, score_mode: str = "pairs") -> Dfa:
    """Red-blue EDSM; returns the minimized quotient DFA.

    Each round scores every (red, blue) pair, promotes the first blue that
    has no compatible red partner, otherwise applies the best-scoring merge
    (ties: smallest red, then smallest blue).
    """
    if isinstance(samples, Pta):
        pta = samples
    else:
        if n_symbols is None:
            raise ValueError("n_symbols is required when passing raw samples")
        pta = build_pta(samples, n_symbols, prefix_negative)
    ms = MergeState(pta, score_mode)
    while True:
        blues = ms.blue()
        if not blues:
            break
        reds = sorted(ms.red)
        best: tuple[int, int, int] | None = None
        promoted = False
        for b in blues:
            compatible = False
            for r in reds:
                sc = ms.score(r, b)
                if sc is None:
                    continue
                compatible = True
                key = (-sc, r, b)
                if best is None or key < best:
                    best = key
            if not compatible:
                ms.promote(b)
                promoted = True
                break
        if promoted:
            continue
        _, r, b = best
        ms.merge(r, b)
    return minimize(ms.to_dfa())


def consistent_with(dfa: Dfa, samples: Iterable[Sample], prefix_negative: bool = True) -> bool:
    """Strong consistency, including implied prefix negatives when requested."""
    positives = set()
    samples = list(samples)
    for w, lab, _ in samples:
        if lab:
            positives.add(tuple(w))
    for w, lab, _ in samples:
        traj = dfa.trajectory(w)
        if (traj[-1] in dfa.accepting) != lab:
            return False
        if prefix_negative:
            for i in range(len(w)):
                if traj[i] in dfa.accepting and tuple(w[:i]) not in positives:
                    return False
    return True


@dataclass
class LearnOutcome:
    dfa: Dfa | None
    attempts: int
    limits: list[int]
    sizes: list[int]

    @property
    def ok(self) -> bool:
        return self.dfa is not None


def preprocess_and_learn(store: TraceStore, rtype: int, n_symbols: int, max_states: int = 20,
                         max_fail: int = 20, score_mode: str = "pairs") -> LearnOutcome:
    """Learn one reward type's machine, shrinking negatives on oversized results.

    Negatives are first capped at their current maximal length; each result
    with more than ``max_states`` states halves the cap (never below the
    shortest positive) and retries. After ``max_fail`` failures, or once the
    cap can no longer shrink, the outcome carries no DFA and the caller keeps
    its previous machine.
    """
    limit = store.max_negative_length(rtype)
    floor = max(1, store.min_positive_length(rtype))
    limits, sizes = [], []
    for attempt in range(1, max_fail + 1):
        samples = store.samples(rtype, max_neg_len=limit)
        dfa = edsm_run(samples, n_symbols, prefix_negative=True, score_mode=score_mode)
        limits.append(limit)
        sizes.append(dfa.n_states)
        if dfa.n_states <= max_states:
            return LearnOutcome(dfa, attempt, limits, sizes)
        new_limit = max(floor, limit // 2)
        log.debug("EDSM result has %d states; negative cap %d -> %d", dfa.n_states, limit, new_limit)
        if new_limit == limit:
            break
        limit = new_limit
    return LearnOutcome(None, len(limits), limits, sizes)
