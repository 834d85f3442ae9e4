"""Model-based R-max over product states.

Counts live on the MDP level only: ``n(s, a)`` and ``n(s, a, s')``, plus the
Markovian reward sum and the event symbol each observed transition
produced. Product-level transitions are never stored; the planner composes
them on the fly from the MDP estimates and the deterministic machine steps,
so swapping machines needs no new samples.

Reward types whose machine has a single state are treated as ordinary
Markovian rewards (their mean per pair is folded into the pair reward).
Other types pay their value when their machine enters an accepting state.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .automata import Dfa

Key = tuple[int, tuple[int, ...]]


class PlannerDiverged(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"value iteration stopped after {iterations} iterations, residual {residual:.3g}")
        self.iterations = iterations
        self.residual = residual


@dataclass
class PlannerOutput:
    values: np.ndarray
    """Values with the full horizon remaining, shape (states, composite machine states)."""
    greedy: np.ndarray
    """Greedy actions, shape (horizons, states, composite machine states)."""
    iterations: int
    residual: float
    state_index: dict[int, int]
    strides: tuple[int, ...]
    fictitious_value: float
    finite: bool

    def machine_index(self, qs: Sequence[int]) -> int:
        return sum(q * s for q, s in zip(qs, self.strides))

    def value(self, key: Key) -> float:
        i = self.state_index.get(key[0])
        if i is None:
            return self.fictitious_value
        return float(self.values[i, self.machine_index(key[1])])

    def action(self, key: Key, t: int = 0) -> int | None:
        """Greedy action at episode step ``t``; ``None`` for states the plan has not seen."""
        i = self.state_index.get(key[0])
        if i is None:
            return None
        h = len(self.greedy) - 1 - t if self.finite else 0
        h = min(max(h, 0), len(self.greedy) - 1)
        return int(self.greedy[h, i, self.machine_index(key[1])])


class RmaxModel:
    """Empirical MDP model with per-pair and per-transition ids in growing lists.

    Pairs and transitions are numbered in order of first observation, which
    keeps planning a matter of array conversion instead of dictionary walks.
    """

    def __init__(self, n_actions: int, values: Sequence[float], K: int = 5, reward_obs_min: int = 3,
                 rmax: float | None = None):
        if K < 1:
            raise ValueError("K must be positive")
        self.n_actions = n_actions
        self.values = list(values)
        self.K = K
        self.reward_obs_min = reward_obs_min
        self.rmax = max(self.values, default=0.0) if rmax is None else rmax
        self.machines: list[Dfa] = []
        self.state_ids: dict[int, int] = {}
        self.states: list[int] = []
        self.pair_ids: dict[tuple[int, int], int] = {}
        self.pair_s: list[int] = []
        self.pair_a: list[int] = []
        self.pair_n: list[int] = []
        self.pair_rsum: list[float] = []
        self.pair_fire: list[list[int]] = []
        self.trans_ids: dict[tuple[int, int, int], int] = {}
        self.tr_pair: list[int] = []
        self.tr_s2: list[int] = []
        self.tr_sym: list[int | None] = []
        self.tr_n: list[int] = []
        self.terminal: set[int] = set()
        # (type, machine state, symbol) -> [times fired, times not fired] under current machines
        self.nmr_log: dict[tuple[int, int, int], list[int]] = {}
        self.withheld: set[tuple[int, int, int]] = set()
        self.stale = False
        # transition id -> per-type [seen firing, seen not firing]
        self.fire_seen: dict[int, list[list[bool]]] = {}
        self.nonmarkov_candidates: set[int] = set()
        self.dirty = True

    @property
    def n_types(self) -> int:
        return len(self.values)

    def _state(self, s: int) -> int:
        i = self.state_ids.get(s)
        if i is None:
            i = self.state_ids[s] = len(self.states)
            self.states.append(s)
        return i

    def count(self, s: int, a: int) -> int:
        pid = self.pair_ids.get((s, a))
        return 0 if pid is None else self.pair_n[pid]

    def known(self, s: int, a: int) -> bool:
        return self.count(s, a) >= self.K

    def trusted(self, s: int, a: int) -> bool:
        return self.count(s, a) >= self.reward_obs_min

    def observe(self, key: Key, a: int, s2: int, reward: float, fired: Sequence[int],
                symbol: int | None, done: bool) -> None:
        s, qs = key
        pid = self.pair_ids.get((s, a))
        if pid is None:
            pid = self.pair_ids[(s, a)] = len(self.pair_s)
            self.pair_s.append(self._state(s))
            self.pair_a.append(a)
            self.pair_n.append(0)
            self.pair_rsum.append(0.0)
            self.pair_fire.append([0] * self.n_types)
        n = self.pair_n[pid] = self.pair_n[pid] + 1
        self.pair_rsum[pid] += reward
        fired_set = set(fired)
        fc = self.pair_fire[pid]
        for t in fired_set:
            fc[t] += 1
        tid = self.trans_ids.get((s, a, s2))
        if tid is None:
            tid = self.trans_ids[(s, a, s2)] = len(self.tr_pair)
            self.tr_pair.append(pid)
            self.tr_s2.append(self._state(s2))
            self.tr_sym.append(symbol)
            self.tr_n.append(0)
            self.fire_seen[tid] = [[False, False] for _ in range(self.n_types)]
        self.tr_n[tid] += 1
        if done:
            self.terminal.add(s2)
        if n == self.K:
            self.dirty = True

        seen = self.fire_seen[tid]
        for t in range(self.n_types):
            seen[t][0 if t in fired_set else 1] = True
            if seen[t][0] and seen[t][1]:
                self.nonmarkov_candidates.add(t)

        if symbol is None or not self.machines:
            return
        for t, (d, q) in enumerate(zip(self.machines, qs)):
            if d.n_states == 1:
                continue
            k = (t, q, symbol)
            entry = self.nmr_log.get(k)
            if entry is None:
                entry = self.nmr_log[k] = [0, 0]
            hit = t in fired_set
            entry[0 if hit else 1] += 1
            predicted = d.rows[q][symbol] in d.accepting
            if predicted != hit:
                self.stale = True
                if predicted and k not in self.withheld:
                    self.withheld.add(k)
                    self.dirty = True

    def pair_reward(self, s: int, a: int) -> float:
        """Mean Markovian reward, plus mean firings of types tracked by one-state machines."""
        pid = self.pair_ids[(s, a)]
        n = self.pair_n[pid]
        r = self.pair_rsum[pid] / n
        for t, v in enumerate(self.values):
            if not self.machines or self.machines[t].n_states == 1:
                r += v * self.pair_fire[pid][t] / n
        return r

    def transition_estimate(self, s: int, a: int) -> dict[int, float]:
        pid = self.pair_ids[(s, a)]
        n = self.pair_n[pid]
        return {self.states[self.tr_s2[i]]: self.tr_n[i] / n
                for i in range(len(self.tr_pair)) if self.tr_pair[i] == pid}

    def counts(self) -> dict[tuple[int, int], dict[int, int]]:
        """``n(s, a, s')`` as nested dictionaries."""
        out: dict[tuple[int, int], dict[int, int]] = {}
        for (s, a, s2), tid in self.trans_ids.items():
            out.setdefault((s, a), {})[s2] = self.tr_n[tid]
        return out

    def dump(self) -> str:
        """Tabular text: one line per observed pair."""
        out = io.StringIO()
        out.write("# s a n known reward successors(s':count)\n")
        counts = self.counts()
        for (s, a) in sorted(self.pair_ids):
            n = self.count(s, a)
            succ = " ".join(f"{s2}:{c}" for s2, c in sorted(counts[(s, a)].items()))
            out.write(f"{s} {a} {n} {int(n >= self.K)} {self.pair_reward(s, a):.6g} {succ}\n")
        return out.getvalue()


def rebuild_on_automata(model: RmaxModel, machines: Sequence[Dfa]) -> RmaxModel:
    """Swap in new machines; MDP-level counts are kept exactly as they are."""
    if len(machines) != model.n_types:
        raise ValueError("one machine per reward type is required")
    model.machines = list(machines)
    model.nmr_log.clear()
    model.withheld.clear()
    model.stale = False
    model.dirty = True
    return model


def _composite(machines: Sequence[Dfa], values: Sequence[float], n_symbols: int,
               withheld: set[tuple[int, int, int]]):
    """Joint machine transition and entry-reward tables; the last column is the no-effect symbol."""
    sizes = [d.n_states for d in machines]
    strides = []
    acc = 1
    for n in reversed(sizes):
        strides.append(acc)
        acc *= n
    strides = tuple(reversed(strides))
    n_q = acc
    idx = np.arange(n_q)
    comps = [(idx // st) % n for st, n in zip(strides, sizes)]
    nxt = np.zeros((n_q, n_symbols + 1), dtype=np.int64)
    rew = np.zeros((n_q, n_symbols + 1))
    nxt[:, n_symbols] = idx
    for t, (d, comp) in enumerate(zip(machines, comps)):
        delta = np.asarray(d.delta)
        q2 = delta[comp]  # (n_q, n_symbols)
        nxt[:, :n_symbols] += q2 * strides[t]
        if d.n_states == 1:
            continue
        accepting = np.zeros(d.n_states, dtype=bool)
        accepting[list(d.accepting)] = True
        gain = accepting[q2] * values[t]
        for (tt, q, sym) in withheld:
            if tt == t:
                gain[comp == q, sym] = 0.0
        rew[:, :n_symbols] += gain
    return nxt, rew, strides


def plan(model: RmaxModel, n_symbols: int, gamma: float, tol: float = 1e-9,
         horizon: int | None = None, max_iter: int = 1_000_000) -> PlannerOutput:
    """Value iteration on the optimistic product model.

    With ``horizon`` set, runs that many finite-horizon backups and keeps a
    time-indexed greedy policy; otherwise iterates to a residual below ``tol``.
    Unknown pairs lead to the absorbing fictitious state paying ``rmax``.
    """
    machines = model.machines or [_one_state(n_symbols) for _ in model.values]
    nxt, rew, strides = _composite(machines, model.values, n_symbols, model.withheld)
    n_q = nxt.shape[0]

    n_s = len(model.states)
    index = dict(model.state_ids)
    term = np.zeros(n_s, dtype=bool)
    for s in model.terminal:
        term[index[s]] = True

    values = np.asarray(model.values, dtype=float)
    p_s = np.asarray(model.pair_s, dtype=np.int64)
    p_a = np.asarray(model.pair_a, dtype=np.int64)
    p_n = np.asarray(model.pair_n, dtype=float)
    markov = np.ones(len(values), dtype=bool)
    if model.machines:
        markov = np.array([d.n_states == 1 for d in model.machines])
    p_r = np.asarray(model.pair_rsum, dtype=float)
    if len(p_s) and markov.any():
        p_r = p_r + np.asarray(model.pair_fire, dtype=float)[:, markov] @ values[markov]
    keep = (p_n >= model.K) & ~term[p_s] if len(p_s) else np.zeros(0, dtype=bool)
    pair_s, pair_a = p_s[keep], p_a[keep]
    pair_r = p_r[keep] / p_n[keep]
    # renumber kept pairs 0..m-1 and select their transitions, grouped by pair
    new_id = np.full(len(p_s), -1, dtype=np.int64)
    new_id[keep] = np.arange(int(keep.sum()))
    t_pair = new_id[np.asarray(model.tr_pair, dtype=np.int64)] if model.tr_pair else np.zeros(0, dtype=np.int64)
    sel = np.nonzero(t_pair >= 0)[0]
    sel = sel[np.argsort(t_pair[sel], kind="stable")]
    t_pair = t_pair[sel]
    tr_s2 = np.asarray(model.tr_s2, dtype=np.int64)[sel] if len(sel) else np.zeros(0, dtype=np.int64)
    tr_p = (np.asarray(model.tr_n, dtype=float)[sel] / p_n[keep][t_pair])[:, None]
    syms = np.array([n_symbols if x is None else x for x in model.tr_sym], dtype=np.int64)
    tr_sym = syms[sel] if len(sel) else np.zeros(0, dtype=np.int64)
    starts = np.searchsorted(t_pair, np.arange(len(pair_s))) if len(pair_s) else np.zeros(0, dtype=np.int64)
    tr_next_q = nxt[:, tr_sym].T if len(tr_sym) else np.zeros((0, n_q), dtype=np.int64)
    tr_gain = rew[:, tr_sym].T if len(tr_sym) else np.zeros((0, n_q))
    rmax = float(model.rmax)

    def backup(v: np.ndarray, fict: float) -> np.ndarray:
        q = np.full((n_s, model.n_actions, n_q), fict)
        if len(pair_s):
            cont = v[tr_s2[:, None], tr_next_q]
            contrib = tr_p * (tr_gain + gamma * cont)
            q[pair_s, pair_a] = np.add.reduceat(contrib, starts, axis=0) + pair_r[:, None]
        q[term] = 0.0
        return q

    v = np.zeros((n_s, n_q))
    if horizon is not None:
        greedy = np.zeros((horizon, n_s, n_q), dtype=np.int16)
        residual = 0.0
        for h in range(horizon):
            fict = rmax * h if gamma == 1 else rmax * (1 - gamma ** (h + 1)) / (1 - gamma)
            q = backup(v, fict)
            g = q.argmax(axis=1)
            nv = np.take_along_axis(q, g[:, None, :], axis=1)[:, 0, :]
            if h == horizon - 1 and n_s:
                residual = float(np.abs(nv - v).max())
            v = nv
            greedy[h] = g
        fict_value = rmax * horizon if gamma == 1 else rmax * (1 - gamma ** horizon) / (1 - gamma)
        return PlannerOutput(v, greedy, horizon, residual, index, strides, fict_value, True)

    if gamma >= 1:
        raise ValueError("infinite-horizon planning needs gamma < 1")
    fict = rmax / (1 - gamma)
    v = np.full((n_s, n_q), fict)
    v[term] = 0.0
    residual = float("inf")
    it = 0
    while it < max_iter:
        it += 1
        q = backup(v, fict)
        nv = q.max(axis=1)
        residual = float(np.abs(nv - v).max()) if n_s else 0.0
        v = nv
        if residual < tol:
            break
    else:
        raise PlannerDiverged(it, residual)
    greedy = q.argmax(axis=1)[None].astype(np.int16) if n_s else np.zeros((1, 0, n_q), dtype=np.int16)
    return PlannerOutput(v, greedy, it, residual, index, strides, fict, False)


def _one_state(n_symbols: int) -> Dfa:
    from .automata import trivial_dfa

    return trivial_dfa(n_symbols)


class RmaxAgent:
    """R-max model plus its current plan, with ε-greedy action choice."""

    def __init__(self, n_actions: int, n_symbols: int, values: Sequence[float], gamma: float,
                 K: int = 5, reward_obs_min: int = 3, rmax: float | None = None,
                 horizon: int | None = None, tol: float = 1e-9, replan_every: int = 1,
                 machines: Sequence[Dfa] | None = None):
        self.n_symbols = n_symbols
        self.gamma = gamma
        self.horizon = horizon
        self.tol = tol
        self.replan_every = max(1, replan_every)
        self.model = RmaxModel(n_actions, list(values), K, reward_obs_min, rmax)
        if machines is not None:
            rebuild_on_automata(self.model, machines)
        self.planner: PlannerOutput | None = None
        self._since_plan = 0
        self.plans = 0

    @property
    def n_actions(self) -> int:
        return self.model.n_actions

    def set_machines(self, machines: Sequence[Dfa], episodes=()) -> None:
        """Episodes are not needed: the MDP-level model carries over unchanged."""
        rebuild_on_automata(self.model, machines)
        self.replan()

    def replan(self) -> PlannerOutput:
        self.planner = plan(self.model, self.n_symbols, self.gamma, self.tol, self.horizon)
        self.model.dirty = False
        self._since_plan = 0
        self.plans += 1
        return self.planner

    def begin_episode(self) -> None:
        self._since_plan += 1
        if self.planner is None or (self.model.dirty and self._since_plan >= self.replan_every):
            self.replan()

    def greedy(self, key: Key, t: int = 0, rng: random.Random | None = None) -> int:
        a = self.planner.action(key, t) if self.planner is not None else None
        if a is None:
            # state unseen at planning time: all pairs unknown, try the least-visited action
            counts = [self.model.count(key[0], b) for b in range(self.n_actions)]
            a = counts.index(min(counts))
        return a

    def act(self, key: Key, t: int, eps: float, rng: random.Random) -> int:
        if eps > 0 and rng.random() < eps:
            return rng.randrange(self.n_actions)
        return self.greedy(key, t)

    def observe(self, key: Key, action: int, res, next_key: Key) -> None:
        self.model.observe(key, action, res.state, res.reward, res.fired, res.symbol, res.done)
