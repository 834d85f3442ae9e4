"""Learning loops that interleave tabular RL with reward-machine inference.

* :func:`run_alg1` collects traces with the current machines and, every
  ``c_trials`` episodes, relearns a reward type's machine by state merging
  once enough positive traces exist.
* :func:`run_alg2` runs one L* session per reward type. Membership queries
  are answered by forcing the environment through the queried action word;
  equivalence queries are answered from stored traces, exploring further
  until a disagreement turns up.
* :func:`run_fixed` trains with fixed machines: the ground truth ("optimal")
  or one-state machines ("vanilla").

All three share :class:`Runner`, which owns the environment, the agent, the
trace store, the step counter and the checkpoint evaluation.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .automata import Dfa, equivalent, initial_machine_states, trivial_dfa
from .core import Episode, Label, TraceStore, Transition
from .edsm import preprocess_and_learn
from .lstar import EquivalenceQuery, InconsistentTeacher, MembershipQuery, ObservationTable, lstar
from .oracle import policy_value
from .qlearn import EpsilonSchedule, QAgent, greedy_eval
from .rmax import RmaxAgent

log = logging.getLogger(__name__)

ALGORITHMS = ("qlearn", "rmax")
LEARNERS = ("lstar", "edsm", "optimal", "vanilla")


@dataclass
class Alg1Config:
    c_trials: int = 100
    c_pos: int = 10
    rl: str = "qlearn"
    max_states: int = 20
    max_fail: int = 20
    score_mode: str = "pairs"

    def __post_init__(self):
        if self.c_trials < 1 or self.c_pos < 1:
            raise ValueError("c_trials and c_pos must be at least 1")
        if self.rl not in ALGORITHMS:
            raise ValueError(f"unknown RL algorithm {self.rl!r}")


@dataclass
class RunSettings:
    """Everything one run needs besides the environments."""

    algorithm: str = "qlearn"
    learner: str = "vanilla"
    seed: int = 0
    budget: int = 100_000
    checkpoint_every: int = 100_000
    eval_episodes: int = 20
    exact_eval: bool = False
    alpha: float = 0.1
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    K: int = 5
    reward_obs_min: int = 3
    rmax: float | None = None
    planner_tol: float = 1e-9
    planner_horizon: int | None = None
    replan_every: int = 1
    alg1: Alg1Config = field(default_factory=Alg1Config)
    k: int = 100
    query_mode: str = "prioritized"
    neg_capacity: int = 1000
    replay_capacity: int = 50_000
    stop: Callable[[dict], bool] | None = None
    """Optional early-stop predicate evaluated on every checkpoint record."""

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown machine learner {self.learner!r}")
        if self.query_mode not in ("prioritized", "interleaved"):
            raise ValueError(f"unknown query mode {self.query_mode!r}")
        if self.k < 1:
            raise ValueError("k must be at least 1")


def make_agent(settings: RunSettings, env, machines: Sequence[Dfa]):
    values = [rt.value for rt in env.reward_types]
    if settings.algorithm == "qlearn":
        return QAgent(env.n_actions, values, settings.alpha, env.gamma, machines, settings.replay_capacity)
    return RmaxAgent(env.n_actions, env.n_symbols, values, env.gamma, K=settings.K,
                     reward_obs_min=settings.reward_obs_min, rmax=settings.rmax,
                     horizon=settings.planner_horizon, tol=settings.planner_tol,
                     replan_every=settings.replan_every, machines=machines)


def machine_correct(machines: Sequence[Dfa], truth: Sequence[Dfa]) -> list[bool]:
    return [equivalent(m, t) is None for m, t in zip(machines, truth)]


class Runner:
    """Shared episode loop, step accounting and checkpointing."""

    def __init__(self, env_factory: Callable[[int], object], settings: RunSettings,
                 machines: Sequence[Dfa] | None = None):
        self.settings = settings
        self.env_factory = env_factory
        self.env = env_factory(settings.seed)
        env = self.env
        self.truth = env.ground_truth_machines()
        self.n_types = len(env.reward_types)
        self.values = [rt.value for rt in env.reward_types]
        if machines is None:
            machines = [trivial_dfa(env.n_symbols) for _ in range(self.n_types)]
        self.machines = list(machines)
        self.agent = make_agent(settings, env, self.machines)
        self.store = TraceStore(self.n_types, settings.neg_capacity, settings.replay_capacity)
        self.rng = random.Random(settings.seed * 7919 + 17)
        self.step = 0
        self.episodes = 0
        self.next_checkpoint = settings.checkpoint_every
        self.records: list[dict] = []
        self.stopped = False
        self.provisional = False
        # reward types whose machine mispredicted a step since it was installed
        self.contradicted = [False] * self.n_types

    @property
    def done(self) -> bool:
        return self.stopped or self.step >= self.settings.budget

    def set_machines(self, machines: Sequence[Dfa]) -> None:
        self.machines = list(machines)
        self.contradicted = [False] * self.n_types
        self.agent.set_machines(self.machines, self.store.replay)

    def episode(self, force: tuple[int, ...] | None = None) -> tuple[Episode, bool]:
        """Run one trial; with ``force``, play that word's actions first.

        Returns the episode and whether the forced word was realized (its
        symbols were produced in order as the trace's first symbols).
        """
        env, agent, sched = self.env, self.agent, self.settings.schedule
        rows = [d.rows for d in self.machines]
        accepting = [d.accepting for d in self.machines]
        s = env.reset()
        agent.begin_episode()
        qs = initial_machine_states(self.machines)
        ep = Episode()
        pos = 0
        forcing = force is not None
        realized = forcing and len(force) == 0
        if realized:
            forcing = False
        decode = env.encoder.decode
        for t in range(env.episode_length):
            if self.step >= self.settings.budget:
                break
            key = (s, qs)
            if forcing:
                a = decode(force[pos])[0]
            else:
                a = agent.act(key, t, sched(self.step), self.rng)
            res = env.step(a)
            self.step += 1
            if res.symbol is None:
                qs2 = qs
            else:
                qs2 = tuple(rw[q][res.symbol] for rw, q in zip(rows, qs))
                for i, (q2, acc) in enumerate(zip(qs2, accepting)):
                    if (q2 in acc) != (i in res.fired):
                        self.contradicted[i] = True
            key2 = (res.state, qs2)
            agent.observe(key, a, res, key2)
            ep.add(Transition(s, a, res.reward, res.fired, res.symbol, res.state, res.done))
            if forcing and res.symbol is not None:
                if res.symbol == force[pos]:
                    pos += 1
                    if pos == len(force):
                        realized, forcing = True, False
                else:
                    forcing = False  # derailed: keep exploring with the policy
            s, qs = res.state, qs2
            if res.done:
                break
        self.store.close_episode(ep)
        self.episodes += 1
        return ep, realized

    # -- evaluation -------------------------------------------------------

    def evaluate(self) -> dict:
        st = self.settings
        agent = self.agent
        eval_rng = random.Random(st.seed * 104729 + 3)
        if hasattr(agent, "replan") and agent.model.dirty:
            agent.replan()
        policy = lambda key, t: agent.greedy(key, t, eval_rng)  # noqa: E731
        eval_env = self.env_factory(st.seed + 1_000_003)
        mean = greedy_eval(policy, eval_env, self.machines, st.eval_episodes)
        rec = {
            "step": self.next_checkpoint,
            "mean_return": mean,
            "machine_states": [d.n_states for d in self.machines],
            "machine_correct": machine_correct(self.machines, self.truth),
        }
        if st.exact_eval:
            det = lambda key, t: agent.greedy(key, t)  # noqa: E731
            rec["exact_return"] = policy_value(eval_env, det, self.machines, self.truth)
        return rec

    def checkpoint(self) -> None:
        while self.step >= self.next_checkpoint and self.next_checkpoint <= self.settings.budget:
            rec = self.evaluate()
            self.records.append(rec)
            self.next_checkpoint += self.settings.checkpoint_every
            if self.settings.stop is not None and self.settings.stop(rec):
                self.stopped = True
                break


def evaluate_checkpoint(runner: Runner) -> dict:
    """Greedy evaluation record of a runner's current agent and machines."""
    return runner.evaluate()


# -- fixed machines -----------------------------------------------------------

def run_fixed(env_factory, settings: RunSettings) -> Runner:
    """"optimal" uses the ground-truth machines, "vanilla" one-state machines."""
    runner = Runner(env_factory, settings)
    if settings.learner == "optimal":
        runner.set_machines(runner.truth)
    while not runner.done:
        runner.episode()
        runner.checkpoint()
    return runner


# -- learning loop with passive state merging ---------------------------------

def run_alg1(env_factory, settings: RunSettings) -> Runner:
    cfg = settings.alg1
    runner = Runner(env_factory, settings)
    env = runner.env
    last_pos = [0] * runner.n_types
    runner.learn_log = []
    while not runner.done:
        for _ in range(cfg.c_trials):
            runner.episode()
            runner.checkpoint()
            if runner.done:
                break
        if runner.done:
            break
        changed = False
        machines = list(runner.machines)
        for t in range(runner.n_types):
            n_pos = runner.store.n_positive(t)
            if n_pos <= cfg.c_pos or n_pos == last_pos[t] or not runner.contradicted[t]:
                continue
            last_pos[t] = n_pos
            out = preprocess_and_learn(runner.store, t, env.n_symbols, cfg.max_states, cfg.max_fail,
                                       cfg.score_mode)
            runner.learn_log.append((runner.step, t, out.attempts, out.sizes))
            if not out.ok:
                log.info("state merging failed for type %d at step %d; keeping previous machine", t, runner.step)
                continue
            if equivalent(out.dfa, machines[t]) is not None:
                machines[t] = out.dfa
                changed = True
        if changed:
            runner.set_machines(machines)
    return runner


# -- learning loop with L* and the environment as teacher ------------------------

class LStarSession:
    """One reward type's L* learner plus its pending query."""

    def __init__(self, n_symbols: int, known: dict[tuple[int, ...], bool]):
        self.n_symbols = n_symbols
        self.known = known
        self.restart()

    def restart(self) -> None:
        table = ObservationTable(self.n_symbols, cache=dict(self.known))
        self.gen = lstar(self.n_symbols, table)
        self.pending = next(self.gen)
        self.attempts = 0
        self.finished = False

    def send(self, answer):
        try:
            self.pending = self.gen.send(answer)
        except StopIteration:
            self.finished = True
            self.pending = None
        self.attempts = 0
        return self.pending

    @property
    def wants_member(self) -> bool:
        return isinstance(self.pending, MembershipQuery)

    @property
    def wants_equivalence(self) -> bool:
        return isinstance(self.pending, EquivalenceQuery)


def first_disagreement(dfa: Dfa, word: Sequence[int], fired_at: set[int]) -> tuple[int, ...] | None:
    """Shortest prefix whose observed label differs from the hypothesis."""
    rows, acc = dfa.rows, dfa.accepting
    q = dfa.initial
    if q in acc:
        return ()
    for i, sym in enumerate(word, 1):
        q = rows[q][sym]
        if (q in acc) != (i in fired_at):
            return tuple(word[:i])
    return None


def serve_equivalence(dfa: Dfa, rtype: int, episodes: Sequence[Episode]) -> tuple[int, ...] | None:
    """Shortest counterexample among the given stored traces, or ``None``."""
    best = None
    for ep in episodes:
        tr = ep.trace
        cex = first_disagreement(dfa, tr.symbols, set(tr.firings(rtype)))
        if cex is not None and (best is None or (len(cex), cex) < (len(best), best)):
            best = cex
    return best


def serve_membership(runner: Runner, word: tuple[int, ...], k: int) -> tuple[list[Label] | None, int]:
    """Force the environment through ``word`` for up to ``k`` trials.

    Returns the per-type labels of the realized word (``None`` if every
    attempt failed) and the number of trials spent.
    """
    for attempt in range(1, k + 1):
        if runner.done:
            return None, attempt - 1
        ep, realized = runner.episode(force=word)
        runner.checkpoint()
        if realized:
            return [ep.trace.prefix_label(t, len(word)) for t in range(runner.n_types)], attempt
    return None, k


class Alg2Run(Runner):
    def __init__(self, env_factory, settings: RunSettings):
        super().__init__(env_factory, settings)
        self.known: list[dict[tuple[int, ...], bool]] = [{} for _ in range(self.n_types)]
        self.heuristic: list[set[tuple[int, ...]]] = [set() for _ in range(self.n_types)]
        self.sessions = [LStarSession(self.env.n_symbols, self.known[t]) for t in range(self.n_types)]
        self.rr = 0
        self.restarts = 0
        self.query_log: list[str] = []

    def record_trace(self, ep: Episode) -> None:
        """Every prefix of a finished trace is a labelled word for every type."""
        tr = ep.trace
        for t in range(self.n_types):
            fired = set(tr.firings(t))
            kn = self.known[t]
            for i in range(len(tr.symbols) + 1):
                kn.setdefault(tuple(tr.symbols[:i]), i in fired)

    def advance(self, t: int) -> None:
        """Answer whatever session ``t`` asks that needs no environment interaction."""
        sess = self.sessions[t]
        while not sess.finished:
            try:
                if sess.wants_member:
                    w = sess.pending.word
                    if w not in self.known[t]:
                        return
                    sess.send(self.known[t][w])
                    continue
                hyp = sess.pending.hypothesis
                if equivalent(hyp, self.machines[t]) is not None:
                    machines = list(self.machines)
                    machines[t] = hyp
                    self.set_machines(machines)
                    self.query_log.append(f"H type={t} states={hyp.n_states} step={self.step}")
                cex = serve_equivalence(hyp, t, self.store.replay)
                if cex is None:
                    return
                self.query_log.append(f"E type={t} cex={' '.join(map(str, cex)) or 'ε'}")
                sess.send(cex)
            except InconsistentTeacher as exc:
                log.info("restarting L* for type %d: %s", t, exc)
                self.restarts += 1
                for w in self.heuristic[t]:
                    self.known[t].pop(w, None)
                self.heuristic[t].clear()
                sess.restart()

    def pick_member(self) -> int | None:
        wanting = [t for t in range(self.n_types) if self.sessions[t].wants_member]
        if not wanting:
            return None
        if self.settings.query_mode == "prioritized":
            return wanting[0]
        for i in range(self.n_types):
            t = (self.rr + i) % self.n_types
            if t in wanting:
                self.rr = t + 1
                return t
        return None


def run_alg2(env_factory, settings: RunSettings) -> Alg2Run:
    run = Alg2Run(env_factory, settings)
    for t in range(run.n_types):
        run.advance(t)
    while not run.done:
        t = run.pick_member()
        if t is None:
            ep, _ = run.episode()
            run.checkpoint()
            for u in range(run.n_types):
                sess = run.sessions[u]
                if sess.wants_equivalence:
                    tr = ep.trace
                    if first_disagreement(sess.pending.hypothesis, tr.symbols, set(tr.firings(u))) is not None:
                        run.advance(u)
            continue
        sess = run.sessions[t]
        word = sess.pending.word
        ep, realized = run.episode(force=word)
        run.checkpoint()
        run.record_trace(ep)
        sess.attempts += 1
        if not realized and sess.attempts >= settings.k:
            # k failed attempts: tag the word negative and remember the guess
            run.known[t][word] = False
            run.heuristic[t].add(word)
            run.query_log.append(f"M type={t} {' '.join(map(str, word)) or 'ε'} -> 0 (heuristic)")
        for u in range(run.n_types):
            run.advance(u)
    run.provisional = any(not s.finished and not s.wants_equivalence for s in run.sessions)
    return run


def run_cell(env_factory, settings: RunSettings) -> Runner:
    if settings.learner in ("optimal", "vanilla"):
        return run_fixed(env_factory, settings)
    if settings.learner == "edsm":
        return run_alg1(env_factory, settings)
    return run_alg2(env_factory, settings)
