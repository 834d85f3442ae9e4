"""Exact finite-horizon optimum of the product of a known MDP and reward machines.

Independent of the R-max planner on purpose: explicit product enumeration
with dictionaries and plain backward induction, used as the reference
value for evaluating learned policies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .automata import Dfa


@dataclass
class OracleSolution:
    value: float
    """Expected optimal discounted return from the initial distribution."""
    values: dict[tuple[int, tuple[int, ...]], float]
    """Optimal value with the full horizon remaining, per product state."""
    policy: list[dict[tuple[int, tuple[int, ...]], int]]
    """``policy[h][x]``: optimal action with ``h + 1`` steps remaining."""
    n_product_states: int


def product_transitions(env, machines: Sequence[Dfa], values: Sequence[float]):
    """Enumerate reachable product states and their one-step outcomes."""
    init = tuple(d.initial for d in machines)
    starts = [((s, init), p) for s, p in env.initial_distribution()]
    model: dict = {}
    frontier = [x for x, _ in starts]
    seen = set(frontier)
    while frontier:
        x = frontier.pop()
        s, qs = x
        if env.is_terminal(s):
            model[x] = None
            continue
        acts = []
        for a in range(env.n_actions):
            r_m = env.markov_reward(s, a)
            outs = []
            for s2, p in env.transition_probs(s, a):
                sym = env.symbol(s, a, s2)
                if sym is None:
                    qs2, r_nmr = qs, 0.0
                else:
                    qs2 = tuple(d.rows[q][sym] for d, q in zip(machines, qs))
                    r_nmr = sum(v for d, q, v in zip(machines, qs2, values) if q in d.accepting)
                x2 = (s2, qs2)
                outs.append((p, r_m + r_nmr, x2))
                if x2 not in seen:
                    seen.add(x2)
                    frontier.append(x2)
            acts.append(outs)
        model[x] = acts
    return starts, model


def solve(env, machines: Sequence[Dfa] | None = None, horizon: int | None = None,
          gamma: float | None = None) -> OracleSolution:
    """Backward induction over ``horizon`` steps (default: the episode length)."""
    machines = list(machines) if machines is not None else env.ground_truth_machines()
    values = [rt.value for rt in env.reward_types]
    horizon = env.episode_length if horizon is None else horizon
    gamma = env.gamma if gamma is None else gamma
    starts, model = product_transitions(env, machines, values)
    v = {x: 0.0 for x in model}
    policy = []
    for _ in range(horizon):
        nv = {}
        pol = {}
        for x, acts in model.items():
            if acts is None:
                nv[x] = 0.0
                continue
            best, best_a = None, 0
            for a, outs in enumerate(acts):
                q = sum(p * (r + gamma * v[x2]) for p, r, x2 in outs)
                if best is None or q > best + 1e-12:
                    best, best_a = q, a
            nv[x] = best
            pol[x] = best_a
        v = nv
        policy.append(pol)
    total = sum(p * v[x] for x, p in starts)
    return OracleSolution(total, v, policy, len(model))


def policy_value(env, policy, agent_machines: Sequence[Dfa], true_machines: Sequence[Dfa] | None = None,
                 horizon: int | None = None, gamma: float | None = None) -> float:
    """Exact expected discounted return of a deterministic policy over one episode.

    ``policy((s, qs), t)`` sees the agent's own machine states ``qs``; rewards
    come from the true machines. The joint distribution over
    (state, true machine states, agent machine states) is pushed forward
    step by step, so the result carries no sampling noise.
    """
    true_machines = list(true_machines) if true_machines is not None else env.ground_truth_machines()
    agent_machines = list(agent_machines)
    values = [rt.value for rt in env.reward_types]
    horizon = env.episode_length if horizon is None else horizon
    gamma = env.gamma if gamma is None else gamma
    init_t = tuple(d.initial for d in true_machines)
    init_a = tuple(d.initial for d in agent_machines)
    dist: dict = {}
    for s, p in env.initial_distribution():
        x = (s, init_t, init_a)
        dist[x] = dist.get(x, 0.0) + p
    total = 0.0
    disc = 1.0
    for t in range(horizon):
        nxt: dict = {}
        for (s, qt, qa), p in dist.items():
            if env.is_terminal(s):
                continue
            a = policy((s, qa), t)
            r = env.markov_reward(s, a)
            for s2, ps in env.transition_probs(s, a):
                sym = env.symbol(s, a, s2)
                gain = r
                if sym is None:
                    qt2, qa2 = qt, qa
                else:
                    qt2 = tuple(d.rows[q][sym] for d, q in zip(true_machines, qt))
                    qa2 = tuple(d.rows[q][sym] for d, q in zip(agent_machines, qa))
                    gain += sum(v for d, q, v in zip(true_machines, qt2, values) if q in d.accepting)
                total += disc * p * ps * gain
                x2 = (s2, qt2, qa2)
                nxt[x2] = nxt.get(x2, 0.0) + p * ps
        dist = nxt
        disc *= gamma
    return total
