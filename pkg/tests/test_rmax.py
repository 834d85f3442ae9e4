import random

import numpy as np
import pytest

from nmrl.automata import trivial_dfa
from nmrl.core import StepResult
from nmrl.envs import MabEnv, RobotWorldEnv, ground_truth_dfa
from nmrl.oracle import policy_value, solve
from nmrl.rmax import PlannerDiverged, RmaxAgent, RmaxModel, plan, rebuild_on_automata
from nmrl.envs.monitors import RIGHT

S1 = ground_truth_dfa("S1")


def feed(model, key, a, s2, reward=0.0, fired=(), symbol=None, done=False, times=1):
    for _ in range(times):
        model.observe(key, a, s2, reward, fired, symbol, done)


def exact_mab_model(scheme="S1", K=5):
    env = MabEnv(scheme)
    m = RmaxModel(3, [10.0], K=K)
    rebuild_on_automata(m, env.ground_truth_machines())
    for a in range(3):
        feed(m, (0, (0,)), a, 0, symbol=a, times=K)
    return env, m


def test_known_flips_on_kth_observation():
    m = RmaxModel(2, [1.0], K=5)
    feed(m, (0, (0,)), 1, 0, times=4)
    assert not m.known(0, 1)
    feed(m, (0, (0,)), 1, 0)
    assert m.known(0, 1) and m.count(0, 1) == 5
    with pytest.raises(ValueError):
        RmaxModel(2, [1.0], K=0)


def test_nonmarkov_candidate_flag():
    m = RmaxModel(2, [1.0])
    feed(m, (0, (0,)), 0, 1, fired=(0,))
    assert not m.nonmarkov_candidates
    feed(m, (0, (0,)), 0, 1)
    assert m.nonmarkov_candidates == {0}


def test_all_unknown_values_are_fictitious():
    m = RmaxModel(3, [10.0])
    feed(m, (0, (0,)), 0, 1, times=2)
    out = plan(m, 3, 0.9)
    assert np.allclose(out.values, 10.0 / 0.1)
    assert out.value((7, (0,))) == pytest.approx(100.0)


def test_exact_s1_model_repeats_pattern():
    _, m = exact_mab_model()
    out = plan(m, 3, 0.99)
    q, arms = S1.initial, []
    for _ in range(10):
        a = out.action((0, (q,)))
        arms.append(a)
        q = S1.step(q, a)
    assert arms == [0, 0, 0, 0, 2] * 2


def test_myopic_planner_takes_best_immediate_reward():
    m = RmaxModel(3, [1.0], K=1)
    for a, r in enumerate([0.5, 2.0, 1.0]):
        feed(m, (0, (0,)), a, 1, reward=r)
    out = plan(m, 3, 0.0)
    assert out.action((0, (0,))) == 1


def test_finite_horizon_planner_matches_oracle():
    env, m = exact_mab_model("S3")
    out = plan(m, 3, 0.99, horizon=env.episode_length)
    sol = solve(env)
    for (s, qs), v in sol.values.items():
        assert out.value((s, qs)) == pytest.approx(v, abs=1e-9)
    # the time-indexed greedy policy earns the optimum exactly
    pol = lambda key, t: out.action(key, t)  # noqa: E731
    assert policy_value(env, pol, m.machines) == pytest.approx(sol.value, abs=1e-9)


def test_rebuild_keeps_transition_estimates():
    m = RmaxModel(3, [10.0])
    rng = random.Random(0)
    for _ in range(50):
        a = rng.randrange(3)
        feed(m, (0, (0,)), a, 0, symbol=a)
    before = {a: m.transition_estimate(0, a) for a in range(3)}
    counts = m.counts()
    rebuild_on_automata(m, [S1])
    assert {a: m.transition_estimate(0, a) for a in range(3)} == before
    assert m.counts() == counts and m.dirty
    with pytest.raises(ValueError):
        rebuild_on_automata(m, [S1, S1])


def test_markov_penalty_at_every_machine_state():
    d = ground_truth_dfa("R3")
    m = RmaxModel(7, [100.0], K=1)
    rebuild_on_automata(m, [d])
    for a in range(7):
        feed(m, (0, (0,)), a, 1, reward=-1.0, symbol=a)     # every action effective in state 0
        feed(m, (1, (0,)), a, 1, reward=-1.0, symbol=None)  # and none in state 1
    out = plan(m, 7, 0.0, horizon=1)
    for q in range(d.n_states):
        can_fire = any(d.step(q, a) in d.accepting for a in range(7))
        assert out.value((0, (q,))) == pytest.approx(99.0 if can_fire else -1.0)
        assert out.value((1, (q,))) == pytest.approx(-1.0)


def test_accepting_entry_pays_type_value():
    _, m = exact_mab_model()
    out = plan(m, 3, 0.0)
    q4 = S1.run((0, 0, 0, 0))
    assert out.value((0, (q4,))) == pytest.approx(10.0)
    assert out.action((0, (q4,))) == 2


def test_optimism_drives_toward_unknown_pairs():
    # chain 0 -> 1 -> 2; state 0 fully known, state 1 partly, state 2 never seen
    m = RmaxModel(2, [1.0], K=1)
    feed(m, (0, (0,)), 0, 1, reward=-1.0, symbol=0)
    feed(m, (0, (0,)), 1, 0, reward=0.0, symbol=None)
    feed(m, (1, (0,)), 0, 2, reward=-1.0, symbol=0)
    out = plan(m, 2, 0.9)
    assert out.action((0, (0,))) == 0  # leave the safe loop for the frontier
    assert out.action((1, (0,))) == 1  # the unknown pair at state 1


def test_planner_divergence_guard():
    m = RmaxModel(2, [1.0], K=1)
    feed(m, (0, (0,)), 0, 0, reward=0.5)
    feed(m, (0, (0,)), 1, 0, reward=0.0)
    with pytest.raises(PlannerDiverged) as err:
        plan(m, 2, 0.99, max_iter=3)
    assert err.value.iterations == 3 and err.value.residual > 0


def test_misprediction_withholds_reward():
    m = RmaxModel(3, [10.0], K=1)
    rebuild_on_automata(m, [S1])
    q4 = S1.run((0, 0, 0, 0))
    feed(m, (0, (q4,)), 2, 0, symbol=2)  # the machine predicts a firing that did not happen
    assert m.stale and (0, q4, 2) in m.withheld
    for a in range(3):
        feed(m, (0, (0,)), a, 0, symbol=a)
    out = plan(m, 3, 0.0)
    assert out.value((0, (q4,))) == 0.0


def test_agent_epsilon_zero_is_greedy_and_unseen_state_fallback():
    agent = RmaxAgent(3, 3, [10.0], 0.99, K=1, machines=[S1])
    for a in range(3):
        agent.observe((0, (0,)), a, StepResult(0, (), 0.0, a, False), (0, (S1.step(0, a),)))
    agent.begin_episode()
    rng = random.Random(0)
    for q in range(S1.n_states):
        key = (0, (q,))
        assert agent.act(key, 0, 0.0, rng) == agent.greedy(key, 0)
    assert agent.greedy((42, (0,)), 0) == 0


def test_agent_replan_rate_limit():
    agent = RmaxAgent(3, 3, [10.0], 0.99, K=1, replan_every=3)
    agent.begin_episode()
    assert agent.plans == 1
    agent.observe((0, (0,)), 0, StepResult(0, (), 0.0, 0, False), (0, (0,)))
    agent.begin_episode()
    agent.begin_episode()
    assert agent.plans == 1
    agent.begin_episode()
    assert agent.plans == 2


def test_dump_lists_pairs():
    _, m = exact_mab_model(K=2)
    text = m.dump().splitlines()
    assert text[0].startswith("#") and len(text) == 4
    assert text[1].split()[:4] == ["0", "0", "2", "1"]


def test_robot_agent_runs_an_episode():
    env = RobotWorldEnv("R3", size=3, n_stains=1, n_fruits=1, episode_length=10)
    agent = RmaxAgent(7, 7, [100.0], env.gamma, K=2, horizon=10, tol=1e-6, machines=env.ground_truth_machines())
    rng = random.Random(0)
    s, qs = env.reset(), (0,)
    agent.begin_episode()
    for t in range(10):
        a = agent.act((s, qs), t, 0.5, rng)
        res = env.step(a)
        qs2 = qs if res.symbol is None else (env.ground_truth_machines()[0].step(qs[0], res.symbol),)
        agent.observe((s, qs), a, res, (res.state, qs2))
        s, qs = res.state, qs2
    assert agent.model.pair_n and sum(agent.model.pair_n) == 10
