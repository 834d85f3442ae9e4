import random

import pytest

from nmrl.automata import minimize
from nmrl.core import AlphabetMode
from nmrl.envs import EpisodeExhausted, MabEnv, RobotWorldEnv, ground_truth_dfa, make_env, monitor_specs
from nmrl.envs.monitors import CLEAN, DOWN, PICK, PUT, RIGHT, UP, RewardMonitor, UnknownScheme, suffix_pattern_dfa
from nmrl.envs.robot import BASKET, HELD, RobotState


def fire_steps(env, actions):
    env.reset()
    return [i + 1 for i, a in enumerate(actions) if env.step(a).fired]


def test_mab_s1_fires_on_fifth_pull():
    assert fire_steps(MabEnv("S1"), [0, 0, 0, 0, 2]) == [5]


def test_mab_s3_fires_on_third_pull():
    assert fire_steps(MabEnv("S3"), [2, 2, 1]) == [3]


@pytest.mark.parametrize("tail", [(0, 0, 0), (1, 2, 0), (2, 2, 2)])
def test_mab_s2_fires_three_steps_late(tail):
    assert fire_steps(MabEnv("S2"), [0, 0, 0, 0, 2, *tail]) == [8]


def test_mab_episode_limit_and_action_range():
    env = MabEnv("S1", steps_per_episode=2)
    env.reset()
    env.step(0)
    env.step(0)
    with pytest.raises(EpisodeExhausted):
        env.step(0)
    env.reset()
    with pytest.raises(ValueError):
        env.step(3)


def test_extra_arms_reset_the_pattern():
    env = MabEnv("S1", n_arms=4)
    assert fire_steps(env, [0, 0, 0, 3, 0, 2]) == []
    assert env.n_symbols == 4


def prose_rule_s1(word):
    return len(word) >= 5 and word[-5:] == (0, 0, 0, 0, 2)


def prose_rule_s3(word):
    return len(word) >= 3 and word[-3:] == (2, 2, 1)


@pytest.mark.parametrize("scheme,states,rule", [("S1", 6, prose_rule_s1), ("S3", 4, prose_rule_s3)])
def test_monitor_sizes_and_prose_rules(scheme, states, rule):
    d = ground_truth_dfa(scheme)
    assert d.n_states == states
    rng = random.Random(0)
    for _ in range(100_000 // 10):
        w = tuple(rng.randrange(3) for _ in range(rng.randrange(12)))
        assert d.accepts(w) == rule(w)


def test_robot_monitor_sizes():
    assert ground_truth_dfa("R3").n_states == 4
    assert ground_truth_dfa("R3").n_symbols == 7
    assert ground_truth_dfa("S2").n_states == 9
    assert len(monitor_specs("R4")) == 2 and len(monitor_specs("S4")) == 2
    with pytest.raises(UnknownScheme):
        monitor_specs("S9")


def test_suffix_pattern_overlap():
    d = suffix_pattern_dfa((0, 0, 1), 2)
    assert d.accepts((0, 0, 0, 1)) and not d.accepts((0, 1, 0, 1))
    assert minimize(d).n_states == 4


def test_delayed_monitor_holds_then_continues():
    m = RewardMonitor(suffix_pattern_dfa((0,), 2), delay=2)
    assert [m.advance(s) for s in (0, 1, 1, 0, 1, 1)] == [False, False, True, False, False, True]


def robot(scheme="R3", **kw):
    return RobotWorldEnv(scheme, **kw)


def force(env, st):
    env.current = st
    env.state_id = env.encode(st)


def test_robot_encoding_bijective():
    env = robot(size=3, n_stains=1, n_fruits=1)
    rng = random.Random(3)
    for _ in range(500):
        sid = rng.randrange(env.n_states)
        assert env.encode(env.decode(sid)) == sid


def test_robot_move_up_at_top_row():
    env = robot()
    env.reset()
    st = env.current
    outs, r = env.outcomes(st, UP)
    assert r == -1.0
    assert outs[0] == (0.6, st)  # intended move bumps the wall
    assert sum(p for p, _ in outs) == pytest.approx(1.0)


def test_robot_r3_fires_after_two_rights_and_pick():
    env = robot("R3", size=3, n_stains=1, n_fruits=1, seed=1)
    env.reset()
    # fruit two cells right of the start; a slip restarts the attempt
    layout = (7, 2)
    force(env, RobotState(layout, 0, (False,), (0,)))
    fired = []
    while env.current.pos != 2:
        before = env.current.pos
        res = env.step(RIGHT)
        if res.symbol is not None and env.current.pos != before + 1:
            force(env, RobotState(layout, 0, (False,), (0,)))
            for m in env.monitors:
                m.reset()
            continue
        fired += res.fired
    while env.current.fruits[0] != HELD:
        res = env.step(PICK)
        fired += res.fired
    assert fired == [0]


def test_robot_ineffective_action_filtered():
    env = robot("R3", size=3, n_stains=1, n_fruits=1)
    env.reset()
    res = env.step(PUT)  # nothing held: no effect
    assert res.symbol is None and res.fired == () and res.reward == -1.0


def test_robot_r1_pick_after_cleaning():
    env = robot("R1", size=3, n_stains=1, n_fruits=1)
    env.reset()
    force(env, RobotState((4, 4), 4, (False,), (0,)))
    got = []
    while not env.current.cleaned[0]:
        got += env.step(CLEAN).fired
    while env.current.fruits[0] != HELD:
        got += env.step(PICK).fired
    assert got == [0]


def test_robot_terminates_when_done():
    env = robot("R1", size=3, n_stains=1, n_fruits=1)
    env.reset()
    force(env, RobotState((4, 8), 8, (True,), (HELD,)))
    done = False
    while not done:
        done = env.step(PUT).done
    assert env.current.fruits == (BASKET,)
    assert env.is_terminal(env.state_id)


def test_robot_transition_probs_merge_wall_bumps():
    env = robot(size=3, n_stains=1, n_fruits=1)
    env.reset()
    force(env, RobotState((4, 5), 0, (False,), (0,)))
    probs = dict(env.transition_probs(env.state_id, UP))
    assert probs[env.state_id] == pytest.approx(0.8)
    assert sum(probs.values()) == pytest.approx(1.0)
    assert env.markov_reward(env.state_id, DOWN) == -1.0


def test_robot_initial_distribution_uniform():
    env = robot(size=3, n_stains=1, n_fruits=1)
    dist = env.initial_distribution()
    assert len(dist) == 7 * 6
    assert sum(p for _, p in dist) == pytest.approx(1.0)


def test_robot_layout_avoids_start_and_basket():
    env = robot(seed=11)
    for _ in range(200):
        env.reset()
        lay = env.current.layout
        assert len(set(lay)) == 4 and env.start not in lay and env.basket not in lay


def test_robot_grid_too_small():
    with pytest.raises(ValueError):
        robot(size=2, n_stains=2, n_fruits=1)


def test_make_env_and_action_state_alphabet():
    env = make_env("mab", "S4", 0, alphabet_mode=AlphabetMode.ACTION_STATE)
    assert env.n_symbols == 3 and len(env.ground_truth_machines()) == 2
    with pytest.raises(ValueError):
        make_env("chess", "S1")
