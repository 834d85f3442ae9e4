import pytest

from nmrl.automata import trivial_dfa
from nmrl.envs import MabEnv, RobotWorldEnv
from nmrl.oracle import policy_value, solve

G = 0.99


def closed_form(firing_steps, value=10.0):
    return value * sum(G ** (t - 1) for t in firing_steps)


@pytest.mark.parametrize("scheme,steps,n_product", [
    ("S1", range(5, 21, 5), 6),
    ("S2", (8, 16), 9),
    ("S3", range(3, 19, 3), 4),
    ("S4", range(3, 19, 3), 9),
])
def test_bandit_optimum_closed_form(scheme, steps, n_product):
    sol = solve(MabEnv(scheme))
    assert sol.value == pytest.approx(closed_form(steps), abs=1e-9)
    assert sol.n_product_states == n_product


def test_frozen_bandit_values():
    assert solve(MabEnv("S1")).value == pytest.approx(35.690276940882065, rel=1e-12)
    assert solve(MabEnv("S2")).value == pytest.approx(17.92123702548279, rel=1e-12)
    assert solve(MabEnv("S3")).value == pytest.approx(54.60862004739541, rel=1e-12)


def test_s1_optimal_policy_repeats_pattern():
    env = MabEnv("S1")
    sol = solve(env)
    d = env.ground_truth_machines()[0]
    q, arms = d.initial, []
    for t in range(10):
        a = sol.policy[env.episode_length - 1 - t][(0, (q,))]
        arms.append(a)
        q = d.step(q, a)
    assert arms == [0, 0, 0, 0, 2] * 2


def test_trivial_machine_optimum_is_zero():
    assert solve(MabEnv("S1"), machines=[trivial_dfa(3)]).value == 0.0


def test_policy_value_agrees_with_solution():
    env = MabEnv("S3")
    sol = solve(env)
    truth = env.ground_truth_machines()
    pol = lambda key, t: sol.policy[env.episode_length - 1 - t][key]  # noqa: E731
    assert policy_value(env, pol, truth) == pytest.approx(sol.value, abs=1e-12)
    assert policy_value(env, lambda key, t: 0, [trivial_dfa(3)], truth) == 0.0


def test_reduced_robot_optimum():
    env = RobotWorldEnv("R3", size=3, n_stains=1, n_fruits=1, episode_length=30)
    sol = solve(env)
    assert sol.value == pytest.approx(57.63045695616037, rel=1e-9)
    assert sol.n_product_states == 5838
    pol = lambda key, t: sol.policy[29 - t][key]  # noqa: E731
    assert policy_value(env, pol, env.ground_truth_machines()) == pytest.approx(sol.value, rel=1e-12)


def test_short_horizon_and_discount_override():
    env = MabEnv("S1")
    assert solve(env, horizon=4).value == 0.0
    assert solve(env, horizon=5, gamma=1.0).value == pytest.approx(10.0)
