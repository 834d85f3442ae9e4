"""Experiment configuration: an INI file with sections, every key optional.

Unset environment-dependent keys (discount, K, reward value, planner
tolerance and horizon, forcing attempts, budget, checkpoint cadence) take
the defaults of the chosen environment.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from typing import Any

from .core import AlphabetMode
from .envs import make_env
from .orchestrate import ALGORITHMS, LEARNERS, Alg1Config, RunSettings
from .qlearn import EpsilonSchedule

ENV_DEFAULTS = {
    "mab": dict(gamma=0.99, K=5, reward_value=10.0, planner_tol=1e-9, planner_horizon=None, k=1,
                budget=4_000_000, checkpoint_every=100_000, replan_every=1),
    "robot": dict(gamma=0.999999, K=10, reward_value=100.0, planner_tol=1e-6, planner_horizon="episode",
                  k=100, budget=25_000_000, checkpoint_every=1_000_000, replan_every=10),
}


@dataclass
class ExperimentConfig:
    # [experiment]
    name: str = "experiment"
    env: str = "mab"
    schemes: list[str] = field(default_factory=lambda: ["S1"])
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    learners: list[str] = field(default_factory=lambda: list(LEARNERS))
    seeds: list[int] = field(default_factory=lambda: [0])
    budget: int | None = None
    checkpoint_every: int | None = None
    eval_episodes: int = 20
    exact_eval: bool = False
    # [env]
    n_arms: int = 3
    steps_per_episode: int = 20
    size: int = 5
    n_stains: int = 2
    n_fruits: int = 2
    episode_length: int = 60
    start: list[int] = field(default_factory=lambda: [0, 0])
    basket: list[int] | None = None
    reward_value: float | None = None
    gamma: float | None = None
    alphabet_mode: str = "action-only"
    # [rl]
    alpha: float = 0.1
    eps_start: float = 0.9
    eps_end: float = 0.1
    eps_rate: float = 1e-6
    K: int | None = None
    reward_obs_min: int = 3
    rmax: float | None = None
    planner_tol: float | None = None
    planner_horizon: str | None = None
    replan_every: int | None = None
    replay_capacity: int = 50_000
    # [edsm]
    c_trials: int = 100
    c_pos: int = 10
    max_states: int = 20
    max_fail: int = 20
    score_mode: str = "pairs"
    neg_capacity: int = 1000
    # [lstar]
    k: int | None = None
    query_mode: str = "prioritized"

    def __post_init__(self):
        if self.env not in ENV_DEFAULTS:
            raise ValueError(f"unknown environment {self.env!r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        for m in self.learners:
            if m not in LEARNERS:
                raise ValueError(f"unknown machine learner {m!r}")
        AlphabetMode(self.alphabet_mode)

    def default(self, key: str) -> Any:
        value = getattr(self, key)
        return ENV_DEFAULTS[self.env][key] if value is None else value

    # -- environment and run settings --------------------------------------

    def env_params(self) -> dict:
        common = dict(reward_value=self.default("reward_value"), gamma=self.default("gamma"),
                      alphabet_mode=AlphabetMode(self.alphabet_mode))
        if self.env == "mab":
            return dict(common, n_arms=self.n_arms, steps_per_episode=self.steps_per_episode)
        return dict(common, size=self.size, n_stains=self.n_stains, n_fruits=self.n_fruits,
                    episode_length=self.episode_length, start=tuple(self.start),
                    basket=tuple(self.basket) if self.basket else None)

    def env_factory(self, scheme: str):
        return _EnvFactory(self.env, scheme, self.env_params())

    def horizon(self) -> int | None:
        h = self.default("planner_horizon")
        if h in (None, "", "none", "infinite"):
            return None
        if h == "episode":
            return self.steps_per_episode if self.env == "mab" else self.episode_length
        return int(h)

    def run_settings(self, algorithm: str, learner: str, seed: int) -> RunSettings:
        return RunSettings(
            algorithm=algorithm, learner=learner, seed=seed,
            budget=self.default("budget"), checkpoint_every=self.default("checkpoint_every"),
            eval_episodes=self.eval_episodes, exact_eval=self.exact_eval, alpha=self.alpha,
            schedule=EpsilonSchedule(self.eps_start, self.eps_end, self.eps_rate),
            K=self.default("K"), reward_obs_min=self.reward_obs_min, rmax=self.rmax,
            planner_tol=self.default("planner_tol"), planner_horizon=self.horizon(),
            replan_every=self.default("replan_every"),
            alg1=Alg1Config(self.c_trials, self.c_pos, algorithm, self.max_states, self.max_fail, self.score_mode),
            k=self.default("k"), query_mode=self.query_mode, neg_capacity=self.neg_capacity,
            replay_capacity=self.replay_capacity,
        )

    # -- serialization -----------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for f in dataclasses.fields(self):
            section = SECTIONS[f.name]
            if not cp.has_section(section):
                cp.add_section(section)
            value = getattr(self, f.name)
            if value is None:
                continue
            cp.set(section, f.name, _format(value))
        out = io.StringIO()
        cp.write(out)
        return out.getvalue().rstrip() + "\n"

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_string(text)
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs: dict[str, Any] = {}
        for section in cp.sections():
            for key, raw in cp.items(section):
                if key not in fields:
                    raise ValueError(f"unknown config key {key!r} in [{section}]")
                if SECTIONS[key] != section:
                    raise ValueError(f"config key {key!r} belongs in [{SECTIONS[key]}], not [{section}]")
                kwargs[key] = _parse(key, raw, fields[key].type)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini(fh.read())


class _EnvFactory:
    """Picklable ``seed -> environment`` callable."""

    def __init__(self, name: str, scheme: str, params: dict):
        self.name, self.scheme, self.params = name, scheme, params

    def __call__(self, seed: int):
        return make_env(self.name, self.scheme, seed, **self.params)


_SECTION_KEYS = {
    "experiment": "name env schemes algorithms learners seeds budget checkpoint_every eval_episodes exact_eval",
    "env": "n_arms steps_per_episode size n_stains n_fruits episode_length start basket reward_value gamma alphabet_mode",
    "rl": "alpha eps_start eps_end eps_rate K reward_obs_min rmax planner_tol planner_horizon replan_every replay_capacity",
    "edsm": "c_trials c_pos max_states max_fail score_mode neg_capacity",
    "lstar": "k query_mode",
}
SECTIONS = {key: sec for sec, keys in _SECTION_KEYS.items() for key in keys.split()}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(key: str, raw: str, typ: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    typ = str(typ)
    if typ.startswith("list[int]"):
        return [int(x) for x in raw.replace(",", " ").split()]
    if typ.startswith("list[str]"):
        return [x for x in raw.replace(",", " ").split()]
    if typ.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if typ.startswith("int"):
        return int(raw.replace("_", ""))
    if typ.startswith("float"):
        return float(raw)
    return raw
