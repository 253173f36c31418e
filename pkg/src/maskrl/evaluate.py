"""Evaluation protocols shared by trained policies and non-learning baselines.

An *agent* is any callable ``act(observation, state) -> action``.  Every
protocol derives its instances and episode seeds from one root seed, so
different agents (e.g. mask levels) see identical instances and demand paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Env, derive_seed, episode_seed, stream
from .envs.inventory import InvConfig, InventoryEnv
from .envs.lms import LmsConfig, LmsEnv, threshold_rule
from .envs.paintshop import PaintShopConfig, PaintShopEnv, ps_generate_instance, ps_greedy_heuristic
from .masking import MaskFn, distribution_from_vector, resolve

Agent = Callable[[np.ndarray, object], int]


class PolicyAgent:
    """Acts with a trained bundle under a mask; samples unless ``deterministic``."""

    def __init__(self, bundle, mask: MaskFn | None, env: Env, seed: int, deterministic: bool = False):
        self.bundle = bundle
        self.mask = mask
        self.fallback = env.validity_mask()
        self.n = env.action_count
        self.rng = stream(seed, 6)
        self.deterministic = deterministic
        self.fallbacks = 0
        if bundle.observation_dim != env.observation_dim or bundle.action_count != env.action_count:
            raise ValueError(
                f"checkpoint expects obs_dim={bundle.observation_dim}, actions={bundle.action_count}; "
                f"environment has {env.observation_dim}, {env.action_count}"
            )

    def __call__(self, obs: np.ndarray, state) -> int:
        allowed, fell_back = resolve(self.mask, self.fallback, state, self.n)
        self.fallbacks += fell_back
        logits = self.bundle.logits(obs)
        if self.deterministic:
            return int(np.argmax(np.where(allowed, logits, -np.inf)))
        return distribution_from_vector(logits, allowed).sample(self.rng)


def run_episode(env: Env, agent: Agent, seed: int) -> tuple[float, int, dict, bool]:
    """Play one episode; returns ``(return, length, last info, truncated)``."""
    obs = env.reset(seed)
    total, steps = 0.0, 0
    while True:
        out = env.step(agent(obs, env.state))
        total += out.reward
        steps += 1
        if out.done:
            return total, steps, out.info, out.truncated
        obs = out.observation


@dataclass
class EpisodeRecord:
    index: int
    metric: float
    episode_return: float
    length: int
    completed: bool


# -- paint shop ---------------------------------------------------------------

def ps_eval_instances(config: PaintShopConfig, count: int, seed: int) -> list[list[int]]:
    return [ps_generate_instance(derive_seed(seed, 5, k), config) for k in range(count)]


def ps_evaluate(make_agent: Callable[[Env, int], Agent], config: PaintShopConfig, instances: int = 10,
                seed: int = 0) -> list[EpisodeRecord]:
    """Color changes per instance.

    An episode cut off by the step cap scores its color changes so far plus
    one per car never retrieved (an upper bound on what finishing could add).
    """
    records = []
    for k, seq in enumerate(ps_eval_instances(config, instances, seed)):
        env = PaintShopEnv(config, seq)
        agent = make_agent(env, derive_seed(seed, 6, k))
        ret, length, info, truncated = run_episode(env, agent, episode_seed(seed, k))
        missing = len(seq) - info["retrieved"]
        records.append(EpisodeRecord(k, float(info["color_changes"] + missing), ret, length, missing == 0))
    return records


def ps_greedy_agent(env: Env, seed: int) -> Agent:
    rng = stream(seed, 8)
    return lambda obs, state: ps_greedy_heuristic(state, rng)


# -- load management ----------------------------------------------------------

def lms_evaluate(make_agent: Callable[[Env, int], Agent], config: LmsConfig, episodes: int = 100,
                 seed: int = 0) -> list[EpisodeRecord]:
    """Solved indicator (1/0) per episode; the mean is the solved fraction."""
    env = LmsEnv(config)
    agent = make_agent(env, seed)
    records = []
    for k in range(episodes):
        ret, length, info, _ = run_episode(env, agent, episode_seed(seed, k))
        records.append(EpisodeRecord(k, float(info["solved"]), ret, length, True))
    return records


def lms_threshold_agent(level: float = 1.24):
    def make(env: Env, seed: int) -> Agent:
        return lambda obs, state: threshold_rule(state, level)

    return make


# -- inventory ----------------------------------------------------------------

def inv_evaluate(make_agent: Callable[[Env, int], Agent], config: InvConfig, episodes: int = 100,
                 seed: int = 0) -> list[EpisodeRecord]:
    """Mean cost per period of each episode (``-return / H``)."""
    env = InventoryEnv(config)
    agent = make_agent(env, seed)
    records = []
    for k in range(episodes):
        ret, length, _, _ = run_episode(env, agent, episode_seed(seed, k))
        records.append(EpisodeRecord(k, -ret / config.horizon, ret, length, True))
    return records


def policy_agent_factory(bundle, mask: MaskFn | None, deterministic: bool = False):
    def make(env: Env, seed: int) -> Agent:
        return PolicyAgent(bundle, mask, env, seed, deterministic)

    return make


def summarize(records: list[EpisodeRecord]) -> tuple[float, float]:
    """Mean and standard error of the per-episode metric."""
    values = np.array([r.metric for r in records], dtype=float)
    se = values.std(ddof=1) / np.sqrt(len(values)) if len(values) > 1 else 0.0
    return float(values.mean()), float(se)
