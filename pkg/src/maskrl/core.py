"""Environment contract, seed derivation and the rollout runner."""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .masking import MaskFn, distribution_from_vector, mask_all_allow, resolve


class ContractError(RuntimeError):
    """A caller broke the environment contract (programming error)."""


def derive_seed(root: int, *key: int) -> int:
    """Counter-split a 64-bit child seed from ``root`` and an integer key path."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(k) for k in key))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def episode_seed(root: int, episode: int) -> int:
    return derive_seed(root, 0, episode)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)
    truncated: bool = False


class Env(abc.ABC):
    """Base class for the episodic environments.

    Subclasses set ``action_count``, ``observation_dim`` and ``horizon_limit``
    in ``__init__`` and never change them afterwards.
    """

    action_count: int
    observation_dim: int
    horizon_limit: int | None

    def __init__(self) -> None:
        self._done = True

    @abc.abstractmethod
    def _reset(self, seed: int) -> np.ndarray: ...

    @abc.abstractmethod
    def _step(self, action: int) -> StepOutcome: ...

    @property
    @abc.abstractmethod
    def state(self) -> Any:
        """Raw (structured) state; masks are evaluated on this."""

    def validity_mask(self) -> MaskFn:
        """Innermost validity mask used as the empty-set fallback."""
        return mask_all_allow()

    def reset(self, seed: int) -> np.ndarray:
        obs = self._reset(int(seed))
        self._done = False
        return obs

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise ContractError("step() called on a finished episode; call reset() first")
        if not 0 <= int(action) < self.action_count:
            raise ContractError(f"action {action} outside 0..{self.action_count - 1}")
        out = self._step(int(action))
        self._done = out.done
        return out


class Policy(Protocol):
    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, float]:
        """Return ``(logits, value_estimate)`` for one observation."""


@dataclass
class Trajectory:
    observations: np.ndarray
    actions: np.ndarray
    allowed: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    log_probs: np.ndarray
    dones: np.ndarray
    # value of the cut-off observation where an episode was truncated, else 0
    truncated_values: np.ndarray
    last_value: float
    episode_returns: list[float] = field(default_factory=list)
    episode_lengths: list[int] = field(default_factory=list)
    episode_infos: list[dict[str, Any]] = field(default_factory=list)
    diagnostics: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.actions)


class RolloutRunner:
    """Collects fixed-length rollouts, auto-resetting finished episodes.

    Episode ``k`` is reset with ``episode_seed(seed, k)`` so any episode can be
    replayed in isolation; action sampling draws from its own stream.
    Episodes may straddle successive :meth:`collect` calls.
    """

    def __init__(self, env: Env, policy: Policy, mask: MaskFn | None, seed: int):
        self.env = env
        self.policy = policy
        self.mask = mask if mask is not None else mask_all_allow()
        self.fallback = env.validity_mask()
        self.seed = int(seed)
        self.action_rng = stream(self.seed, 1)
        self.episode = 0
        self.obs = env.reset(episode_seed(self.seed, 0))
        self._ep_return = 0.0
        self._ep_len = 0
        self.diagnostics: dict[str, int] = {"mask_fallback": 0}

    def _new_episode(self) -> None:
        self.episode += 1
        self.obs = self.env.reset(episode_seed(self.seed, self.episode))
        self._ep_return = 0.0
        self._ep_len = 0

    def collect(self, n_steps: int) -> Trajectory:
        env, n_act = self.env, self.env.action_count
        obs_buf = np.empty((n_steps, env.observation_dim))
        act_buf = np.empty(n_steps, dtype=np.int64)
        allowed_buf = np.empty((n_steps, n_act), dtype=bool)
        rew_buf = np.empty(n_steps)
        val_buf = np.empty(n_steps)
        logp_buf = np.empty(n_steps)
        done_buf = np.zeros(n_steps, dtype=bool)
        trunc_buf = np.zeros(n_steps)
        returns, lengths, infos = [], [], []
        fallbacks_before = self.diagnostics["mask_fallback"]

        for t in range(n_steps):
            logits, value = self.policy.forward(self.obs)
            allowed, fell_back = resolve(self.mask, self.fallback, env.state, n_act)
            if fell_back:
                self.diagnostics["mask_fallback"] += 1
            dist = distribution_from_vector(logits, allowed)
            action = dist.sample(self.action_rng)

            obs_buf[t] = self.obs
            act_buf[t] = action
            allowed_buf[t] = allowed
            val_buf[t] = value
            logp_buf[t] = np.log(dist.probs[action])

            out = env.step(action)
            rew_buf[t] = out.reward
            self._ep_return += out.reward
            self._ep_len += 1
            if out.done:
                done_buf[t] = True
                if out.truncated:
                    trunc_buf[t] = self.policy.forward(out.observation)[1]
                returns.append(self._ep_return)
                lengths.append(self._ep_len)
                infos.append(dict(out.info))
                self._new_episode()
            else:
                self.obs = out.observation

        last_value = float(self.policy.forward(self.obs)[1])
        diag = {"mask_fallback": self.diagnostics["mask_fallback"] - fallbacks_before}
        return Trajectory(
            obs_buf, act_buf, allowed_buf, rew_buf, val_buf, logp_buf, done_buf, trunc_buf,
            last_value, returns, lengths, infos, diag,
        )


def run_rollout(env: Env, policy: Policy, mask: MaskFn | None, n_steps: int, rng) -> Trajectory:
    """Collect ``n_steps`` transitions from a fresh runner.

    ``rng`` is an integer root seed or a Generator (a root seed is drawn from it).
    """
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**63 - 1))
    else:
        seed = int(rng)
    return RolloutRunner(env, policy, mask, seed).collect(n_steps)
