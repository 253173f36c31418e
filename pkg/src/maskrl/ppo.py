"""Proximal policy optimization with masked categorical policies.

Defaults follow the usual Stable-Baselines3 PPO settings: separate 2x64 tanh
actor and critic, orthogonal init (actor output gain 0.01), Adam with
eps=1e-5, global grad-norm clip 0.5, no value clipping, no schedules.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import tempfile
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import __version__
from .core import Env, RolloutRunner, Trajectory, derive_seed, stream
from .masking import MaskFn, SENTINEL
from .nn import MLP, Adam, clip_by_global_norm, flatten_into

CHECKPOINT_FORMAT = 1


class NonFiniteLossError(FloatingPointError):
    """Raised before an optimizer step whose loss or gradients are not finite."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PpoConfig:
    horizon: int = 2048
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    epochs: int = 10
    learning_rate: float = 3e-4
    minibatch: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    hidden: tuple[int, ...] = (64, 64)
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5
    normalize_advantage: bool = True

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PpoConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(int(h) for h in d["hidden"])
        return cls(**d)


def config_hash(obj) -> str:
    """Short stable hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


class PolicyBundle:
    """Actor, critic and their shared optimizer state."""

    def __init__(self, observation_dim: int, action_count: int, config: PpoConfig | None = None, seed: int = 0):
        self.config = config or PpoConfig()
        self.observation_dim = int(observation_dim)
        self.action_count = int(action_count)
        rng = stream(seed, 2)
        sizes = (self.observation_dim, *self.config.hidden)
        self.actor = MLP((*sizes, self.action_count), rng, out_gain=0.01)
        self.critic = MLP((*sizes, 1), rng, out_gain=1.0)
        # both networks live in one flat vector so the optimizer sees one array
        self.flat, views = flatten_into(self.actor.params + self.critic.params)
        n_actor = len(self.actor.params)
        self.actor.params, self.critic.params = views[:n_actor], views[n_actor:]
        self.optimizer = Adam(self.flat.size, lr=self.config.learning_rate, eps=self.config.adam_eps)
        self.updates = 0

    @property
    def params(self) -> list[np.ndarray]:
        return self.actor.params + self.critic.params

    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, float]:
        return self.actor(obs), float(self.critic(obs)[0])

    def logits(self, obs: np.ndarray) -> np.ndarray:
        return self.actor(obs)

    def values(self, obs: np.ndarray) -> np.ndarray:
        return self.critic(obs)[..., 0]

    # -- checkpoints --------------------------------------------------------

    def save(self, path, meta: dict | None = None) -> None:
        arrays = {}
        for prefix, net in (("actor", self.actor), ("critic", self.critic)):
            for i, p in enumerate(net.params):
                arrays[f"{prefix}_{i}"] = p
        arrays["adam_m"] = self.optimizer.m
        arrays["adam_v"] = self.optimizer.v
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": __version__,
            "observation_dim": self.observation_dim,
            "action_count": self.action_count,
            "ppo": self.config.to_dict(),
            "ppo_hash": config_hash(self.config.to_dict()),
            "adam_t": self.optimizer.t,
            "updates": self.updates,
            "meta": meta or {},
        }
        arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
        path = os.fspath(path)
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".npz.tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, **arrays)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path) -> "PolicyBundle":
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            if header.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
            bundle = cls(header["observation_dim"], header["action_count"], PpoConfig.from_dict(header["ppo"]))
            bundle.actor.load([data[f"actor_{i}"] for i in range(len(bundle.actor.params))])
            bundle.critic.load([data[f"critic_{i}"] for i in range(len(bundle.critic.params))])
            if data["adam_m"].shape != bundle.flat.shape:
                raise ValueError("optimizer state does not match the networks")
            bundle.optimizer.m = data["adam_m"].copy()
            bundle.optimizer.v = data["adam_v"].copy()
        bundle.optimizer.t = header["adam_t"]
        bundle.updates = header["updates"]
        bundle.meta = header["meta"]
        return bundle


# -- advantage estimation ---------------------------------------------------

@dataclass
class AdvantageBatch:
    advantages: np.ndarray  # normalized when requested
    raw_advantages: np.ndarray
    returns: np.ndarray


def gae(traj: Trajectory, gamma: float = 0.99, lam: float = 0.95, normalize: bool = True) -> AdvantageBatch:
    """Generalized advantage estimates, reset at episode boundaries.

    A truncated episode is bootstrapped from the value of its cut-off
    observation (``traj.truncated_values``); a terminated one from zero.
    """
    n = len(traj)
    rewards, values, dones = traj.rewards, traj.values, traj.dones
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        if dones[t]:
            next_value, running = traj.truncated_values[t], 0.0
        else:
            next_value = traj.last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    returns = adv + values
    out = adv
    if normalize and n > 1:
        out = (adv - adv.mean()) / (adv.std() + 1e-8)
    return AdvantageBatch(out, adv, returns)


# -- loss and update --------------------------------------------------------

def masked_log_policy(logits: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    z = np.where(allowed, logits, SENTINEL)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ppo_loss_and_grads(bundle: PolicyBundle, obs, actions, allowed, old_log_probs, advantages, returns,
                       config: PpoConfig | None = None):
    """Clipped-surrogate loss on one minibatch plus gradients for ``bundle.params``."""
    cfg = config or bundle.config
    b = len(actions)
    rows = np.arange(b)
    logits, a_acts = bundle.actor.forward(obs)
    values, c_acts = bundle.critic.forward(obs)
    values = values[:, 0]

    logp_all = masked_log_policy(logits, allowed)
    probs = np.where(allowed, np.exp(logp_all), 0.0)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_log_probs)
    surr1 = ratio * advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr2 = clipped * advantages
    policy_loss = -np.minimum(surr1, surr2).mean()
    plogp = np.where(allowed, probs * logp_all, 0.0)
    entropy_each = -plogp.sum(axis=1)
    entropy = entropy_each.mean()
    err = values - returns
    value_loss = (err * err).mean()
    loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy

    # d loss / d logp(a)
    g_logp = -np.where(surr1 <= surr2, surr1, 0.0) / b
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    d_logits = g_logp[:, None] * (onehot - probs)
    if cfg.ent_coef:
        # dH/dz_k = -p_k (log p_k + H)
        d_h = -np.where(allowed, probs * (logp_all + entropy_each[:, None]), 0.0)
        d_logits -= cfg.ent_coef * d_h / b
    d_logits = np.where(allowed, d_logits, 0.0)
    d_values = (cfg.vf_coef * 2.0 / b) * err

    grads = bundle.actor.backward(a_acts, d_logits) + bundle.critic.backward(c_acts, d_values[:, None])
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "approx_kl": float(np.mean((ratio - 1.0) - (logp - old_log_probs))),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
        "ratio": ratio,
    }
    return float(loss), grads, stats


def ppo_update(bundle: PolicyBundle, traj: Trajectory, masks: np.ndarray | None = None,
               config: PpoConfig | None = None, rng: np.random.Generator | None = None) -> dict:
    """Run the PPO epochs on one rollout; ``masks`` defaults to the recorded ones."""
    cfg = config or bundle.config
    rng = rng if rng is not None else np.random.default_rng(0)
    allowed = traj.allowed if masks is None else np.asarray(masks, dtype=bool)
    batch = gae(traj, cfg.gamma, cfg.gae_lambda, cfg.normalize_advantage)
    n = len(traj)
    mb = min(cfg.minibatch, n)
    keys = ("loss", "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction")
    totals = {k: 0.0 for k in keys}
    steps = 0
    first_ratio = None
    grad_norms = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            loss, grads, stats = ppo_loss_and_grads(
                bundle, traj.observations[idx], traj.actions[idx], allowed[idx],
                traj.log_probs[idx], batch.advantages[idx], batch.returns[idx], cfg,
            )
            if first_ratio is None:
                first_ratio = stats["ratio"]
            grad = np.concatenate([g.ravel() for g in grads])
            if not (math.isfinite(loss) and np.isfinite(grad).all()):
                diag = {k: stats[k] for k in keys}
                diag.update(epoch=epoch, minibatch_start=start, updates=bundle.updates)
                raise NonFiniteLossError("non-finite PPO loss; update aborted", diag)
            grad, norm = clip_by_global_norm(grad, cfg.max_grad_norm)
            grad_norms.append(norm)
            bundle.optimizer.step(bundle.flat, grad)
            for k in keys:
                totals[k] += stats[k]
            steps += 1
    bundle.updates += 1
    var_ret = np.var(batch.returns)
    out = {k: totals[k] / steps for k in keys}
    out.update(
        optimizer_steps=steps,
        first_ratio=first_ratio,
        grad_norm=float(np.mean(grad_norms)),
        explained_variance=float(1.0 - np.var(batch.returns - traj.values) / var_ret) if var_ret > 0 else 0.0,
    )
    return out


# -- training loop ----------------------------------------------------------

@dataclass
class TrainResult:
    bundle: PolicyBundle
    curve: list[tuple[int, float]] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    mask_fallbacks: int = 0


def train(env_factory: Callable[[], Env], mask: MaskFn | None, total_timesteps: int, seed: int,
          callbacks: Iterable[Callable] = (), config: PpoConfig | None = None) -> TrainResult:
    """Alternate rollouts and updates until ``total_timesteps`` are collected.

    The learning curve holds ``(timestep, mean return of the last 100
    finished episodes)`` after every rollout once an episode has finished.
    Callbacks are called as ``cb(timestep, bundle, trajectory, diagnostics)``;
    returning ``False`` stops training early.
    """
    cfg = config or PpoConfig()
    env = env_factory()
    bundle = PolicyBundle(env.observation_dim, env.action_count, cfg, seed)
    runner = RolloutRunner(env, bundle, mask, derive_seed(seed, 3))
    shuffle_rng = stream(seed, 4)
    recent: deque[float] = deque(maxlen=100)
    result = TrainResult(bundle)
    timestep = 0
    while timestep < total_timesteps:
        traj = runner.collect(cfg.horizon)
        timestep += len(traj)
        recent.extend(traj.episode_returns)
        diag = ppo_update(bundle, traj, None, cfg, shuffle_rng)
        diag["timestep"] = timestep
        diag["mask_fallback"] = traj.diagnostics.get("mask_fallback", 0)
        result.diagnostics.append({k: v for k, v in diag.items() if k != "first_ratio"})
        if recent:
            result.curve.append((timestep, float(np.mean(recent))))
        if any(cb(timestep, bundle, traj, diag) is False for cb in callbacks):
            break
    result.mask_fallbacks = runner.diagnostics["mask_fallback"]
    return result
