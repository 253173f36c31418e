"""Experiment configuration files (TOML).

Layout::

    [experiment]
    env = "paintshop"          # paintshop | lms | inventory
    mask = "all"               # level name; for lms the threshold theta (number)
    seeds = [0, 1, 2]
    total_timesteps = 1000000
    eval_episodes = 10
    eval_seed = 12345
    output_dir = "paintshop"   # relative to $MASKRL_OUT (default ./runs)

    [env]                      # fields of the environment's config dataclass
    lanes = 4

    [ppo]                      # PpoConfig overrides
    learning_rate = 0.0003

    [oracle]                   # only read by the ``oracle`` subcommand

The config hash covers everything except ``seeds``, ``output_dir`` and
``workers``, so a run is identified by (hash, seed).
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomlkit

from .envs.inventory import MASK_LEVELS as INV_LEVELS, InvConfig, InventoryEnv, inv_mask
from .envs.lms import LmsConfig, LmsEnv, lms_mask
from .envs.paintshop import MASK_LEVELS as PS_LEVELS, PaintShopConfig, PaintShopEnv, ps_combined_mask
from .masking import MaskFn
from .ppo import PpoConfig, config_hash

ENVS = ("paintshop", "lms", "inventory")
ENV_CONFIGS = {"paintshop": PaintShopConfig, "lms": LmsConfig, "inventory": InvConfig}
OUTPUT_ROOT_VAR = "MASKRL_OUT"
# set by the loader, not meant to be written in [env]
_HIDDEN_ENV_FIELDS = {"lms": {"curve", "periods"}}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ExperimentConfig:
    env: str
    mask: str | float = "none"
    seeds: list[int] = field(default_factory=lambda: [0])
    total_timesteps: int = 1_000_000
    eval_episodes: int = 10
    eval_seed: int = 12345
    deterministic_eval: bool = False
    output_dir: str = "."
    workers: int = 1
    env_params: dict = field(default_factory=dict)
    ppo_params: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    # -- derived objects ----------------------------------------------------

    def env_config(self):
        return ENV_CONFIGS[self.env](**self.env_params)

    def ppo_config(self) -> PpoConfig:
        return PpoConfig.from_dict(self.ppo_params)

    def make_env(self):
        cfg = self.env_config()
        return {"paintshop": PaintShopEnv, "lms": LmsEnv, "inventory": InventoryEnv}[self.env](cfg)

    def make_mask(self) -> MaskFn:
        if self.env == "paintshop":
            return ps_combined_mask(self.mask)
        if self.env == "lms":
            return lms_mask(float(self.mask))
        return inv_mask(self.mask, self.env_config())

    @property
    def mask_label(self) -> str:
        return f"{self.mask:g}" if isinstance(self.mask, float) else str(self.mask)

    def to_dict(self) -> dict:
        exp = {
            "env": self.env,
            "mask": self.mask,
            "seeds": list(self.seeds),
            "total_timesteps": self.total_timesteps,
            "eval_episodes": self.eval_episodes,
            "eval_seed": self.eval_seed,
            "deterministic_eval": self.deterministic_eval,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }
        out = {"experiment": exp}
        for key, value in (("env", self.env_params), ("ppo", self.ppo_params), ("oracle", self.oracle)):
            if value:
                out[key] = dict(value)
        return out

    def hash(self) -> str:
        d = self.to_dict()
        for k in ("seeds", "output_dir", "workers"):
            d["experiment"].pop(k)
        # hash the fully resolved env and PPO settings, not just the overrides
        d["env"] = _plain(dataclasses.asdict(self.env_config()))
        d["ppo"] = self.ppo_config().to_dict()
        d.pop("oracle", None)
        return config_hash(d)

    def output_path(self) -> Path:
        root = Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))
        return root / self.output_dir


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


# -- parsing and validation ---------------------------------------------------

def _check_type(path: str, value, expected):
    origin = typing.get_origin(expected)
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if origin in (typing.Union, types.UnionType):
        for arg in typing.get_args(expected):
            if arg is type(None):
                continue
            try:
                return _check_type(path, value, arg)
            except ConfigError:
                pass
        raise ConfigError(path, f"unexpected value {value!r}")
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        (inner, *_rest) = typing.get_args(expected)
        return tuple(_check_type(f"{path}[{i}]", v, inner) for i, v in enumerate(value))
    return value


def _validate_fields(section: str, data: dict, cls, skip=()) -> dict:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    out = {}
    for key, value in data.items():
        path = f"{section}.{key}"
        if key not in names:
            raise ConfigError(path, f"unknown key (expected one of: {', '.join(sorted(names))})")
        out[key] = _check_type(path, value, hints[key])
    return out


def from_dict(raw: dict) -> ExperimentConfig:
    raw = _plain(raw)
    unknown = set(raw) - {"experiment", "env", "ppo", "oracle"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    exp = raw.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "missing [experiment] section")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"env_params", "ppo_params", "oracle"}
    for key in exp:
        if key not in known:
            raise ConfigError(f"experiment.{key}", "unknown key")
    env = exp.get("env")
    if env not in ENVS:
        raise ConfigError("experiment.env", f"must be one of {ENVS}, got {env!r}")

    kwargs: dict = {"env": env}
    for key, typ in (("total_timesteps", int), ("eval_episodes", int), ("eval_seed", int),
                     ("workers", int), ("output_dir", str), ("deterministic_eval", bool)):
        if key in exp:
            kwargs[key] = _check_type(f"experiment.{key}", exp[key], typ)
    for key in ("total_timesteps", "eval_episodes", "workers"):
        if key in kwargs and kwargs[key] < 1:
            raise ConfigError(f"experiment.{key}", "must be positive")
    if "seeds" in exp:
        seeds = exp["seeds"]
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("experiment.seeds", "must be a non-empty list of integers")
        kwargs["seeds"] = [_check_type(f"experiment.seeds[{i}]", s, int) for i, s in enumerate(seeds)]

    mask = exp.get("mask", 0.0 if env == "lms" else "none")
    if env == "lms":
        mask = _check_type("experiment.mask", mask, float)
        if mask < 0:
            raise ConfigError("experiment.mask", "theta must be >= 0")
    else:
        levels = PS_LEVELS if env == "paintshop" else INV_LEVELS
        if mask not in levels:
            raise ConfigError("experiment.mask", f"unknown mask level {mask!r}; expected one of {levels}")
    kwargs["mask"] = mask

    env_params = _validate_fields("env", raw.get("env", {}), ENV_CONFIGS[env], _HIDDEN_ENV_FIELDS.get(env, ()))
    try:
        ENV_CONFIGS[env](**env_params)
    except ValueError as exc:
        raise ConfigError("env", str(exc)) from None
    if env == "inventory" and mask != "none" and ENV_CONFIGS[env](**env_params).base_stock is None:
        raise ConfigError("env.base_stock", "required for inventory masks when lost_sales_cost has no default")
    ppo_params = _validate_fields("ppo", raw.get("ppo", {}), PpoConfig)
    kwargs["env_params"] = {k: list(v) if isinstance(v, tuple) else v for k, v in env_params.items()}
    kwargs["ppo_params"] = {k: list(v) if isinstance(v, tuple) else v for k, v in ppo_params.items()}
    oracle = raw.get("oracle", {})
    if not isinstance(oracle, dict):
        raise ConfigError("oracle", "must be a table")
    kwargs["oracle"] = oracle
    return ExperimentConfig(**kwargs)


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomlkit.parse(text).unwrap()
    except tomlkit.exceptions.ParseError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return from_dict(raw)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def dumps(config: ExperimentConfig) -> str:
    return tomlkit.dumps(config.to_dict())
