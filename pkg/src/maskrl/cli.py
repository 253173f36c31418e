"""``maskrl`` command line: train, eval, baseline, oracle, curves.

Every subcommand takes one experiment config path.  Outputs go to
``$MASKRL_OUT/<output_dir>`` and are named by config hash (and seed).
Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, from_dict, load
from .envs.inventory import base_stock_policy
from .envs.paintshop import MASK_LEVELS as PS_LEVELS, PaintShopConfig, ps_combined_mask, ps_generate_instance
from .evaluate import (
    inv_evaluate,
    lms_evaluate,
    lms_threshold_agent,
    policy_agent_factory,
    ps_evaluate,
    ps_greedy_agent,
)
from .oracles import InstanceTooLarge, inventory_dp, paintshop_optimum
from .ppo import PolicyBundle, train

log = logging.getLogger("maskrl")

METRIC_NAMES = {"paintshop": "color_changes", "lms": "solved", "inventory": "cost_per_step"}
EVAL_HEADER = ["config_hash", "seed", "version", "env", "mask", "episode", "metric", "value",
               "episode_return", "length", "completed"]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> Path:
    """Write atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_name(cfg: ExperimentConfig, seed: int | None = None) -> str:
    return cfg.hash() if seed is None else f"{cfg.hash()}_seed{seed}"


# -- train --------------------------------------------------------------------

def _train_seed(raw: dict, seed: int) -> list[Path]:
    cfg = from_dict(raw)
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    name = run_name(cfg, seed)
    log.info("training %s (%s, mask=%s) for %d steps", name, cfg.env, cfg.mask_label, cfg.total_timesteps)
    result = train(cfg.make_env, cfg.make_mask(), cfg.total_timesteps, seed, config=cfg.ppo_config())
    ckpt = out / f"{name}.npz"
    result.bundle.save(ckpt, meta={"config_hash": cfg.hash(), "seed": seed, "env": cfg.env, "mask": cfg.mask_label})
    rows = [(cfg.hash(), seed, __version__, cfg.env, cfg.mask_label, t, r) for t, r in result.curve]
    curve = write_csv(out / f"{name}_curve.csv",
                      ["config_hash", "seed", "version", "env", "mask", "timestep", "mean_episode_reward"], rows)
    return [ckpt, curve]


def _map_seeds(fn, cfg: ExperimentConfig) -> list:
    raw = cfg.to_dict()
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, [raw] * len(cfg.seeds), cfg.seeds))
    return [fn(raw, seed) for seed in cfg.seeds]


def cmd_train(cfg: ExperimentConfig) -> list[Path]:
    return [p for paths in _map_seeds(_train_seed, cfg) for p in paths]


# -- eval / baseline ------------------------------------------------------------

def _evaluate(cfg: ExperimentConfig, make_agent):
    env_cfg = cfg.env_config()
    if cfg.env == "paintshop":
        return ps_evaluate(make_agent, env_cfg, cfg.eval_episodes, cfg.eval_seed)
    if cfg.env == "lms":
        return lms_evaluate(make_agent, env_cfg, cfg.eval_episodes, cfg.eval_seed)
    return inv_evaluate(make_agent, env_cfg, cfg.eval_episodes, cfg.eval_seed)


def _eval_rows(cfg: ExperimentConfig, seed, mask_label: str, records) -> list[tuple]:
    metric = METRIC_NAMES[cfg.env]
    head = (cfg.hash(), seed, __version__, cfg.env, mask_label)
    rows = [(*head, r.index, metric, r.metric, r.episode_return, r.length, r.completed) for r in records]
    values = [r.metric for r in records]
    rows.append((*head, "mean", metric, float(np.mean(values)), float(np.mean([r.episode_return for r in records])),
                 float(np.mean([r.length for r in records])), all(r.completed for r in records)))
    return rows


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint, seed) -> Path:
    bundle = PolicyBundle.load(checkpoint)
    env = cfg.make_env()
    if bundle.observation_dim != env.observation_dim or bundle.action_count != env.action_count:
        raise ValueError(
            f"checkpoint {checkpoint} has obs_dim={bundle.observation_dim}, actions={bundle.action_count}; "
            f"config environment has obs_dim={env.observation_dim}, actions={env.action_count}"
        )
    records = _evaluate(cfg, policy_agent_factory(bundle, cfg.make_mask(), cfg.deterministic_eval))
    name = run_name(cfg, seed)
    return write_csv(cfg.output_path() / f"{name}_eval.csv", EVAL_HEADER, _eval_rows(cfg, seed, cfg.mask_label, records))


def cmd_eval(cfg: ExperimentConfig, checkpoint=None) -> list[Path]:
    if checkpoint is not None:
        meta = getattr(PolicyBundle.load(checkpoint), "meta", {})
        return [evaluate_checkpoint(cfg, checkpoint, meta.get("seed", "na"))]
    paths = []
    for seed in cfg.seeds:
        ckpt = cfg.output_path() / f"{run_name(cfg, seed)}.npz"
        if not ckpt.exists():
            raise FileNotFoundError(f"no checkpoint {ckpt}; run 'maskrl train' first")
        paths.append(evaluate_checkpoint(cfg, ckpt, seed))
    return paths


def baseline_agent(cfg: ExperimentConfig):
    env_cfg = cfg.env_config()
    if cfg.env == "paintshop":
        return "greedy", ps_greedy_agent
    if cfg.env == "lms":
        return f"rule>={env_cfg.threshold:g}", lms_threshold_agent(env_cfg.threshold)
    if env_cfg.base_stock is None:
        raise ConfigError("env.base_stock", "base-stock baseline needs a base-stock level")
    act = base_stock_policy(env_cfg.base_stock, env_cfg)
    return f"base-stock-{env_cfg.base_stock}", lambda env, seed: (lambda obs, state: act(state))


def cmd_baseline(cfg: ExperimentConfig) -> Path:
    label, make_agent = baseline_agent(cfg)
    records = _evaluate(cfg, make_agent)
    path = cfg.output_path() / f"{run_name(cfg)}_baseline.csv"
    return write_csv(path, EVAL_HEADER, _eval_rows(cfg, cfg.eval_seed, label, records))


# -- oracle -------------------------------------------------------------------

def cmd_oracle(cfg: ExperimentConfig) -> Path:
    """Exact optimum of a small instance described by the ``[oracle]`` table.

    paint shop: ``sequence = [...]`` or ``cars = n`` (drawn with ``eval_seed``),
    optional ``mask`` level.  inventory: ``horizon``, ``order_levels`` and
    optionally ``demand_mean`` (single-period lead time).
    """
    spec = cfg.oracle
    header = ["config_hash", "seed", "version", "env", "quantity", "value", "detail"]
    if cfg.env == "paintshop":
        env_cfg: PaintShopConfig = cfg.env_config()
        if "sequence" in spec:
            seq = [int(c) for c in spec["sequence"]]
        elif "cars" in spec:
            seq = ps_generate_instance(cfg.eval_seed, dataclasses.replace(env_cfg, sequence_length=int(spec["cars"])))
        else:
            raise ConfigError("oracle.sequence", "give 'sequence' or 'cars'")
        level = spec.get("mask", "none")
        if level not in PS_LEVELS:
            raise ConfigError("oracle.mask", f"unknown mask level {level!r}")
        mask = None if level == "none" else ps_combined_mask(level)
        changes, actions = paintshop_optimum(seq, env_cfg, mask)
        rows = [(cfg.hash(), cfg.eval_seed, __version__, cfg.env, f"min_color_changes[{level}]", changes,
                 " ".join(map(str, actions))),
                (cfg.hash(), cfg.eval_seed, __version__, cfg.env, "sequence", len(seq), " ".join(map(str, seq)))]
    elif cfg.env == "inventory":
        env_cfg = cfg.env_config()
        try:
            horizon = int(spec["horizon"])
            levels = [int(v) for v in spec["order_levels"]]
        except KeyError as exc:
            raise ConfigError(f"oracle.{exc.args[0]}", "required for the inventory oracle") from None
        if horizon > 200 or len(levels) > 50:
            raise InstanceTooLarge("inventory oracle limited to horizon <= 200 and <= 50 order levels")
        res = inventory_dp(horizon=horizon, demand_mean=float(spec.get("demand_mean", env_cfg.demand_mean)),
                           order_levels=levels, holding_cost=env_cfg.holding_cost,
                           lost_sales_cost=env_cfg.lost_sales_cost)
        rows = [(cfg.hash(), cfg.eval_seed, __version__, cfg.env, "optimal_total_cost", res.optimal_cost,
                 f"horizon={horizon}")]
    else:
        raise ConfigError("experiment.env", "no exact oracle for lms (use 'baseline' for the threshold rule)")
    return write_csv(cfg.output_path() / f"{run_name(cfg)}_oracle.csv", header, rows)


# -- curves -------------------------------------------------------------------

def cmd_curves(cfg: ExperimentConfig) -> Path:
    """Merge the per-seed learning curves into mean/min/max per timestep."""
    by_step: dict[int, list[float]] = {}
    for seed in cfg.seeds:
        path = cfg.output_path() / f"{run_name(cfg, seed)}_curve.csv"
        if not path.exists():
            raise FileNotFoundError(f"no learning curve {path}; run 'maskrl train' first")
        for row in read_csv(path):
            by_step.setdefault(int(row["timestep"]), []).append(float(row["mean_episode_reward"]))
    seeds = " ".join(map(str, cfg.seeds))
    rows = [(cfg.hash(), seeds, __version__, cfg.env, cfg.mask_label, t, len(v), np.mean(v), min(v), max(v))
            for t, v in sorted(by_step.items())]
    header = ["config_hash", "seed", "version", "env", "mask", "timestep", "n_seeds",
              "mean_episode_reward", "min", "max"]
    return write_csv(cfg.output_path() / f"{run_name(cfg)}_curves.csv", header, rows)


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("train", "train one policy per seed"),
                            ("eval", "evaluate trained checkpoints"),
                            ("baseline", "run the non-learning baseline"),
                            ("oracle", "solve a small instance exactly"),
                            ("curves", "merge learning curves across seeds")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config (TOML)")
        if name == "eval":
            p.add_argument("--checkpoint", help="evaluate this checkpoint instead of the config's seeds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "train":
            paths = cmd_train(cfg)
        elif args.command == "eval":
            paths = cmd_eval(cfg, args.checkpoint)
        elif args.command == "baseline":
            paths = [cmd_baseline(cfg)]
        elif args.command == "oracle":
            paths = [cmd_oracle(cfg)]
        else:
            paths = [cmd_curves(cfg)]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported via the exit code
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


def run() -> None:
    sys.exit(main())
