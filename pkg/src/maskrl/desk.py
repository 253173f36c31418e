"""Desk-scale experiment suite: scaled-down reruns of the mask comparisons.

    python -m maskrl.desk [--only paintshop lms inventory] [--out results/desk]

Every run (one config and one seed) is stored as a JSON file named by config
hash and seed.  Finished runs are skipped, so the suite can be stopped and
resumed, and the acceptance tests read the stored files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cli import _evaluate, baseline_agent
from .config import ExperimentConfig, from_dict
from .evaluate import policy_agent_factory, summarize
from .ppo import train

log = logging.getLogger("maskrl.desk")

DEFAULT_OUT = Path("results/desk")
PS_LEVELS = ("none", "inv", "inv+gr", "inv+gr+ft", "all")
LMS_SIGMAS = (0.0, 0.2)
LMS_THETAS = (0.0, 0.4, 0.8, 1.2)
# unit orders (0..10); see the README on order granularity
INV_ENV = {"quantum": 1, "max_multiple": 10}
INV_CASES = ((1.0, "det"), (4.0, "stoch"))
INV_LEVELS = ("none", "int", "thr")


def paintshop_grid(timesteps: int = 1_000_000) -> list[dict]:
    return [{"experiment": {"env": "paintshop", "mask": level, "seeds": [0, 1, 2], "total_timesteps": timesteps,
                            "eval_episodes": 10},
             "env": {"lanes": 4, "width": 4, "colors": 10}}
            for level in PS_LEVELS]


def lms_grid(timesteps: int = 1_000_000) -> list[dict]:
    return [{"experiment": {"env": "lms", "mask": theta, "seeds": [0], "total_timesteps": timesteps,
                            "eval_episodes": 100},
             "env": {"sigma": sigma}}
            for sigma in LMS_SIGMAS for theta in LMS_THETAS]


def inventory_grid(timesteps: int = 1_000_000) -> list[dict]:
    return [{"experiment": {"env": "inventory", "mask": level, "seeds": [0, 1, 2], "total_timesteps": timesteps,
                            "eval_episodes": 100},
             "env": {"lost_sales_cost": p, "lead_mode": mode, **INV_ENV}}
            for p, mode in INV_CASES for level in INV_LEVELS]


GRIDS = {"paintshop": paintshop_grid, "lms": lms_grid, "inventory": inventory_grid}


def _describe(cfg: ExperimentConfig) -> dict:
    env = cfg.env_params
    return {"env": cfg.env, "mask": cfg.mask_label, "sigma": env.get("sigma"),
            "lost_sales_cost": env.get("lost_sales_cost"), "lead_mode": env.get("lead_mode")}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    os.replace(tmp, path)


def run_policy(cfg: ExperimentConfig, seed: int) -> dict:
    start = time.time()
    result = train(cfg.make_env, cfg.make_mask(), cfg.total_timesteps, seed, config=cfg.ppo_config())
    records = _evaluate(cfg, policy_agent_factory(result.bundle, cfg.make_mask(), cfg.deterministic_eval))
    mean, se = summarize(records)
    return {
        **_describe(cfg), "kind": "rl", "seed": seed, "config_hash": cfg.hash(), "version": __version__,
        "config": cfg.to_dict(), "total_timesteps": cfg.total_timesteps,
        "curve": [[t, r] for t, r in result.curve], "metrics": [r.metric for r in records],
        "mean": mean, "se": se, "mask_fallbacks": result.mask_fallbacks, "seconds": round(time.time() - start, 1),
    }


def run_baseline(cfg: ExperimentConfig) -> dict:
    label, make_agent = baseline_agent(cfg)
    records = _evaluate(cfg, make_agent)
    mean, se = summarize(records)
    return {**_describe(cfg), "kind": "baseline", "baseline": label, "seed": None, "config_hash": cfg.hash(),
            "version": __version__, "config": cfg.to_dict(), "metrics": [r.metric for r in records],
            "mean": mean, "se": se}


def run_suite(envs=tuple(GRIDS), out: Path = DEFAULT_OUT, timesteps: int = 1_000_000) -> list[Path]:
    """Run every missing job of the selected grids; returns the files written."""
    written = []
    for env in envs:
        for raw in GRIDS[env](timesteps):
            cfg = from_dict(raw)
            jobs = [(f"{cfg.hash()}_seed{s}", lambda s=s: run_policy(cfg, s)) for s in cfg.seeds]
            # one baseline per environment setting (the mask does not affect it)
            if cfg.mask_label in ("none", "0"):
                jobs.append((f"{cfg.hash()}_baseline", lambda: run_baseline(cfg)))
            for name, job in jobs:
                path = out / env / f"{name}.json"
                if path.exists():
                    continue
                log.info("%s %s mask=%s -> %s", env, cfg.env_params, cfg.mask_label, path.name)
                payload = job()
                _write_json(path, payload)
                log.info("  mean %.4f (se %.4f)", payload["mean"], payload["se"])
                written.append(path)
    return written


def load_results(out: Path = DEFAULT_OUT, env: str | None = None) -> list[dict]:
    pattern = f"{env}/*.json" if env else "*/*.json"
    return [json.loads(p.read_text()) for p in sorted(Path(out).glob(pattern))]


def select(results: list[dict], **match) -> list[dict]:
    return [r for r in results if all(r.get(k) == v for k, v in match.items())]


def seed_mean(results: list[dict], **match) -> float:
    """Mean over seeds of each run's evaluation mean."""
    runs = select(results, kind="rl", **match)
    if not runs:
        raise LookupError(f"no desk results for {match}")
    return float(np.mean([r["mean"] for r in runs]))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m maskrl.desk", description=__doc__.splitlines()[0])
    parser.add_argument("--only", nargs="+", choices=sorted(GRIDS), default=list(GRIDS))
    parser.add_argument("--out", type=Path, default=DEFAULT_OUT)
    parser.add_argument("--timesteps", type=int, default=1_000_000)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    run_suite(args.only, args.out, args.timesteps)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
