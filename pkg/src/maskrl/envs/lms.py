"""Peak-load management over one day of 15-minute periods.

Each period the controller either turns the air conditioning ``off`` (action
0, excludes the period's load from the peak; at most three times a day) or
leaves it ``on`` (action 1).  Only the final step is rewarded: +1 if the peak
of the on-periods stayed below the threshold, -1 otherwise.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..core import Env, StepOutcome, stream
from ..masking import MaskFn, mask_all_allow

OFF, ON = 0, 1
REFERENCE_CURVE_FILE = "lms_reference_curve.txt"
# sha256 of the shipped curve file; guards against silent edits
REFERENCE_CURVE_SHA256 = "7de5696b8ea02e87e05c74bf0361eb044ce10cec7b4bce8357a64f4ae4d014bf"


def read_curve(path) -> np.ndarray:
    with open(path) as fh:
        values = [float(line) for line in fh if line.strip()]
    curve = np.asarray(values)
    if curve.shape != (96,):
        raise ValueError(f"load curve must have exactly 96 values, got {curve.size}")
    if (curve < 0).any():
        raise ValueError("load curve values must be non-negative")
    return curve


def lms_reference_curve() -> np.ndarray:
    ref = resources.files("maskrl.envs") / "data" / REFERENCE_CURVE_FILE
    with resources.as_file(ref) as path:
        raw = path.read_bytes()
        if hashlib.sha256(raw).hexdigest() != REFERENCE_CURVE_SHA256:
            raise RuntimeError("reference load curve file does not match its recorded hash")
        return read_curve(path)


@dataclass(frozen=True)
class LmsConfig:
    periods: int = 96
    off_budget: int = 3
    threshold: float = 1.24
    sigma: float = 0.0
    curve: tuple[float, ...] = field(default_factory=lambda: tuple(lms_reference_curve()))

    def __post_init__(self):
        if len(self.curve) != self.periods:
            raise ValueError(f"curve length {len(self.curve)} != periods {self.periods}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass
class LmsState:
    t: int
    prev_load: float
    forecast: float
    remaining_off: int
    peak: float


class LmsEnv(Env):
    def __init__(self, config: LmsConfig | None = None):
        super().__init__()
        self.config = config or LmsConfig()
        self.curve = np.asarray(self.config.curve, dtype=float)
        self.action_count = 2
        self.observation_dim = 3
        self.horizon_limit = self.config.periods
        self._state: LmsState | None = None
        self._forecasts: np.ndarray | None = None

    @property
    def state(self) -> LmsState:
        return self._state

    def forecasts_for(self, seed: int) -> np.ndarray:
        noise = stream(seed, 11).normal(0.0, 1.0, self.config.periods) * self.config.sigma
        return np.maximum(self.curve + noise, 0.0)

    def _obs(self) -> np.ndarray:
        s = self._state
        return np.array([s.prev_load, s.forecast, s.remaining_off / self.config.off_budget])

    def _reset(self, seed: int) -> np.ndarray:
        self._forecasts = self.forecasts_for(seed)
        self._state = LmsState(0, float(self.curve[0]), float(self._forecasts[0]), self.config.off_budget, 0.0)
        return self._obs()

    def _step(self, action: int) -> StepOutcome:
        s, cfg = self._state, self.config
        load = float(self.curve[s.t])
        effective_off = action == OFF and s.remaining_off > 0
        if effective_off:
            s.remaining_off -= 1
        else:
            s.peak = max(s.peak, load)
        info = {"off_effective": effective_off, "peak": s.peak}
        if s.t == cfg.periods - 1:
            solved = s.peak < cfg.threshold
            info["solved"] = solved
            s.t += 1
            return StepOutcome(self._obs_terminal(), 1.0 if solved else -1.0, True, info)
        s.t += 1
        s.prev_load = load
        s.forecast = float(self._forecasts[s.t])
        return StepOutcome(self._obs(), 0.0, False, info)

    def _obs_terminal(self) -> np.ndarray:
        s = self._state
        return np.array([self.curve[-1], 0.0, s.remaining_off / self.config.off_budget])


def lms_mask(theta: float) -> MaskFn:
    """``off`` only when the forecast reaches ``theta``; ``on`` always.  ``theta=0`` is no mask."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if theta == 0:
        return mask_all_allow()

    def fn(state: LmsState, n):
        return np.array([state.forecast >= theta, True])

    return MaskFn(fn, f"lms>={theta:g}")


def threshold_rule(state: LmsState, level: float = 1.24) -> int:
    """Non-learning baseline: turn off iff the forecast reaches ``level``."""
    return OFF if state.forecast >= level else ON
