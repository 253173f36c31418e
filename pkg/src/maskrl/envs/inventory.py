"""Lost-sales inventory control with Poisson demand and (optionally random) lead times.

Per period: the front of the order pipeline arrives, demand is served from
stock (unmet demand is lost), and the chosen order enters the pipeline at
its lead-time slot.  Action ``k`` orders ``k * quantum`` units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Env, StepOutcome, episode_seed, stream
from ..masking import MaskFn, heuristic_distance_mask, heuristic_threshold_mask, mask_all_allow

# published (lost-sales cost -> base-stock level) pairs
DEFAULT_BASE_STOCK = {1.0: 18, 4.0: 25}
DEFAULT_MAX_LEAD = {"det": 4, "stoch": 8}
MASK_LEVELS = ("none", "int", "thr")


@dataclass(frozen=True)
class InvConfig:
    holding_cost: float = 1.0
    lost_sales_cost: float = 1.0
    lead_mode: str = "det"
    max_lead: int | None = None
    demand_mean: float = 5.0
    horizon: int = 5000
    quantum: int = 10
    max_multiple: int = 10
    base_stock: int | None = None

    def __post_init__(self):
        if self.lead_mode not in DEFAULT_MAX_LEAD:
            raise ValueError(f"lead_mode must be 'det' or 'stoch', got {self.lead_mode!r}")
        if self.max_lead is None:
            object.__setattr__(self, "max_lead", DEFAULT_MAX_LEAD[self.lead_mode])
        if self.base_stock is None and float(self.lost_sales_cost) in DEFAULT_BASE_STOCK:
            object.__setattr__(self, "base_stock", DEFAULT_BASE_STOCK[float(self.lost_sales_cost)])
        if self.max_lead < 1 or self.horizon < 1 or self.quantum < 1 or self.max_multiple < 1:
            raise ValueError("max_lead, horizon, quantum and max_multiple must be positive")
        if self.demand_mean < 0 or self.holding_cost < 0 or self.lost_sales_cost < 0:
            raise ValueError("costs and demand mean must be non-negative")

    @property
    def n_actions(self) -> int:
        return self.max_multiple + 1

    @property
    def order_values(self) -> np.ndarray:
        return np.arange(self.n_actions) * self.quantum

    @property
    def max_order(self) -> int:
        return self.max_multiple * self.quantum


@dataclass
class InvState:
    inventory: int
    pipeline: list[int]
    t: int = 0

    @property
    def position(self) -> int:
        """On-hand plus everything in transit."""
        return self.inventory + sum(self.pipeline)


def poisson_cdf_table(lam: float) -> np.ndarray:
    if lam == 0:
        return np.array([1.0])
    pmf = math.exp(-lam)
    cdf = [pmf]
    k = 0
    while cdf[-1] < 1.0 - 1e-16 and k < 10_000:
        k += 1
        pmf *= lam / k
        cdf.append(cdf[-1] + pmf)
    return np.array(cdf)


def poisson_inverse_transform(u: np.ndarray, lam: float) -> np.ndarray:
    cdf = poisson_cdf_table(lam)
    return np.minimum(np.searchsorted(cdf, u, side="left"), len(cdf) - 1)


def draw_episode(seed: int, config: InvConfig) -> tuple[np.ndarray, np.ndarray]:
    """Demand and lead-time sequences for one episode, from separate streams."""
    demand = poisson_inverse_transform(stream(seed, 21).random(config.horizon), config.demand_mean)
    if config.lead_mode == "det":
        lead = np.full(config.horizon, config.max_lead)
    else:
        lead = stream(seed, 22).integers(1, config.max_lead + 1, size=config.horizon)
    return demand.astype(np.int64), lead.astype(np.int64)


def transition(state: InvState, order: int, demand: int, lead: int, config: InvConfig) -> tuple[float, dict]:
    """Advance ``state`` in place by one period; returns ``(reward, info)``."""
    arrival = state.pipeline[0]
    available = state.inventory + arrival
    pipeline = state.pipeline[1:] + [0]
    net = available - demand
    if net >= 0:
        reward = -config.holding_cost * net
    else:
        reward = config.lost_sales_cost * net
    state.inventory = max(net, 0)
    pipeline[lead - 1] += order
    state.pipeline = pipeline
    state.t += 1
    return float(reward), {"demand": demand, "arrival": arrival, "lost_sales": max(-net, 0), "order": order}


class InventoryEnv(Env):
    def __init__(self, config: InvConfig | None = None):
        super().__init__()
        self.config = config or InvConfig()
        self.action_count = self.config.n_actions
        self.observation_dim = 1 + self.config.max_lead
        self.horizon_limit = self.config.horizon
        self._scale = 1.0 / self.config.max_order
        self._state: InvState | None = None
        self._demand = self._lead = None

    @property
    def state(self) -> InvState:
        return self._state

    def _obs(self) -> np.ndarray:
        s = self._state
        return np.array([s.inventory, *s.pipeline], dtype=float) * self._scale

    def _reset(self, seed: int) -> np.ndarray:
        self._demand, self._lead = draw_episode(seed, self.config)
        self._state = InvState(0, [0] * self.config.max_lead)
        return self._obs()

    def _step(self, action: int) -> StepOutcome:
        s = self._state
        t = s.t
        reward, info = transition(
            s, action * self.config.quantum, int(self._demand[t]), int(self._lead[t]), self.config
        )
        return StepOutcome(self._obs(), reward, s.t >= self.config.horizon, info)


# --- base-stock heuristic and masks -------------------------------------

def inv_base_stock_action(state: InvState, base_stock: float) -> float:
    """Order quantity that lifts the inventory position to ``base_stock`` (may be negative)."""
    return base_stock - state.position


def nearest_grid_index(value: float, config: InvConfig) -> int:
    """Grid action nearest to ``value`` clamped to the grid; halves round up."""
    clamped = min(max(value, 0.0), config.max_order)
    return int(min(math.floor(clamped / config.quantum + 0.5), config.max_multiple))


def _with_nearest_fallback(mask: MaskFn, base_stock: float, config: InvConfig) -> MaskFn:
    def fn(state, n):
        allowed = mask.admissible(state, n)
        if allowed.any():
            return allowed
        out = np.zeros(n, dtype=bool)
        out[nearest_grid_index(inv_base_stock_action(state, base_stock), config)] = True
        return out

    return MaskFn(fn, mask.name)


def inv_mask_int(base_stock: float, config: InvConfig) -> MaskFn:
    """Orders within one quantum of the base-stock prescription."""
    inner = heuristic_distance_mask(
        lambda s: inv_base_stock_action(s, base_stock), config.quantum, config.order_values, "int"
    )
    return _with_nearest_fallback(inner, base_stock, config)


def inv_mask_thr(base_stock: float, config: InvConfig) -> MaskFn:
    """Orders at least as large as the base-stock prescription."""
    inner = heuristic_threshold_mask(
        lambda s: inv_base_stock_action(s, base_stock), ">=", config.order_values, "thr"
    )
    return _with_nearest_fallback(inner, base_stock, config)


def inv_mask(level: str, config: InvConfig, base_stock: float | None = None) -> MaskFn:
    S = config.base_stock if base_stock is None else base_stock
    if level == "none":
        return mask_all_allow()
    if S is None:
        raise ValueError("base_stock must be set for inventory masks")
    if level == "int":
        return inv_mask_int(S, config)
    if level == "thr":
        return inv_mask_thr(S, config)
    raise ValueError(f"unknown inventory mask level {level!r}; expected one of {MASK_LEVELS}")


def base_stock_policy(base_stock: float, config: InvConfig):
    """Grid action nearest to ``max(0, S - position)``."""

    def act(state: InvState) -> int:
        return nearest_grid_index(max(0.0, inv_base_stock_action(state, base_stock)), config)

    return act


def simulate_policy_costs(act, config: InvConfig, episodes: int, seed: int) -> np.ndarray:
    """Mean per-period cost of each of ``episodes`` runs of a state->action rule."""
    costs = np.empty(episodes)
    for k in range(episodes):
        demand, lead = draw_episode(episode_seed(seed, k), config)
        state = InvState(0, [0] * config.max_lead)
        total = 0.0
        for t in range(config.horizon):
            reward, _ = transition(state, act(state) * config.quantum, int(demand[t]), int(lead[t]), config)
            total -= reward
        costs[k] = total / config.horizon
    return costs


def inv_base_stock_simulate(base_stock: float, config: InvConfig, episodes: int, seed: int) -> float:
    return float(simulate_policy_costs(base_stock_policy(base_stock, config), config, episodes, seed).mean())
