"""Brute-force reference solvers for small instances.

These never share code paths with the learning stack beyond the
environment transition itself, so they can certify DERIVED test values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .envs.paintshop import (
    PaintShopConfig,
    PaintShopState,
    apply_action,
    initial_state,
    ps_mask_inv,
)
from .masking import MaskFn

PAINTSHOP_MAX_CARS = 10
PAINTSHOP_MAX_CELLS = 4


class InstanceTooLarge(ValueError):
    pass


def paintshop_optimum(sequence, config: PaintShopConfig, mask: MaskFn | None = None) -> tuple[int, list[int]]:
    """Minimum colour changes over all complete action sequences.

    With ``mask`` the search only follows admissible actions (which must also
    be valid).  Returns ``(changes, actions)`` for one optimal sequence.
    """
    sequence = list(sequence)
    if len(sequence) > PAINTSHOP_MAX_CARS or config.lanes * config.width > PAINTSHOP_MAX_CELLS:
        raise InstanceTooLarge(
            f"exhaustive search is limited to {PAINTSHOP_MAX_CARS} cars and "
            f"{PAINTSHOP_MAX_CELLS} buffer cells"
        )
    config = PaintShopConfig(
        lanes=config.lanes, width=config.width, colors=max(config.colors, max(sequence, default=1)),
        lookahead=config.lookahead, sequence_length=len(sequence),
    )
    n = config.n_actions

    def rebuild(key) -> PaintShopState:
        lanes, position, color = key
        return PaintShopState(config.width, [list(l) for l in lanes], sequence, position, color,
                              [0] * (position - sum(len(l) for l in lanes)))

    @lru_cache(maxsize=None)
    def best(key) -> tuple[float, tuple[int, ...]]:
        state = rebuild(key)
        if state.finished:
            return 0, ()
        allowed = ps_mask_inv(state)
        if mask is not None:
            allowed = allowed & mask.admissible(state, n)
        result = (math.inf, ())
        for a in np.flatnonzero(allowed):
            nxt = state.copy()
            _, info = apply_action(nxt, int(a), config)
            sub, path = best(nxt.key())
            cost = int(info["color_change"]) + sub
            if cost < result[0]:
                result = (cost, (int(a),) + path)
        return result

    cost, path = best(initial_state(sequence, config).key())
    if cost == math.inf:
        raise RuntimeError("no complete admissible action sequence exists")
    return int(cost), list(path)


# --- inventory dynamic programme -----------------------------------------

def truncated_poisson(lam: float, tail: float = 1e-14) -> np.ndarray:
    """Poisson pmf cut where the remaining mass drops below ``tail``; the
    remainder is folded into the last bucket."""
    if lam == 0:
        return np.array([1.0])
    pmf = [math.exp(-lam)]
    total = pmf[0]
    k = 0
    while 1.0 - total > tail:
        k += 1
        pmf.append(pmf[-1] * lam / k)
        total += pmf[-1]
    out = np.array(pmf)
    out[-1] += max(0.0, 1.0 - out.sum())
    return out


@dataclass(frozen=True)
class InventoryDpResult:
    optimal_cost: float  # expected total cost from the empty start
    policy_cost: float | None  # expected total cost of the supplied policy
    coincides: bool  # supplied policy action is optimal in every reachable state


def inventory_dp(
    *,
    horizon: int,
    demand_mean: float,
    order_levels,
    holding_cost: float = 1.0,
    lost_sales_cost: float = 1.0,
    policy=None,
    tol: float = 1e-9,
) -> InventoryDpResult:
    """Exact finite-horizon DP for the one-period-lead-time lost-sales system.

    State ``(I, Q1)``; an order placed now arrives at the start of the next
    period.  ``policy(I, Q1) -> order`` (a value in ``order_levels``) is
    evaluated exactly alongside the optimum.
    """
    pmf = truncated_poisson(demand_mean)
    levels = [int(v) for v in order_levels]

    def stage_cost_and_next(I, Q1):
        avail = I + Q1
        d = np.arange(len(pmf))
        net = avail - d
        cost = np.where(net >= 0, holding_cost * net, -lost_sales_cost * net)
        nxt = np.maximum(net, 0)
        return float(pmf @ cost), nxt

    @lru_cache(maxsize=None)
    def opt(t, I, Q1):
        if t == horizon:
            return 0.0
        c, nxt = stage_cost_and_next(I, Q1)
        return c + min(
            float(sum(p * opt(t + 1, int(i), q) for p, i in zip(pmf, nxt))) for q in levels
        )

    @lru_cache(maxsize=None)
    def pol(t, I, Q1):
        if t == horizon:
            return 0.0
        c, nxt = stage_cost_and_next(I, Q1)
        q = int(policy(I, Q1))
        return c + float(sum(p * pol(t + 1, int(i), q) for p, i in zip(pmf, nxt)))

    optimal = opt(0, 0, 0)
    policy_cost = None
    coincide = True
    if policy is not None:
        policy_cost = pol(0, 0, 0)
        # reachable-state check: policy action must attain the optimal continuation
        seen = set()
        frontier = [(0, 0, 0)]
        while frontier:
            t, I, Q1 = frontier.pop()
            if (t, I, Q1) in seen or t == horizon:
                continue
            seen.add((t, I, Q1))
            c, nxt = stage_cost_and_next(I, Q1)
            conts = {
                q: float(sum(p * opt(t + 1, int(i), q) for p, i in zip(pmf, nxt))) for q in levels
            }
            q_pol = int(policy(I, Q1))
            if conts[q_pol] > min(conts.values()) + tol:
                coincide = False
            for p, i in zip(pmf, nxt):
                if p > 1e-12:
                    frontier.append((t + 1, int(i), q_pol))
    return InventoryDpResult(optimal, policy_cost, coincide)
