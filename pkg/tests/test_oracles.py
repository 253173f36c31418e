import itertools

import numpy as np
import pytest

from maskrl.envs.inventory import InvConfig, InvState, base_stock_policy, simulate_policy_costs
from maskrl.envs.paintshop import (
    PaintShopConfig,
    apply_action,
    initial_state,
    is_valid,
    ps_combined_mask,
    ps_count_color_changes,
    ps_generate_instance,
)
from maskrl.oracles import InstanceTooLarge, inventory_dp, paintshop_optimum, truncated_poisson

SMALL = PaintShopConfig(lanes=2, width=2, colors=2, sequence_length=8)


def plain_search(seq, cfg):
    """Unmemoized exhaustive recursion, kept deliberately naive."""
    best = [np.inf]

    def rec(state, changes):
        if changes >= best[0]:
            return
        if state.finished:
            best[0] = changes
            return
        for a in range(cfg.n_actions):
            if is_valid(state, a):
                nxt = state.copy()
                _, info = apply_action(nxt, a, cfg)
                rec(nxt, changes + info["color_change"])

    rec(initial_state(seq, cfg), 0)
    return best[0]


@pytest.mark.parametrize("seed", range(8))
def test_paintshop_optimum_matches_naive_search(seed):
    cfg = PaintShopConfig(lanes=2, width=2, colors=3, sequence_length=6)
    seq = ps_generate_instance(seed, cfg)
    assert paintshop_optimum(seq, cfg)[0] == plain_search(seq, cfg)


def test_optimal_action_sequence_replays_to_its_value():
    seq = ps_generate_instance(11, SMALL)
    changes, actions = paintshop_optimum(seq, SMALL)
    state = initial_state(seq, SMALL)
    for a in actions:
        assert is_valid(state, a)
        apply_action(state, a, SMALL)
    assert state.finished and ps_count_color_changes(state.outgoing, 8) == changes


def test_single_color_instance_needs_no_changes():
    assert paintshop_optimum([1] * 8, SMALL)[0] == 0


def test_small_hand_instance():
    # 1 2 1 2 with a 1x2 buffer can be regrouped to 1 1 2 2 (one change)
    cfg = PaintShopConfig(lanes=2, width=1, colors=2, sequence_length=4)
    assert paintshop_optimum([1, 2, 1, 2], cfg)[0] == 1


def test_masked_search_never_beats_unmasked():
    for seed in range(10):
        seq = ps_generate_instance(seed, SMALL)
        free = paintshop_optimum(seq, SMALL)[0]
        for level in ("inv", "inv+gr", "inv+gr+ft", "all"):
            assert paintshop_optimum(seq, SMALL, ps_combined_mask(level))[0] >= free


def test_oracle_refuses_large_instances():
    with pytest.raises(InstanceTooLarge):
        paintshop_optimum([1] * 11, SMALL)
    with pytest.raises(InstanceTooLarge):
        paintshop_optimum([1] * 4, PaintShopConfig(lanes=3, width=2))


def test_truncated_poisson():
    pmf = truncated_poisson(5.0)
    assert abs(pmf.sum() - 1) < 1e-15
    assert abs(pmf @ np.arange(len(pmf)) - 5.0) < 1e-10
    assert truncated_poisson(0.0).tolist() == [1.0]


def brute_force_inventory(horizon, lam, levels, h, p):
    """Expected optimal cost, orders chosen before each period's demand."""
    pmf = truncated_poisson(lam, 1e-12)

    def value(t, inv, q1):
        if t == horizon:
            return 0.0
        best = np.inf
        for q in levels:
            total = 0.0
            for d, w in enumerate(pmf):
                net = inv + q1 - d
                cost = h * net if net >= 0 else -p * net
                total += w * (cost + value(t + 1, max(net, 0), q))
            best = min(best, total)
        return best

    return value(0, 0, 0)


def test_inventory_dp_matches_enumeration():
    res = inventory_dp(horizon=3, demand_mean=1.0, order_levels=[0, 1, 2], lost_sales_cost=3.0)
    assert res.optimal_cost == pytest.approx(brute_force_inventory(3, 1.0, [0, 1, 2], 1.0, 3.0), abs=1e-9)


def test_inventory_dp_policy_value_matches_simulation():
    cfg = InvConfig(lost_sales_cost=19.0, max_lead=1, demand_mean=2.0, horizon=20, quantum=1, max_multiple=4)
    act = base_stock_policy(7, cfg)
    res = inventory_dp(horizon=20, demand_mean=2.0, order_levels=range(5), lost_sales_cost=19.0,
                       policy=lambda i, q: act(InvState(i, [q])))
    totals = simulate_policy_costs(act, cfg, 3000, 1) * cfg.horizon
    se = totals.std(ddof=1) / np.sqrt(len(totals))
    assert abs(totals.mean() - res.policy_cost) < 3 * se
    assert res.policy_cost >= res.optimal_cost - 1e-9
