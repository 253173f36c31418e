import numpy as np
import pytest

from maskrl.envs.inventory import (
    InvConfig,
    InventoryEnv,
    InvState,
    base_stock_policy,
    draw_episode,
    inv_base_stock_action,
    inv_base_stock_simulate,
    inv_mask,
    inv_mask_int,
    inv_mask_thr,
    nearest_grid_index,
    poisson_inverse_transform,
    simulate_policy_costs,
    transition,
)
from maskrl.evaluate import inv_evaluate

P1 = InvConfig(lost_sales_cost=1.0)


def test_config_defaults():
    assert P1.base_stock == 18 and P1.max_lead == 4
    cfg = InvConfig(lost_sales_cost=4.0, lead_mode="stoch")
    assert cfg.base_stock == 25 and cfg.max_lead == 8
    assert P1.order_values.tolist() == list(range(0, 101, 10))
    with pytest.raises(ValueError):
        InvConfig(lead_mode="weird")


def test_reward_arithmetic():
    s = InvState(10, [0, 0, 0, 0])
    r, _ = transition(s, 0, 5, 4, P1)
    assert r == -5.0 and s.inventory == 5
    s = InvState(5, [0, 0, 0, 0])
    r, info = transition(s, 0, 8, 4, InvConfig(lost_sales_cost=4.0))
    assert r == -12.0 and info["lost_sales"] == 3 and s.inventory == 0


def test_stochastic_collision_hand_trace():
    cfg = InvConfig(lost_sales_cost=4.0, lead_mode="stoch", max_lead=3)
    s = InvState(0, [0, 0, 0])
    trace = [(10, 0, 3), (5, 0, 2), (0, 3, 1), (7, 4, 1), (0, 20, 3)]
    rewards, pipes = [], []
    for order, d, lead in trace:
        r, _ = transition(s, order, d, lead, cfg)
        rewards.append(r)
        pipes.append(list(s.pipeline))
    assert pipes[:2] == [[0, 0, 10], [0, 15, 0]]  # 10 shifted left, 5 added into the same slot
    assert rewards == [0.0, 0.0, -12.0, -11.0, -8.0]
    assert pipes[3] == [7, 0, 0] and s.inventory == 0


def test_deterministic_lead_delay():
    s = InvState(0, [0, 0, 0, 0])
    transition(s, 30, 0, 4, P1)
    assert s.pipeline == [0, 0, 0, 30]
    for _ in range(3):
        transition(s, 0, 0, 4, P1)
    assert s.inventory == 0 and s.pipeline[0] == 30
    transition(s, 0, 0, 4, P1)
    assert s.inventory == 30


def test_poisson_sampler_moments():
    u = np.random.default_rng(0).random(200_000)
    d = poisson_inverse_transform(u, 5.0)
    assert abs(d.mean() - 5) < 0.03 and abs(d.var() - 5) < 0.08
    assert (poisson_inverse_transform(u[:10], 0.0) == 0).all()


def test_demand_paths_shared_across_policies():
    d1, l1 = draw_episode(42, InvConfig(lead_mode="stoch"))
    d2, l2 = draw_episode(42, InvConfig(lead_mode="stoch", lost_sales_cost=4.0))
    assert (d1 == d2).all() and (l1 == l2).all()
    assert l1.min() >= 1 and l1.max() <= 8


@pytest.mark.parametrize("mode", ["det", "stoch"])
def test_invariants_random_orders(mode):
    cfg = InvConfig(lead_mode=mode, horizon=10_000)
    env = InventoryEnv(cfg)
    env.reset(0)
    rng = np.random.default_rng(1)
    ordered = arrived = 0
    for _ in range(10_000):
        a = int(rng.integers(cfg.n_actions)) if rng.random() < 0.3 else 0
        before = env.state.inventory + env.state.pipeline[0]
        arriving = env.state.pipeline[0]
        out = env.step(a)
        ordered += a * cfg.quantum
        arrived += arriving
        s = env.state
        assert s.inventory >= 0 and min(s.pipeline) >= 0 and len(s.pipeline) == cfg.max_lead
        assert ordered == arrived + sum(s.pipeline)
        assert out.reward <= 0
        assert (out.reward == 0) == (before == out.info["demand"])
    assert out.done


def test_base_stock_prescription():
    assert inv_base_stock_action(InvState(0, [0] * 4), 18) == 18
    assert inv_base_stock_action(InvState(10, [5, 5, 5, 0]), 18) == -7
    assert inv_base_stock_action(InvState(18, [0] * 4), 18) == 0


def state_for_h(h, S=18):
    """A state whose prescription S - position equals h (h <= S)."""
    return InvState(S - h, [0, 0, 0, 0])


def test_mask_int_examples():
    m = inv_mask_int(18, P1)
    assert np.flatnonzero(m.admissible(InvState(0, [0] * 4), 11)).tolist() == [1, 2]
    assert np.flatnonzero(m.admissible(state_for_h(-7), 11)).tolist() == [0]
    assert np.flatnonzero(m.admissible(state_for_h(-25), 11)).tolist() == [0]


def test_mask_thr_examples():
    m = inv_mask_thr(18, P1)
    assert np.flatnonzero(m.admissible(InvState(0, [0] * 4), 11)).tolist() == list(range(2, 11))
    assert m.admissible(state_for_h(-3), 11).all()
    big = inv_mask_thr(150, P1)
    assert np.flatnonzero(big.admissible(InvState(0, [0] * 4), 11)).tolist() == [10]


def test_mask_int_size_bounds_and_thr_monotone():
    rng = np.random.default_rng(0)
    for _ in range(500):
        s = InvState(int(rng.integers(0, 60)), [int(x) for x in rng.integers(0, 40, 4)])
        n_int = inv_mask_int(18, P1).admissible(s, 11).sum()
        assert 1 <= n_int <= 3
        sets = [inv_mask_thr(S, P1).admissible(s, 11) for S in (10, 18, 25, 40)]
        for a, b in zip(sets, sets[1:]):
            assert (b <= a).all()


def test_mask_levels():
    assert inv_mask("none", P1).admissible(InvState(0, [0] * 4), 11).all()
    with pytest.raises(ValueError):
        inv_mask("bogus", P1)


def test_nearest_grid_rounding():
    assert nearest_grid_index(14.9, P1) == 1
    assert nearest_grid_index(15, P1) == 2
    assert nearest_grid_index(-4, P1) == 0
    assert nearest_grid_index(500, P1) == 10


def test_base_stock_simulation_degenerate_cases():
    no_demand = InvConfig(demand_mean=0.0, horizon=400)
    # the pipeline fills to S=20 and then sits in stock
    assert inv_base_stock_simulate(20, no_demand, 2, 0) == pytest.approx(20.0, rel=0.02)
    zero = InvConfig(lost_sales_cost=4.0, horizon=2000)
    assert inv_base_stock_simulate(0, zero, 3, 0) == pytest.approx(20.0, rel=0.03)


def test_base_stock_near_published_rl_value_with_unit_orders():
    cfg = InvConfig(lost_sales_cost=4.0, quantum=1, horizon=5000)
    cost = inv_base_stock_simulate(25, cfg, 20, 0)
    assert 5.058 < cost < 5.058 * 1.1


def test_order_nothing_costs_p_lambda():
    for p in (1.0, 4.0):
        cfg = InvConfig(lost_sales_cost=p, horizon=2000)
        recs = inv_evaluate(lambda env, seed: (lambda obs, state: 0), cfg, 3, 0)
        assert np.mean([r.metric for r in recs]) == pytest.approx(5 * p, rel=0.03)


def test_evaluation_is_reproducible_and_matches_simulator():
    cfg = InvConfig(horizon=500)
    act = base_stock_policy(18, cfg)
    recs = inv_evaluate(lambda env, seed: (lambda obs, state: act(state)), cfg, 5, 3)
    direct = simulate_policy_costs(act, cfg, 5, 3)
    np.testing.assert_array_equal([r.metric for r in recs], direct)
