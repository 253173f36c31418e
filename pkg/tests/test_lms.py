import numpy as np
import pytest

from maskrl.envs.lms import OFF, ON, LmsConfig, LmsEnv, LmsState, lms_mask, lms_reference_curve, read_curve, threshold_rule
from maskrl.evaluate import lms_evaluate, lms_threshold_agent


def test_reference_curve_shape_and_peaks():
    c = lms_reference_curve()
    assert c.shape == (96,)
    assert (c >= 0).all() and c.max() <= 1.5
    assert int((c >= 1.24).sum()) == 3
    # the only loads of 1.0 or more are the three peaks; some others reach 0.8
    assert int((c >= 1.0).sum()) == 3 and int((c >= 0.8).sum()) > 3


def test_read_curve_validates(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("\n".join(["0.5"] * 95))
    with pytest.raises(ValueError):
        read_curve(p)
    p.write_text("\n".join(["0.5"] * 95 + ["-1"]))
    with pytest.raises(ValueError):
        read_curve(p)


def test_rewards_zero_until_last_step():
    env = LmsEnv()
    env.reset(0)
    rewards = []
    for t in range(96):
        out = env.step(ON)
        rewards.append(out.reward)
    assert out.done and rewards[:-1] == [0.0] * 95 and rewards[-1] == -1.0


def test_sigma_zero_forecast_is_exact():
    env = LmsEnv(LmsConfig(sigma=0.0))
    env.reset(5)
    assert (env.forecasts_for(5) == env.curve).all()


def test_noisy_forecasts_are_clipped_and_seeded():
    env = LmsEnv(LmsConfig(sigma=0.4))
    f = env.forecasts_for(1)
    assert (f >= 0).all() and not (f == env.curve).all()
    assert (f == env.forecasts_for(1)).all()


def test_off_excludes_period_from_peak_and_budget_exhaustion():
    env = LmsEnv()
    env.reset(0)
    peaks = set(np.flatnonzero(env.curve >= 1.24).tolist())
    offs = 0
    for t in range(96):
        a = OFF if t in peaks else ON
        out = env.step(a)
        offs += out.info["off_effective"]
    assert out.reward == 1.0 and out.info["solved"] and offs == 3
    # a fourth off behaves as on
    env.reset(0)
    for t in range(4):
        out = env.step(OFF)
    assert env.state.remaining_off == 0 and not out.info["off_effective"]
    assert env.state.peak == env.curve[3]


def test_budget_and_single_terminal_reward_random_play():
    rng = np.random.default_rng(0)
    env = LmsEnv(LmsConfig(sigma=0.2))
    for ep in range(100):
        env.reset(ep)
        nonzero = 0
        last_peak = 0.0
        while True:
            out = env.step(int(rng.integers(2)))
            assert 0 <= env.state.remaining_off <= 3
            assert env.state.peak >= last_peak
            last_peak = env.state.peak
            nonzero += out.reward != 0
            if out.done:
                break
        assert nonzero == 1 and out.reward in (-1.0, 1.0)


def test_mask_examples_and_monotonicity():
    s = LmsState(t=0, prev_load=0.5, forecast=1.3, remaining_off=3, peak=0)
    assert lms_mask(1.2).admissible(s, 2).tolist() == [True, True]
    s.forecast = 0.5
    assert lms_mask(0.8).admissible(s, 2).tolist() == [False, True]
    assert lms_mask(0).admissible(s, 2).all()
    for f in np.linspace(0, 1.5, 31):
        s.forecast = f
        sets = [lms_mask(th).admissible(s, 2) for th in (0.2, 0.4, 0.8, 1.2)]
        for a, b in zip(sets, sets[1:]):
            assert (b <= a).all()
    with pytest.raises(ValueError):
        lms_mask(-0.1)


def test_threshold_rule_solves_noise_free_day():
    recs = lms_evaluate(lms_threshold_agent(1.24), LmsConfig(sigma=0.0), 100, 0)
    assert np.mean([r.metric for r in recs]) == 1.0


def test_always_on_never_solves():
    recs = lms_evaluate(lambda env, seed: (lambda obs, state: ON), LmsConfig(), 10, 0)
    assert np.mean([r.metric for r in recs]) == 0.0


def test_threshold_rule_function():
    s = LmsState(0, 0.0, 1.3, 3, 0.0)
    assert threshold_rule(s) == OFF
    s.forecast = 1.0
    assert threshold_rule(s) == ON


def test_noise_free_env_deterministic_given_policy():
    a, b = LmsEnv(), LmsEnv()
    oa, ob = a.reset(1), b.reset(2)
    assert (oa == ob).all()
    for t in range(96):
        act = t % 2
        assert (a.step(act).observation == b.step(act).observation).all()
