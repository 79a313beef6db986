import json
import math

import numpy as np
import pytest

from relaystop.oracle import DiscreteIndexDist
from relaystop.policy import (Action, StageSchedule, UnboundedBoundError, bandwidth_efficiency,
                              check_value_grid, closed_form_threshold, continuation_value, decide,
                              fixed_point_residuals, horizon_stopping_bound, load_policy,
                              optimal_value, policy_from_dict, policy_to_dict, save_policy,
                              solve_thresholds, stopping_time_bound, value_upper_bound_check)


def test_schedule():
    s = StageSchedule(4, 0.25)
    assert s.c(2) == pytest.approx(1 / 1.5)
    np.testing.assert_allclose(s.efficiencies, [1 / 1.25, 1 / 1.5, 1 / 1.75, 1 / 2])
    assert bandwidth_efficiency(3, 0.1) == pytest.approx(1 / 1.3)
    with pytest.raises(ValueError):
        StageSchedule(0, 0.1)
    with pytest.raises(ValueError):
        StageSchedule(3, 0.0)


def test_single_stage_has_no_thresholds(dist):
    p = solve_thresholds(StageSchedule(1, 0.1), dist)
    assert p.thresholds.size == 0
    assert optimal_value(p) == pytest.approx(dist.mean / 1.1, rel=1e-8)


def test_last_threshold_is_closed_form(policy10, dist):
    # V_N is linear, so t_{N-1} = g(c_{N-1}/c_N)
    assert policy10.threshold(9) == pytest.approx(closed_form_threshold(dist, policy10.schedule, 9), rel=1e-7)


def test_two_stage_threshold(dist):
    p = solve_thresholds(StageSchedule(2, 0.1), dist)
    assert p.threshold(1) == pytest.approx(1.1185011, abs=1e-6)


def test_thresholds_increase_with_remaining_horizon(policy10):
    # more remaining stages make continuing more attractive at a fixed level
    t = policy10.thresholds
    assert np.all(t > 0)
    assert np.all(np.diff(t) > 0)


def test_residuals_small(policy10):
    assert fixed_point_residuals(policy10).max() < 1e-9
    assert policy10.solve_residuals.max() < 1e-9


def test_value_function_shape(policy10, rng):
    for n in range(1, 11):
        assert all(check_value_grid(policy10.grid(n), rng))
    # V_n(x) = c_n x beyond t_n
    g = policy10.grid(3)
    x = policy10.threshold(3) + 0.5
    assert g(x) == pytest.approx(policy10.schedule.c(3) * x, rel=1e-10)
    # continuation value equals the stored value below t_n
    x = 0.5 * policy10.threshold(3)
    # off-node, so linear interpolation error applies
    assert g(x) == pytest.approx(continuation_value(policy10.grid(4), x, policy10.dist), rel=1e-6)


def test_value_upper_bound(policy10, rng):
    for n, x in [(1, 0.3), (4, 1.0), (9, 2.5), (10, 0.7)]:
        ok, v, rhs, _ = value_upper_bound_check(policy10, policy10.dist, n, x, rng, 50_000)
        assert ok and v <= rhs + 1e-9 + 0.05


def test_decide(policy10):
    t3 = policy10.threshold(3)
    assert decide(policy10, 3, t3 * 0.99, 2, 1.0).action is Action.CONTINUE
    d = decide(policy10, 3, t3, 2, 1.0)
    assert d.action is Action.STOP_WITH_RELAY and d.relay == 2
    assert decide(policy10, 10, 0.5, 4, 1.0).action is Action.STOP_NO_RELAY
    assert decide(policy10, 10, 1.5, 4, 1.0).relay == 4
    with pytest.raises(ValueError):
        decide(policy10, 11, 1.0, 1, 1.0)
    with pytest.raises(ValueError):
        decide(policy10, 3, 1.0, 4, 1.0)


def test_epsilon_bound_is_undefined(dist):
    with pytest.raises(UnboundedBoundError) as info:
        stopping_time_bound(dist)
    assert info.value.epsilon == 0.0
    assert math.isinf(info.value.t_star)
    # a bounded support gives t* at its top and still eps = 0
    with pytest.raises(UnboundedBoundError):
        stopping_time_bound(DiscreteIndexDist((0.5, 1.0, 2.0), (0.5, 0.3, 0.2)))


def test_horizon_bound(policy10):
    b = horizon_stopping_bound(policy10)
    assert 1.0 <= b <= 10.0


def test_json_round_trip(policy10, tmp_path):
    path = tmp_path / "p.json"
    save_policy(policy10, path)
    back = load_policy(path)
    np.testing.assert_array_equal(back.thresholds, policy10.thresholds)
    for a, b in zip(back.value_grids, policy10.value_grids):
        np.testing.assert_array_equal(a.xs, b.xs)
        np.testing.assert_array_equal(a.vs, b.vs)
    assert policy_to_dict(back) == json.loads(path.read_text())
    assert fixed_point_residuals(back).max() < 1e-9


def test_json_shape_errors(policy10):
    doc = policy_to_dict(policy10)
    doc["thresholds"] = doc["thresholds"][:-1]
    with pytest.raises(ValueError):
        policy_from_dict(doc)


def test_corrupted_threshold_inflates_residual(policy10):
    doc = policy_to_dict(policy10)
    doc["thresholds"][0] *= 2
    assert fixed_point_residuals(policy_from_dict(doc))[0] > 1e-3


def test_closed_form_is_a_lower_bound(dist):
    # V_{n+1}(x) >= c_{n+1} x, so the continuation value is at least c_{n+1} h(x)
    for tau in (0.05, 0.1):
        p = solve_thresholds(StageSchedule(12, tau), dist)
        g = np.array([closed_form_threshold(dist, p.schedule, n) for n in range(1, 12)])
        assert np.all(p.thresholds >= g * (1 - 1e-8))
        assert np.all(p.thresholds[:-1] > g[:-1] * (1 + 1e-4))
