import numpy as np
import pytest

from relaystop.oracle import (DiscreteIndexDist, EnumerationBudgetError, exact_dp_value,
                              exhaustive_policy_search, random_discrete_dist, threshold_brackets)
from relaystop.policy import StageSchedule, optimal_value, solve_thresholds

EXAMPLE = DiscreteIndexDist((0.5, 1.0, 2.0, 4.0), (0.4, 0.3, 0.2, 0.1))


def test_single_point_support_stops_at_once():
    d = DiscreteIndexDist((1.7,), (1.0,))
    s = StageSchedule(4, 0.1)
    assert exact_dp_value(s, d).optimal_value == pytest.approx(s.c(1) * 1.7, abs=1e-15)


def test_one_stage():
    s = StageSchedule(1, 0.2)
    assert exact_dp_value(s, EXAMPLE).optimal_value == pytest.approx(s.c(1) * EXAMPLE.mean, abs=1e-15)


def test_example_instance_agrees():
    s = StageSchedule(5, 0.1)
    dp = exact_dp_value(s, EXAMPLE)
    search = exhaustive_policy_search(s, EXAMPLE)
    assert abs(dp.optimal_value - search.best_value) <= 1e-12
    assert search.is_threshold_rule()
    p = solve_thresholds(s, EXAMPLE)
    assert abs(optimal_value(p, EXAMPLE) - dp.optimal_value) <= 1e-9
    assert all(threshold_brackets(p, dp, EXAMPLE))


def test_tiny_tau_probes_everything():
    # with negligible probing cost waiting to the end cannot lose
    s = StageSchedule(4, 1e-9)
    search = exhaustive_policy_search(s, EXAMPLE)
    dp = exact_dp_value(s, EXAMPLE)
    assert search.best_value == pytest.approx(dp.optimal_value, abs=1e-12)
    top = max(EXAMPLE.support)
    for n in range(1, 4):
        assert dp.stop_sets[n] <= {top}


def test_validation_errors():
    with pytest.raises(ValueError):
        DiscreteIndexDist((1.0, 0.5), (0.5, 0.5))
    with pytest.raises(ValueError):
        DiscreteIndexDist((0.5, 1.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        DiscreteIndexDist(tuple(range(1, 10)), tuple([1 / 9] * 9))
    with pytest.raises(EnumerationBudgetError):
        exhaustive_policy_search(StageSchedule(6, 0.1), EXAMPLE)
    with pytest.raises(EnumerationBudgetError):
        exact_dp_value(StageSchedule(9, 0.1), EXAMPLE)


def test_discrete_surface(rng):
    assert EXAMPLE.ccdf(1.0) == pytest.approx(0.3)
    assert EXAMPLE.tail_integral(1.0) == pytest.approx(0.2 * 1.0 + 0.1 * 3.0)
    assert EXAMPLE.mean == pytest.approx(0.2 + 0.3 + 0.4 + 0.4)
    assert set(np.unique(EXAMPLE.sample(rng, 1000))) <= set(EXAMPLE.support)


@pytest.mark.parametrize("seed", range(5))
def test_random_instances(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 6))
    d = random_discrete_dist(rng, int(rng.integers(2, 6)))
    s = StageSchedule(N, float(rng.uniform(0.02, 0.3)))
    dp = exact_dp_value(s, d)
    search = exhaustive_policy_search(s, d)
    assert abs(dp.optimal_value - search.best_value) <= 1e-12
    assert search.is_threshold_rule()
    assert abs(optimal_value(solve_thresholds(s, d), d) - dp.optimal_value) <= 1e-9
