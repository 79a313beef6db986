from dataclasses import replace

import numpy as np
import pytest

from relaystop.experiments import (ExperimentReport, GammaRow, InsufficientPointsError, SystemParams,
                                   ZeroBerError, estimate_diversity, report_csv, run_ber_sweep,
                                   run_efficiency_sweep, run_objective_comparison, run_sweep)
from relaystop.simcore import draw_channels, relay_index, trial_stream

SMALL = SystemParams(N=6, tau=0.1, trials=30_000, gamma_db_list=(0.0, 10.0, 20.0))


def synthetic(ber, g_db=(10.0, 15.0, 20.0, 25.0, 30.0)):
    rows = [GammaRow(g, b, 0.0, 1.0, 1.0, 1.0, 0.0) for g, b in zip(g_db, ber)]
    return ExperimentReport("x", SMALL, rows)


def test_exact_power_law_slope():
    g = np.array([10.0, 15.0, 20.0, 25.0, 30.0])
    fit = estimate_diversity(synthetic(10 ** (-3 * g / 10)), (10, 30))
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.stderr < 1e-10


def test_slope_errors():
    with pytest.raises(InsufficientPointsError):
        estimate_diversity(synthetic([1e-3, 1e-4, 1e-5, 1e-6, 1e-7]), (24, 31))
    with pytest.raises(ZeroBerError):
        estimate_diversity(synthetic([1e-3, 1e-4, 0.0, 1e-6, 1e-7]), (10, 30))


def test_ber_sweep_monotone():
    rep = run_ber_sweep(SMALL, "rs_osr")
    assert np.all(np.diff(rep.ber) < 0)
    assert np.all((rep.ber >= 0) & (rep.ber <= 0.5))
    assert 1 <= rep.mean_stop_time <= 6


def test_rs_all_efficiency_exact():
    reps = run_efficiency_sweep(replace(SMALL, trials=2000), [3, 8], ["rs_all", "rs_osr"])
    for r in reps:
        if r.strategy_label == "rs_all":
            assert r.mean_efficiency == pytest.approx(1 / (1 + r.params.N * 0.1), abs=1e-15)
            assert r.mean_stop_time == r.params.N


def test_rs_all_objective_identity():
    p = replace(SMALL, trials=5000)
    rows = run_objective_comparison(p, ["rs_all"])
    ch = draw_channels(trial_stream(p.seed, 0), p.N, p.trials)
    omega_n = relay_index(ch.omega_s, ch.omega_d).max(axis=1)
    assert rows[0].label == "rs_osr"
    assert rows[1].mean == pytest.approx(omega_n.mean() / (1 + p.N * p.tau), abs=1e-12)


def test_objective_dominance():
    rows = run_objective_comparison(SMALL, ["rs_all", "fixed:1", "fixed:3", "random:0.5"])
    for r in rows[1:]:
        assert r.diff >= -3 * r.paired_se


def test_single_relay_all_equal():
    p = replace(SMALL, N=1, trials=3000)
    reps, rows = run_sweep(p, ["rs_osr", "rs_all", "fixed:1", "random:0.4"])
    for r in reps[1:]:
        np.testing.assert_array_equal(r.ber, reps[0].ber)
    assert all(row.diff == 0.0 for row in rows)


def test_csv_deterministic_across_workers():
    p = replace(SMALL, trials=45_000)
    a, _ = run_sweep(p, ["rs_osr", "rs_all"], workers=1)
    b, _ = run_sweep(p, ["rs_osr", "rs_all"], workers=3)
    assert report_csv(a) == report_csv(b)
    header, first = report_csv(a).splitlines()[:2]
    assert header == "strategy,N,tau,r,gamma_db,trials,seed,ber_mean,ber_se,eff_mean,stop_mean,objective_mean,objective_se"
    assert first.startswith("rs_osr,6,0.10000000000000001,0.5,0,45000,")


def test_estimator_choice():
    p = replace(SMALL, trials=20_000)
    a = run_ber_sweep(p, "rs_osr", estimator="conditional")
    b = run_ber_sweep(p, "rs_osr")
    assert np.all(np.abs(a.ber - b.ber) < 4 * np.hypot(a.ber_se, b.ber_se))
    with pytest.raises(ValueError):
        run_ber_sweep(p, "rs_osr", estimator="bernoulli")
