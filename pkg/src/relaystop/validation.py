"""Invariant suite behind ``relaystop validate``.

Each check returns a :class:`CheckResult`; ``passed`` is ``None`` for checks
that are informational only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dist import IndexDistribution
from .experiments import run_sweep
from .oracle import DiscreteIndexDist, exact_dp_value, exhaustive_policy_search, threshold_brackets
from .params import SystemParams
from .policy import (StageSchedule, ThresholdPolicy, UnboundedBoundError, check_value_grid,
                     fixed_point_residuals, horizon_stopping_bound, optimal_value, solve_thresholds,
                     stopping_time_bound, value_upper_bound_check)
from .strategies import make_strategy

RESIDUAL_TOL = 1e-3
ORACLE_TOL = 1e-9
EXACT_TOL = 1e-12
DOMINANCE_SE = 3.0
ORACLE_INSTANCE = DiscreteIndexDist((0.5, 1.0, 2.0, 4.0), (0.4, 0.3, 0.2, 0.1))


@dataclass
class CheckResult:
    name: str
    passed: Optional[bool]
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        return f"[{status}] {self.name}: {self.detail} (value={self.value:.6g}, tol={self.tolerance:.3g})"


def check_residuals(policy: ThresholdPolicy, tol: float = RESIDUAL_TOL) -> CheckResult:
    res = fixed_point_residuals(policy)
    worst = float(res.max()) if res.size else 0.0
    stage = int(np.argmax(res)) + 1 if res.size else 0
    return CheckResult("fixed-point residuals", worst <= tol, worst, tol,
                       f"max relative residual over {res.size} thresholds (stage {stage})")


def check_shape(policy: ThresholdPolicy, rng: np.random.Generator) -> CheckResult:
    bad = [g.stage for g in policy.value_grids if not all(check_value_grid(g, rng))]
    return CheckResult("value-function shape", not bad, float(len(bad)), 0.0,
                       "monotone and midpoint convex at every stage" if not bad
                       else f"violations at stages {bad}")


def check_oracle(tau: float, N: int = 5, dist: DiscreteIndexDist = ORACLE_INSTANCE) -> CheckResult:
    schedule = StageSchedule(N, tau)
    dp = exact_dp_value(schedule, dist)
    search = exhaustive_policy_search(schedule, dist)
    policy = solve_thresholds(schedule, dist)
    grid_gap = abs(optimal_value(policy, dist) - dp.optimal_value)
    exact_gap = abs(search.best_value - dp.optimal_value)
    ok = (grid_gap <= ORACLE_TOL and exact_gap <= EXACT_TOL and search.is_threshold_rule()
          and all(threshold_brackets(policy, dp, dist)))
    return CheckResult("discrete oracle", ok, grid_gap, ORACLE_TOL,
                       f"N={N}, {len(dist.support)}-point law: |grid - DP|, DP vs search gap {exact_gap:.2e}")


def check_dominance(params: SystemParams, policy: ThresholdPolicy, workers: int = 1) -> CheckResult:
    labels = ["rs_osr", "rs_all"] + [f"fixed:{k}" for k in range(1, params.N + 1)]
    strategies = [make_strategy(s, params.N, policy) for s in labels]
    _, rows = run_sweep(params, strategies, gamma_db=[20.0], workers=workers)
    margins = [r.diff / r.paired_se for r in rows[1:] if r.paired_se > 0]
    worst = min(margins) if margins else 0.0
    return CheckResult("objective dominance", worst >= -DOMINANCE_SE, worst, -DOMINANCE_SE,
                       f"min (RS_OSR - baseline)/paired SE over {len(rows) - 1} baselines, {params.trials} trials")


def check_stopping_time(params: SystemParams, policy: ThresholdPolicy, workers: int = 1) -> list:
    reports, _ = run_sweep(params, ["rs_osr"], gamma_db=[20.0], policy=policy, workers=workers)
    mean_ns = reports[0].mean_stop_time
    bound = horizon_stopping_bound(policy)
    se = np.sqrt(max(params.N - 1, 1) ** 2 / 4 / params.trials)  # crude upper bound on the SE
    out = [CheckResult("stopping-time bound", mean_ns <= bound + 3 * se, mean_ns, bound,
                       "mean N_s against 1 + sum_n F(t_n)^n")]
    try:
        _, eps, eb = stopping_time_bound(policy.dist)
        out.append(CheckResult("(1-eps)/eps bound", mean_ns <= eb, mean_ns, eb, f"eps={eps:.3g}"))
    except UnboundedBoundError as exc:
        out.append(CheckResult("(1-eps)/eps bound", None, mean_ns, float("inf"),
                               f"undefined: t*={exc.t_star:g}, eps={exc.epsilon:g}"))
    return out


def check_upper_bound(policy: ThresholdPolicy, rng: np.random.Generator, probes: int = 20) -> CheckResult:
    failures = 0
    for _ in range(probes):
        n = int(rng.integers(1, policy.N + 1))
        x = float(rng.uniform(0.0, 3.0))
        ok, *_ = value_upper_bound_check(policy, policy.dist, n, x, rng, replicates=20_000)
        failures += not ok
    return CheckResult("value upper bound", failures == 0, float(failures), 0.0,
                       f"V_n(x) <= c_n E[max(x, future indices)] at {probes} random probes")


def run_validation(params: SystemParams, policy: ThresholdPolicy | None = None, trials: int = 20_000,
                   probes: int = 20, workers: int = 1, seed: int | None = None) -> list:
    if policy is None:
        policy = solve_thresholds(StageSchedule(params.N, params.tau), IndexDistribution(params.q1, params.q2))
    if policy.dist is None:
        policy = replace(policy, dist=IndexDistribution(params.q1, params.q2))
    rng = np.random.default_rng(params.seed if seed is None else seed)
    mc = replace(params, trials=trials, N=policy.N, tau=policy.schedule.tau)
    checks = [check_residuals(policy), check_shape(policy, rng), check_oracle(policy.schedule.tau)]
    if policy.N > 1:
        checks.append(check_dominance(mc, policy, workers))
        checks.extend(check_stopping_time(mc, policy, workers))
    checks.append(check_upper_bound(policy, rng, probes))
    return checks
