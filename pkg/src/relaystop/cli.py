"""relaystop command line: solve | run | validate.

Exit codes: 0 success, 1 a check or solver failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, ScenarioConfig, load_config
from .dist import IndexDistribution, g_func
from .experiments import estimate_diversity, run_efficiency_sweep, run_objective_comparison, run_sweep, write_csv
from .policy import SolverError, StageSchedule, load_policy, save_policy, solve_thresholds
from .validation import run_validation

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parse_args(argv):
    ap = argparse.ArgumentParser(prog="relaystop", description="Optimal-stopping relay selection simulator.")
    ap.add_argument("command", choices=("solve", "run", "validate"))
    ap.add_argument("--config", help="scenario TOML file (defaults are used when omitted)")
    ap.add_argument("--out", help="output path (policy JSON for solve, CSV for run)")
    ap.add_argument("--workers", type=int, help="worker processes for Monte Carlo runs")
    ap.add_argument("--seed", type=int, help="master seed, overrides the config")
    ap.add_argument("--policy", help="policy JSON to use instead of solving")
    ap.add_argument("--sweep", choices=("ber", "efficiency", "objective"))
    ap.add_argument("--strategy", "--strategies", dest="strategies",
                    help="comma-separated: rs_osr, rs_all, fixed:<k>, random:<p>")
    return ap.parse_args(argv)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="--seed")
        cfg.params = replace(cfg.params, seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("workers must be >= 1", field="--workers")
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = args.out
    if args.sweep is not None:
        cfg.run.sweep = args.sweep
    if args.strategies:
        cfg.run.strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if args.policy is not None:
        cfg.run.policy = cfg.validate.policy = args.policy
    return cfg


def cmd_solve(cfg: ScenarioConfig) -> int:
    p = cfg.params
    dist = IndexDistribution(p.q1, p.q2)
    try:
        policy = solve_thresholds(StageSchedule(p.N, p.tau), dist)
    except SolverError as exc:
        print(f"solver failed at stage {exc.stage} (residual {exc.residual:.3g}): {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = cfg.out or cfg.solve.out
    if out:
        save_policy(policy, out)
    print(f"N={p.N} tau={p.tau:g} q1={p.q1:g} q2={p.q2:g}")
    print(f"{'n':>4} {'c_n':>10} {'t_n':>14} {'g(c_n/c_n+1)':>14} {'residual':>10}")
    schedule = policy.schedule
    for n in range(1, p.N):
        g = g_func(dist, schedule.c(n) / schedule.c(n + 1))
        print(f"{n:>4} {schedule.c(n):>10.6f} {policy.threshold(n):>14.9f} {g:>14.9f} "
              f"{policy.solve_residuals[n - 1]:>10.2e}")
    if p.N == 1:
        print("no thresholds: the only stage is the last")
    print(f"t* = {g_func(dist, 1.0):g} (h(x)/x = 1)")
    if out:
        print(f"policy written to {out}")
    return EXIT_OK


def cmd_run(cfg: ScenarioConfig) -> int:
    p, run = cfg.params, cfg.run
    policy = None
    if run.policy:
        policy = load_policy(run.policy, IndexDistribution(p.q1, p.q2))
        if policy.N != p.N or policy.schedule.tau != p.tau:
            raise ConfigError(f"policy file is for N={policy.N}, tau={policy.schedule.tau:g}; "
                              f"scenario has N={p.N}, tau={p.tau:g}", field="run.policy")

    if run.sweep == "efficiency":
        reports = run_efficiency_sweep(p, run.N_list, run.strategies, workers=cfg.workers)
        for r in reports:
            print(f"{r.strategy_label:>10} N={r.params.N:<4} eff={r.mean_efficiency:.5f} "
                  f"E[N_s]={r.mean_stop_time:.4f}")
    elif run.sweep == "objective":
        rows = run_objective_comparison(p, run.strategies, policy=policy, workers=cfg.workers)
        for row in rows:
            print(f"{row.label:>10} objective={row.mean:.6f} +- {row.se:.2e} "
                  f"(RS_OSR - this = {row.diff:.3e} +- {row.paired_se:.2e})")
        reports, _ = run_sweep(p, run.strategies, gamma_db=[20.0], policy=policy, workers=cfg.workers)
    else:
        reports, _ = run_sweep(p, run.strategies, policy=policy, workers=cfg.workers, estimator=run.estimator)
        for r in reports:
            print(f"{r.strategy_label:>10} BER@{r.gamma_db[-1]:g}dB={r.ber[-1]:.4e} +- {r.ber_se[-1]:.1e} "
                  f"E[N_s]={r.mean_stop_time:.4f} eff={r.mean_efficiency:.5f}")
            if run.window_db is not None:
                fit = estimate_diversity(r, tuple(run.window_db))
                print(f"{'':>10} diversity over {fit.window_db} dB: {fit.slope:.3f} +- {fit.stderr:.3f}")
    print(f"seed={p.seed} trials={p.trials}")
    if cfg.out:
        write_csv(reports, cfg.out)
        print(f"CSV written to {cfg.out}")
    return EXIT_OK


def cmd_validate(cfg: ScenarioConfig) -> int:
    p, v = cfg.params, cfg.validate
    policy = load_policy(v.policy, IndexDistribution(p.q1, p.q2)) if v.policy else None
    checks = run_validation(p, policy, trials=v.trials, probes=v.probes, workers=cfg.workers)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed is not False for c in checks) else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "run": cmd_run, "validate": cmd_validate}


def main(argv=None) -> int:
    args = _parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        cfg = _apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
