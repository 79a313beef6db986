"""Monte Carlo sweeps: BER vs SNR, efficiency vs N, and the stopping objective.

Trials are split into fixed-size chunks; chunk ``i`` always draws its channels
from ``trial_stream(seed, i)``, and every strategy in one sweep is scored on
the same chunk draws.  Per-chunk sums are combined with ``math.fsum`` in chunk
order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .dist import IndexDistribution
from .params import SystemParams, db_to_linear
from .policy import StageSchedule, ThresholdPolicy, solve_thresholds
from .simcore import draw_channels, simulate_batch, trial_stream
from .strategies import make_strategy

__all__ = [
    "SystemParams", "GammaRow", "SlopeFit", "ExperimentReport", "ObjectiveRow",
    "InsufficientPointsError", "ZeroBerError", "resolve_strategies", "run_sweep",
    "run_ber_sweep", "run_efficiency_sweep", "run_objective_comparison",
    "estimate_diversity", "write_csv", "report_csv", "CSV_COLUMNS",
]

CHUNK_TRIALS = 20_000
ESTIMATORS = ("sd_avg", "conditional")
EFFICIENCY_GAMMA_DB = 20.0
CSV_COLUMNS = ("strategy", "N", "tau", "r", "gamma_db", "trials", "seed", "ber_mean", "ber_se",
               "eff_mean", "stop_mean", "objective_mean", "objective_se")


class InsufficientPointsError(ValueError):
    pass


class ZeroBerError(ValueError):
    pass


@dataclass
class GammaRow:
    gamma_db: float
    ber_mean: float
    ber_se: float
    mean_efficiency: float
    mean_stop_time: float
    objective_mean: float
    objective_se: float


@dataclass
class SlopeFit:
    window_db: tuple
    slope: float       # diversity estimate, -d log10(BER) / d log10(gamma)
    stderr: float
    n_points: int


@dataclass
class ExperimentReport:
    strategy_label: str
    params: SystemParams
    per_gamma: list
    slope_fit: Optional[SlopeFit] = None
    estimator: str = "sd_avg"

    @property
    def gamma_db(self) -> np.ndarray:
        return np.array([row.gamma_db for row in self.per_gamma])

    @property
    def ber(self) -> np.ndarray:
        return np.array([row.ber_mean for row in self.per_gamma])

    @property
    def ber_se(self) -> np.ndarray:
        return np.array([row.ber_se for row in self.per_gamma])

    @property
    def mean_efficiency(self) -> float:
        return self.per_gamma[0].mean_efficiency

    @property
    def mean_stop_time(self) -> float:
        return self.per_gamma[0].mean_stop_time

    @property
    def objective_mean(self) -> float:
        return self.per_gamma[0].objective_mean


@dataclass
class ObjectiveRow:
    label: str
    mean: float
    se: float
    diff: float        # RS_OSR minus this strategy, on the same draws
    paired_se: float


# -- strategy plumbing ---------------------------------------------------------------


def resolve_strategies(params: SystemParams, strategies, policy: ThresholdPolicy | None = None):
    """Turn labels into strategy objects, solving the policy once if one is needed."""
    if isinstance(strategies, str) or not isinstance(strategies, Sequence):
        strategies = [strategies]
    out = []
    for s in strategies:
        if isinstance(s, str):
            if s.strip().lower() == "rs_osr" and policy is None:
                dist = IndexDistribution(params.q1, params.q2)
                policy = solve_thresholds(StageSchedule(params.N, params.tau), dist)
            s = make_strategy(s, params.N, policy)
        if s.n_relays != params.N:
            raise ValueError(f"strategy {s.label} built for N={s.n_relays}, params have N={params.N}")
        out.append(s)
    return out


# -- chunked accumulation ------------------------------------------------------------


def _chunk_sizes(trials: int):
    full, rest = divmod(trials, CHUNK_TRIALS)
    return [CHUNK_TRIALS] * full + ([rest] if rest else [])


def _chunk_sums(job):
    """Raw sums for one chunk: per strategy, (ber, ber^2) per gamma and moments of
    efficiency, stop stage and objective, plus objective differences to strategy 0."""
    params, strategies, gamma_db, estimator, chunk, size = job
    channels = draw_channels(trial_stream(params.seed, chunk), params.N, size)
    outs = [simulate_batch(params, s, channels, gamma_db) for s in strategies]
    ref = outs[0].objective_term
    sums = []
    for out in outs:
        ber = out.sd_avg_error if estimator == "sd_avg" else out.cond_error
        d = ref - out.objective_term
        sums.append({
            "ber": ber.sum(axis=0), "ber2": (ber * ber).sum(axis=0),
            "eff": out.efficiency.sum(), "stop": out.stop_stage.sum(dtype=float),
            "obj": out.objective_term.sum(), "obj2": (out.objective_term ** 2).sum(),
            "diff": d.sum(), "diff2": (d * d).sum(),
        })
    return sums


def _mean_se(total, total2, n):
    mean = total / n
    if n < 2:
        return mean, math.nan
    var = max(total2 - n * mean * mean, 0.0) / (n - 1)
    return mean, math.sqrt(var / n)


def _combine(chunks, key, idx, gi=None):
    if gi is None:
        return math.fsum(c[idx][key] for c in chunks)
    return math.fsum(c[idx][key][gi] for c in chunks)


def run_sweep(params: SystemParams, strategies, gamma_db=None, policy: ThresholdPolicy | None = None,
              workers: int = 1, estimator: str = "sd_avg"):
    """Score all ``strategies`` on common draws; returns (reports, objective rows).

    ``estimator`` is ``"sd_avg"`` (error averaged analytically over the direct
    gain, lower variance) or ``"conditional"`` (error given every channel).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    strategies = resolve_strategies(params, strategies, policy)
    gamma_db = np.asarray(params.gamma_db_list if gamma_db is None else gamma_db, dtype=float)
    jobs = [(params, strategies, gamma_db, estimator, i, size)
            for i, size in enumerate(_chunk_sizes(params.trials))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_sums, jobs))
    else:
        chunks = [_chunk_sums(job) for job in jobs]

    n = params.trials
    reports, objective = [], []
    for k, s in enumerate(strategies):
        eff = _combine(chunks, "eff", k) / n
        stop = _combine(chunks, "stop", k) / n
        obj, obj_se = _mean_se(_combine(chunks, "obj", k), _combine(chunks, "obj2", k), n)
        diff, diff_se = _mean_se(_combine(chunks, "diff", k), _combine(chunks, "diff2", k), n)
        rows = []
        for gi, g in enumerate(gamma_db):
            ber, ber_se = _mean_se(_combine(chunks, "ber", k, gi), _combine(chunks, "ber2", k, gi), n)
            rows.append(GammaRow(float(g), ber, ber_se, eff, stop, obj, obj_se))
        reports.append(ExperimentReport(s.label, params, rows, estimator=estimator))
        objective.append(ObjectiveRow(s.label, obj, obj_se, diff, 0.0 if k == 0 else diff_se))
    return reports, objective


def run_ber_sweep(params: SystemParams, strategy, policy: ThresholdPolicy | None = None,
                  workers: int = 1, estimator: str = "sd_avg") -> ExperimentReport:
    reports, _ = run_sweep(params, [strategy], policy=policy, workers=workers, estimator=estimator)
    return reports[0]


def run_efficiency_sweep(params_template: SystemParams, N_list, strategies, workers: int = 1,
                         gamma_db: float = EFFICIENCY_GAMMA_DB) -> list:
    """Mean efficiency and stop stage per (N, strategy) at one representative SNR."""
    reports = []
    for N in N_list:
        params = replace(params_template, N=int(N))
        labels = [s if isinstance(s, str) else s.label for s in strategies]
        out, _ = run_sweep(params, labels, gamma_db=[gamma_db], workers=workers)
        reports.extend(out)
    return reports


def run_objective_comparison(params: SystemParams, strategies, policy: ThresholdPolicy | None = None,
                             workers: int = 1) -> list:
    """Mean of c_{N_s} Omega_{N_s} per strategy, with paired SE against RS_OSR.

    RS_OSR is put first if it is missing from ``strategies``.
    """
    labels = [s if isinstance(s, str) else s.label for s in strategies]
    items = list(strategies)
    if "rs_osr" not in labels:
        items.insert(0, "rs_osr")
    else:
        i = labels.index("rs_osr")
        items.insert(0, items.pop(i))
    _, rows = run_sweep(params, items, gamma_db=[EFFICIENCY_GAMMA_DB], policy=policy, workers=workers)
    return rows


# -- diversity ---------------------------------------------------------------------------


def estimate_diversity(report: ExperimentReport, window_db=(20.0, 30.0)) -> SlopeFit:
    """Least-squares -slope of log10(BER) against log10(gamma) inside ``window_db``."""
    lo, hi = window_db
    g = report.gamma_db
    ber = report.ber
    inside = (g >= lo - 1e-9) & (g <= hi + 1e-9)
    if inside.sum() < 3:
        raise InsufficientPointsError(f"need at least 3 SNR points in [{lo}, {hi}] dB, got {int(inside.sum())}")
    if np.any(ber[inside] <= 0):
        raise ZeroBerError("BER underflowed to 0 inside the window; lower the window or add trials")
    fit = stats.linregress(np.log10(db_to_linear(g[inside])), np.log10(ber[inside]))
    out = SlopeFit((float(lo), float(hi)), float(-fit.slope), float(fit.stderr), int(inside.sum()))
    report.slope_fit = out
    return out


# -- CSV ---------------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        p = rep.params
        for row in rep.per_gamma:
            w.writerow([_fmt(v) for v in (
                rep.strategy_label, p.N, p.tau, p.r, row.gamma_db, p.trials, p.seed, row.ber_mean,
                row.ber_se, row.mean_efficiency, row.mean_stop_time, row.objective_mean, row.objective_se)])
    return buf.getvalue()


def write_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(report_csv(reports))
