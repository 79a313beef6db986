"""Finite-horizon optimal stopping for sequential relay probing.

After probing n relays the source holds the running maximum index Omega_n and
earns c_n * Omega_n if it stops, where c_n = 1/(1 + n*tau).  Value functions are
solved backward from V_N(x) = c_N x with

    V_n(x) = max(c_n x, E[V_{n+1}(max(x, w))])

on a piecewise-linear grid.  For a piecewise-linear V, integration by parts gives
the continuation value exactly in terms of the tail integral T(x) = E[(w - x)^+]:

    E[V(max(x, w))] = V(x) + int_x^inf V'(u) P(w > u) du

so each stage costs one reverse cumulative sum over grid segments.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import IndexDistribution, g_func, max_quantile


class SolverError(RuntimeError):
    def __init__(self, message: str, stage: int, residual: float = math.nan):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage
        self.residual = residual


class UnboundedBoundError(ArithmeticError):
    """The stopping-time bound (1 - eps)/eps is infinite because eps == 0."""

    def __init__(self, t_star: float, epsilon: float):
        super().__init__(
            f"epsilon = P(w > t*) = {epsilon!r} at t* = {t_star!r}; the bound (1-eps)/eps is unbounded"
        )
        self.t_star = t_star
        self.epsilon = epsilon


def bandwidth_efficiency(n, tau: float):
    """Fraction of airtime left for transmission after ``n`` probes: 1/(1 + n*tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if np.any(np.asarray(n) < 0):
        raise ValueError("n must be nonnegative")
    return 1.0 / (1.0 + np.asarray(n, dtype=float) * tau) if np.ndim(n) else 1.0 / (1.0 + n * tau)


@dataclass(frozen=True)
class StageSchedule:
    N: int
    tau: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def efficiencies(self) -> np.ndarray:
        """c_1..c_N (index 0 holds c_1)."""
        return bandwidth_efficiency(np.arange(1, self.N + 1), self.tau)

    def c(self, n: int) -> float:
        return 1.0 / (1.0 + n * self.tau)


@dataclass
class ValueGrid:
    stage: int
    xs: np.ndarray
    vs: np.ndarray
    extrapolation_slope: float

    @property
    def x_max(self) -> float:
        return float(self.xs[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.vs) / np.diff(self.xs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.xs, self.vs)
        over = x > self.xs[-1]
        out = np.where(over, self.vs[-1] + self.extrapolation_slope * (x - self.xs[-1]), out)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GridSpec:
    points: int = 2048
    uniform_fraction: float = 0.75
    uniform_quantile: float = 0.999
    max_quantile: float = 1.0 - 1e-6
    xtol_rel: float = 1e-12
    max_iter: int = 200
    residual_tol: float = 1e-3


@dataclass
class ThresholdPolicy:
    schedule: StageSchedule
    thresholds: np.ndarray
    value_grids: list
    solve_residuals: np.ndarray
    dist: object = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.schedule.N

    def threshold(self, n: int) -> float:
        """Stopping level t_n for stage n < N."""
        return float(self.thresholds[n - 1])

    def grid(self, n: int) -> ValueGrid:
        return self.value_grids[n - 1]


class Action(enum.Enum):
    CONTINUE = "continue"
    STOP_WITH_RELAY = "stop_with_relay"
    STOP_NO_RELAY = "stop_no_relay"


@dataclass(frozen=True)
class Decision:
    action: Action
    relay: Optional[int] = None

    @property
    def stops(self) -> bool:
        return self.action is not Action.CONTINUE


CONTINUE = Decision(Action.CONTINUE)


# -- continuation values ----------------------------------------------------


class _Continuation:
    """E[V(max(x, w))] for a piecewise-linear V with precomputed tail integrals."""

    def __init__(self, grid: ValueGrid, tails: np.ndarray, dist):
        self.grid = grid
        self.tails = tails
        self.dist = dist
        slopes = grid.slopes
        seg = slopes * (tails[:-1] - tails[1:])
        # rest[j] = int_{xs[j]}^inf V'(u) ccdf(u) du
        rest = np.empty(grid.xs.size)
        rest[-1] = grid.extrapolation_slope * tails[-1]
        rest[:-1] = np.cumsum(seg[::-1])[::-1] + rest[-1]
        self.slopes = slopes
        self.rest = rest

    def at_nodes(self) -> np.ndarray:
        return self.grid.vs + self.rest

    def at(self, x, tail_x=None):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if tail_x is None:
            tail_x = np.atleast_1d(self.dist.tail_integral(x))
        xs = self.grid.xs
        j = np.searchsorted(xs, x, side="right") - 1
        inside = j < xs.size - 1
        jj = np.clip(j, 0, xs.size - 2)
        inner = self.slopes[jj] * (tail_x - self.tails[jj + 1]) + self.rest[jj + 1]
        outer = self.grid.extrapolation_slope * tail_x
        return self.grid(x) + np.where(inside, inner, outer)


def continuation_value(next_grid: ValueGrid, x, dist):
    """E[V_{n+1}(max(x, w))] against the piecewise-linear interpolant of ``next_grid``."""
    tails = dist.tail_integral(next_grid.xs)
    out = _Continuation(next_grid, tails, dist).at(x)
    return float(out[0]) if np.ndim(x) == 0 else out


def optimal_value(policy: ThresholdPolicy, dist=None) -> float:
    """E[V_1(w_1)], the optimal expected objective E[c_{N_s} Omega_{N_s}]."""
    dist = dist if dist is not None else policy.dist
    return continuation_value(policy.grid(1), 0.0, dist)


# -- solver -------------------------------------------------------------------


def build_grid(schedule: StageSchedule, dist, spec: GridSpec) -> np.ndarray:
    N = schedule.N
    x_q = max_quantile(dist, spec.uniform_quantile, N)
    x_max = max_quantile(dist, spec.max_quantile, N)
    if N >= 2:
        # keep the last (and largest) threshold well inside the grid
        x_max = max(x_max, 2.0 * g_func(dist, schedule.c(N - 1) / schedule.c(N)))
    if x_max <= x_q * (1.0 + 1e-9):
        x_max = 1.5 * x_q
    n_uniform = max(2, int(round(spec.points * spec.uniform_fraction)))
    uniform = np.linspace(0.0, x_q, n_uniform)
    geometric = np.geomspace(x_q, x_max, spec.points - n_uniform + 1)[1:]
    xs = np.concatenate([uniform, geometric])
    bp = np.asarray(dist.breakpoints(), dtype=float)
    xs = np.union1d(xs, bp[(bp >= 0) & (bp <= x_max)])
    return xs


def _insert(xs, arr, pos, value):
    return np.insert(arr, pos, value)


def solve_thresholds(schedule: StageSchedule, dist=None, grid_spec: GridSpec | None = None) -> ThresholdPolicy:
    """Backward induction for V_N..V_1 and the stopping levels t_1..t_{N-1}.

    Each t_n is the unique root of c_n t - E[V_{n+1}(max(t, w))], found by
    bisection inside the grid cell where the sign change occurs.  The root is
    inserted into stage n's grid so the kink of V_n is represented exactly.
    """
    dist = dist if dist is not None else IndexDistribution()
    spec = grid_spec or GridSpec()
    N = schedule.N
    xs = build_grid(schedule, dist, spec)
    x_max = float(xs[-1])
    tails = np.asarray(dist.tail_integral(xs), dtype=float)

    c_N = schedule.c(N)
    grids = [None] * N
    grids[N - 1] = ValueGrid(N, xs, c_N * xs, c_N)
    thresholds = np.empty(N - 1)
    residuals = np.empty(N - 1)
    xtol = spec.xtol_rel * x_max

    for n in range(N - 1, 0, -1):
        nxt = grids[n]
        cont = _Continuation(nxt, tails, dist)
        c_n = schedule.c(n)
        cnodes = cont.at_nodes()
        psi = c_n * nxt.xs - cnodes
        if psi[0] > 0:
            raise SolverError("c_n*x already exceeds the continuation value at x=0", n)
        pos = np.flatnonzero(psi >= 0)
        if pos.size == 0:
            raise SolverError(
                f"no sign change of c_n*x - E[V_(n+1)] on [0, {x_max:.6g}]", n, float(psi[-1])
            )
        j = int(pos[0])
        if psi[j] == 0.0:
            t = float(nxt.xs[j])
        else:
            lo, hi = float(nxt.xs[j - 1]), float(nxt.xs[j])
            for _ in range(spec.max_iter):
                mid = 0.5 * (lo + hi)
                val = c_n * mid - float(cont.at(mid)[0])
                if val >= 0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo <= xtol:
                    break
            t = hi
        t_tail = float(dist.tail_integral(t))
        c_t = float(cont.at(t, np.array([t_tail]))[0])
        residual = abs(c_n * t - c_t) / (c_n * t) if t > 0 else abs(c_t)
        if residual > spec.residual_tol:
            warnings.warn(f"stage {n}: fixed-point residual {residual:.3e} above {spec.residual_tol}")
        thresholds[n - 1] = t
        residuals[n - 1] = residual

        # V_n on grid: continuation below t, stopping value at and above t
        vs = np.where(nxt.xs < t, cnodes, c_n * nxt.xs)
        k = int(np.searchsorted(nxt.xs, t))
        if k < nxt.xs.size and nxt.xs[k] == t:
            new_xs, new_vs, new_tails = nxt.xs, vs, tails
        else:
            new_xs = np.insert(nxt.xs, k, t)
            new_vs = np.insert(vs, k, c_n * t)
            new_tails = np.insert(tails, k, t_tail)
        grids[n - 1] = ValueGrid(n, new_xs, new_vs, c_n)
        tails = new_tails

    return ThresholdPolicy(schedule, thresholds, grids, residuals, dist)


def fixed_point_residuals(policy: ThresholdPolicy, dist=None) -> np.ndarray:
    """|c_n t_n - E[V_{n+1}(max(t_n, w))]| / (c_n t_n), recomputed from the stored grids."""
    dist = dist if dist is not None else policy.dist
    out = np.empty(policy.N - 1)
    for n in range(1, policy.N):
        t = policy.threshold(n)
        c_n = policy.schedule.c(n)
        cont = continuation_value(policy.grid(n + 1), t, dist)
        out[n - 1] = abs(c_n * t - cont) / (c_n * t)
    return out


def check_value_grid(grid: ValueGrid, rng: np.random.Generator | None = None, pairs: int = 256,
                     tol: float = 1e-9):
    """(monotone, midpoint_convex) for one stage's value function.

    Monotonicity is checked on the nodes; convexity through node slopes and
    ``pairs`` random midpoint probes V((a+b)/2) <= (V(a)+V(b))/2 over [0, x_max].
    """
    scale = tol * max(1.0, float(np.max(np.abs(grid.vs))))
    monotone = bool(np.all(np.diff(grid.vs) >= -scale))
    convex = bool(np.all(np.diff(grid.slopes) >= -tol * max(1.0, float(np.max(np.abs(grid.slopes))))))
    rng = rng if rng is not None else np.random.default_rng(0)
    a, b = rng.uniform(0.0, grid.x_max, (2, pairs))
    convex &= bool(np.all(grid(0.5 * (a + b)) <= 0.5 * (grid(a) + grid(b)) + scale))
    return monotone, convex


def closed_form_threshold(dist, schedule: StageSchedule, n: int) -> float:
    """g(c_n / c_{n+1}): the stopping level if V_{n+1} were linear past it."""
    return g_func(dist, schedule.c(n) / schedule.c(n + 1))


# -- decisions ----------------------------------------------------------------


def decide(policy: ThresholdPolicy, stage: int, omega_max: float, argmax_stage: int,
           omega_sd: float) -> Decision:
    """Stop/continue decision after probing ``stage`` relays.

    Before the last stage the source stops with the best relay once the running
    maximum reaches the stage's stopping level (ties stop).  At stage N the
    best relay is used only if it is at least as good as the direct link.
    """
    N = policy.N
    if not 1 <= stage <= N:
        raise ValueError(f"stage must be in 1..{N}, got {stage}")
    if not 1 <= argmax_stage <= stage:
        raise ValueError("argmax_stage must be in 1..stage")
    if stage < N:
        if omega_max >= policy.threshold(stage):
            return Decision(Action.STOP_WITH_RELAY, argmax_stage)
        return CONTINUE
    return final_decision(omega_max, argmax_stage, omega_sd)


def final_decision(omega_max: float, argmax_stage: int, omega_sd: float) -> Decision:
    if omega_max >= omega_sd:
        return Decision(Action.STOP_WITH_RELAY, argmax_stage)
    return Decision(Action.STOP_NO_RELAY)


# -- analysis -------------------------------------------------------------------


def stopping_time_bound(dist, schedule: StageSchedule | None = None):
    """(t*, eps, (1 - eps)/eps) with t* solving h(x)/x = 1 and eps = P(w > t*).

    h(x) = x forces P(w > x) = 0, so t* sits at or beyond the top of the support
    and eps is 0 for every index law; :class:`UnboundedBoundError` is raised then.
    ``schedule`` is accepted for interface symmetry; the result never depends on N.
    """
    t_star = g_func(dist, 1.0)
    epsilon = float(dist.ccdf(t_star)) if math.isfinite(t_star) else 0.0
    if not epsilon > 0.0:
        raise UnboundedBoundError(t_star, epsilon)
    return t_star, epsilon, (1.0 - epsilon) / epsilon


def horizon_stopping_bound(policy: ThresholdPolicy, dist=None) -> float:
    """1 + sum_{n<N} P(w < t_n)^n, an upper bound on E[N_s] for the solved policy.

    Uses P(N_s > n) <= P(Omega_n < t_n) = F(t_n)^n for the i.i.d. index.
    """
    dist = dist if dist is not None else policy.dist
    n = np.arange(1, policy.N)
    if n.size == 0:
        return 1.0
    F = 1.0 - np.asarray(dist.ccdf(np.asarray(policy.thresholds)), dtype=float)
    return 1.0 + float(np.sum(F ** n))


def value_upper_bound_check(policy: ThresholdPolicy, dist, n: int, x: float,
                            rng: np.random.Generator, replicates: int = 100_000):
    """Check V_n(x) <= c_n E[max(x, max of N-n fresh indices)] (+3 SE).

    Returns ``(passed, v, rhs, se)``.
    """
    N = policy.N
    if not 1 <= n <= N:
        raise ValueError(f"n must be in 1..{N}")
    v = policy.grid(n)(x)
    c_n = policy.schedule.c(n)
    if n == N:
        return bool(v <= c_n * x * (1 + 1e-12) + 1e-15), v, c_n * x, 0.0
    draws = dist.sample(rng, (replicates, N - n)).max(axis=1)
    samples = c_n * np.maximum(x, draws)
    rhs = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(replicates))
    return bool(v <= rhs + 3.0 * se), v, rhs, se


# -- persistence -----------------------------------------------------------------


def policy_to_dict(policy: ThresholdPolicy) -> dict:
    dist = policy.dist
    doc = {
        "N": policy.N,
        "tau": policy.schedule.tau,
        "q1": getattr(dist, "q1", None),
        "q2": getattr(dist, "q2", None),
        "thresholds": [float(t) for t in policy.thresholds],
        "residuals": [float(r) for r in policy.solve_residuals],
        "grids": [
            {
                "stage": g.stage,
                "xs": g.xs.tolist(),
                "vs": g.vs.tolist(),
                "extrapolation_slope": float(g.extrapolation_slope),
            }
            for g in policy.value_grids
        ],
    }
    return doc


def policy_from_dict(doc: dict, dist=None) -> ThresholdPolicy:
    schedule = StageSchedule(int(doc["N"]), float(doc["tau"]))
    if dist is None and doc.get("q1") is not None:
        dist = IndexDistribution(float(doc["q1"]), float(doc["q2"]))
    grids = [
        ValueGrid(int(g["stage"]), np.asarray(g["xs"], dtype=float), np.asarray(g["vs"], dtype=float),
                  float(g["extrapolation_slope"]))
        for g in doc["grids"]
    ]
    if len(grids) != schedule.N:
        raise ValueError(f"policy has {len(grids)} grids for N={schedule.N}")
    thresholds = np.asarray(doc["thresholds"], dtype=float)
    if thresholds.size != schedule.N - 1:
        raise ValueError(f"policy has {thresholds.size} thresholds for N={schedule.N}")
    return ThresholdPolicy(schedule, thresholds, grids, np.asarray(doc["residuals"], dtype=float), dist)


def save_policy(policy: ThresholdPolicy, path) -> None:
    # json renders floats with repr(), which round-trips bit-exactly
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy), fh, indent=1)
        fh.write("\n")


def load_policy(path, dist=None) -> ThresholdPolicy:
    with open(path) as fh:
        return policy_from_dict(json.load(fh), dist)
