"""Brute-force validators on discretized index laws.

``exact_dp_value`` runs the backward induction in rational arithmetic over the
finite state space; ``exhaustive_policy_search`` scores every stop-set rule
that is a function of (stage, Omega_n).  Both are independent of the grid
solver in :mod:`relaystop.policy` and are used to certify it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .policy import StageSchedule

MAX_SUPPORT = 8
MAX_STAGES = 8
ENUMERATION_BUDGET = 1 << 22


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscreteIndexDist:
    """Finite-support stand-in for the relay index law.

    Exposes the same surface the grid solver uses (``ccdf``, ``tail_integral``,
    ``breakpoints``, ``tail_limit``, ``support_max``) so it can be solved by
    :func:`relaystop.policy.solve_thresholds` directly.
    """

    support: tuple
    probs: tuple

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if s.ndim != 1 or s.size == 0 or s.size > MAX_SUPPORT:
            raise ValueError(f"support must have 1..{MAX_SUPPORT} points")
        if p.shape != s.shape:
            raise ValueError("probs must match support")
        if np.any(s < 0) or np.any(np.diff(s) <= 0):
            raise ValueError("support must be nonnegative and strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "support", tuple(float(v) for v in s))
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    @property
    def s(self) -> np.ndarray:
        return np.asarray(self.support)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def support_max(self) -> float:
        return self.support[-1]

    @property
    def tail_limit(self) -> float:
        return self.support[-1]

    @property
    def mean(self) -> float:
        return float(self.p @ self.s)

    def breakpoints(self) -> np.ndarray:
        return self.s

    def ccdf(self, z):
        z = np.asarray(z, dtype=float)
        out = (self.s[None, :] > z.reshape(-1, 1)).astype(float) @ self.p
        return float(out[0]) if z.ndim == 0 else out.reshape(z.shape)

    def tail_integral(self, x):
        x = np.asarray(x, dtype=float)
        out = np.maximum(self.s[None, :] - x.reshape(-1, 1), 0.0) @ self.p
        return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(self.s, size=size, p=self.p)


def random_discrete_dist(rng: np.random.Generator, n_points: int) -> DiscreteIndexDist:
    support = np.sort(rng.uniform(0.05, 4.0, n_points))
    while np.any(np.diff(support) < 1e-3):
        support = np.sort(rng.uniform(0.05, 4.0, n_points))
    probs = rng.dirichlet(np.ones(n_points))
    probs[-1] = 1.0 - probs[:-1].sum()
    return DiscreteIndexDist(tuple(support), tuple(probs))


# -- exact dynamic programming ---------------------------------------------------


@dataclass
class DPResult:
    values: dict          # stage -> {support value: V_n}
    continuation: dict    # stage -> {support value: E[V_{n+1}(max(s, w))]}
    stop_sets: dict       # stage -> frozenset of support values where stopping is optimal
    optimal_value: float


def exact_dp_value(schedule: StageSchedule, dist: DiscreteIndexDist) -> DPResult:
    """Backward induction over Omega_n in {support}, in exact rational arithmetic."""
    N = schedule.N
    if N > MAX_STAGES or len(dist.support) > MAX_SUPPORT:
        raise EnumerationBudgetError(f"state space too large: N={N}, |support|={len(dist.support)}")
    tau = Fraction(schedule.tau)
    c = {n: 1 / (1 + n * tau) for n in range(1, N + 1)}
    s = [Fraction(v) for v in dist.support]
    p = [Fraction(v) for v in dist.probs]

    V = {N: {i: c[N] * s[i] for i in range(len(s))}}
    cont = {}
    stops = {N: frozenset(dist.support)}
    for n in range(N - 1, 0, -1):
        nxt = V[n + 1]
        V[n], cont[n] = {}, {}
        stop = []
        for i in range(len(s)):
            e = sum(p[j] * nxt[max(i, j)] for j in range(len(s)))
            cont[n][i] = e
            if c[n] * s[i] >= e:
                stop.append(dist.support[i])
            V[n][i] = max(c[n] * s[i], e)
        stops[n] = frozenset(stop)
    best = sum(p[i] * V[1][i] for i in range(len(s)))

    def as_float(table):
        return {n: {dist.support[i]: float(v) for i, v in row.items()} for n, row in table.items()}

    return DPResult(as_float(V), as_float(cont), stops, float(best))


# -- exhaustive search ---------------------------------------------------------------


@dataclass
class SearchResult:
    best_value: float
    best_rule: list        # stage n -> frozenset of reachable support values where the rule stops
    reachable: list        # stage n -> frozenset of support values reached with positive probability
    rules_evaluated: int

    def is_threshold_rule(self) -> bool:
        """True when every stage's stop set is an up-set of the reachable states."""
        for stop, reach in zip(self.best_rule, self.reachable):
            for v in stop:
                if any(u > v and u not in stop for u in reach):
                    return False
        return True


def exhaustive_policy_search(schedule: StageSchedule, dist: DiscreteIndexDist) -> SearchResult:
    """Score every (stage, Omega_n)-measurable stopping rule, forced stop at N."""
    N = schedule.N
    S = len(dist.support)
    n_rules = (1 << S) ** (N - 1)
    if N > 5 or S > 5 or n_rules > ENUMERATION_BUDGET:
        raise EnumerationBudgetError(f"{n_rules} rules for N={N}, |support|={S}")
    s, p = dist.s, dist.p
    F = np.cumsum(p)
    # T[i, j] = P(max(s_i, w) = s_j)
    T = np.triu(np.tile(p, (S, 1)), k=1) + np.diag(F)
    masks = ((np.arange(1 << S)[:, None] >> np.arange(S)[None, :]) & 1).astype(bool)

    mass = p[None, :]
    value = np.zeros(1)
    for n in range(1, N):
        c_n = schedule.c(n)
        stopped = mass[:, None, :] * masks[None, :, :]
        value = (value[:, None] + c_n * (stopped @ s)).ravel()
        mass = ((mass[:, None, :] - stopped) @ T).reshape(-1, S)
    value = value + schedule.c(N) * (mass @ s)

    best = int(np.argmax(value))
    digits = []
    idx = best
    for _ in range(N - 1):
        digits.append(idx % (1 << S))
        idx //= 1 << S
    digits.reverse()

    rule, reach = [], []
    m = p.copy()
    for n, mask_id in enumerate(digits, start=1):
        mask = masks[mask_id]
        live = m > 0
        reach.append(frozenset(float(v) for v in s[live]))
        rule.append(frozenset(float(v) for v in s[live & mask]))
        m = (m * ~mask) @ T
    return SearchResult(float(value[best]), rule, reach, int(value.size))


def threshold_brackets(policy, dp: DPResult, dist: DiscreteIndexDist) -> list:
    """For each stage n < N, whether t_n lies in (s_{k-1}, s_k] with s_k the
    smallest support point in the exact stop set (s_0 = 0)."""
    out = []
    support = list(dist.support)
    for n in range(1, policy.N):
        t = policy.threshold(n)
        stop = dp.stop_sets[n]
        k = min(support.index(v) for v in stop)
        lower = support[k - 1] if k > 0 else 0.0
        tol = 1e-9 * max(1.0, support[-1])
        out.append(lower - tol < t <= support[k] + tol)
    return out
