"""Link-gain and relay-index distributions.

Link gains are |h|^2 of unit-variance complex Gaussian coefficients, i.e.
Exponential(1).  The relay index combines the source-relay and relay-destination
gains of one relay as

    w = 2*q1*q2*w_s*w_d / (q1*w_d + q2*w_s)

Conditioning on the source-relay gain X = x, the index exceeds z exactly when the
relay-destination gain exceeds q2*x*z / (q1*(2*q2*x - z)), which is only possible
for x > z/(2*q2).  Shifting x = z/(2*q2) + u gives the integral evaluated by
:meth:`IndexDistribution.ccdf`:

    P(w > z) = exp(-z/(2*q2)) * int_0^inf exp(-z*(z/(2*q2) + u)/(2*q1*u) - u) du
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad, quad_vec

# e^{-x} < 1e-15 past this point; hard cut-off for every tail integral.
EXP_CUTOFF = -math.log(1e-15)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
# Vectorized quadrature only pays off for larger batches.
_VECTOR_MIN = 48
_TABLE_PANELS = 4096


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved error estimate {residual:.3e})")
        self.residual = residual


class DomainError(ValueError):
    pass


def sample_link_gain(rng: np.random.Generator, size=None):
    """Draw Exponential(1) link gains as -ln(U) with U uniform on (0, 1]."""
    u = 1.0 - rng.random(size)
    return link_gain_from_uniform(u)


def link_gain_from_uniform(u):
    """Inverse-CDF map for a uniform ``u`` in (0, 1]."""
    g = -np.log(u)
    if np.ndim(g) == 0:
        return float(g) + 0.0  # -log(1) is -0.0
    return g + 0.0


def relay_index(w_s, w_d, q1: float = 1.0, q2: float = 1.0):
    """Relay index from the source-relay gain ``w_s`` and relay-destination gain ``w_d``.

    Works elementwise on arrays.  The 0/0 point (both gains zero) maps to 0.
    """
    if q1 <= 0 or q2 <= 0:
        raise ValueError("q1 and q2 must be positive")
    w_s = np.asarray(w_s, dtype=float)
    w_d = np.asarray(w_d, dtype=float)
    den = q1 * w_d + q2 * w_s
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, 2.0 * q1 * q2 * w_s * w_d / np.where(den > 0, den, 1.0), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class IndexDistribution:
    """Law of the relay index for i.i.d. Exponential(1) link gains.

    ``sample_cache`` optionally holds sorted Monte Carlo samples of the index for
    empirical cross-checks; it plays no part in the quadrature.
    """

    q1: float = 1.0
    q2: float = 1.0
    ccdf_tol: float = 1e-9
    sample_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.q1 <= 0 or self.q2 <= 0:
            raise ValueError("q1 and q2 must be positive")
        if self.ccdf_tol <= 0:
            raise ValueError("ccdf_tol must be positive")

    # P(w > z) <= P(w_s > z/(2 q2), w_d > z/(2 q1)) = exp(-decay*z)
    @property
    def decay(self) -> float:
        return 0.5 / self.q1 + 0.5 / self.q2

    @property
    def tail_limit(self) -> float:
        """Upper integration limit: the CCDF is below 1e-15 beyond it."""
        return EXP_CUTOFF / self.decay

    @property
    def support_max(self) -> float:
        return math.inf

    def breakpoints(self) -> np.ndarray:
        """Points where the CCDF is not smooth (none for this law)."""
        return np.empty(0)

    def sample(self, rng: np.random.Generator, size=None):
        w_s = sample_link_gain(rng, size)
        w_d = sample_link_gain(rng, size)
        return relay_index(w_s, w_d, self.q1, self.q2)

    def fill_sample_cache(self, rng: np.random.Generator, size: int) -> np.ndarray:
        self.sample_cache = np.sort(self.sample(rng, size))
        return self.sample_cache

    def empirical_ccdf(self, z):
        if self.sample_cache is None:
            raise RuntimeError("sample cache is empty; call fill_sample_cache first")
        s = self.sample_cache
        return 1.0 - np.searchsorted(s, z, side="right") / s.size

    # -- CCDF --------------------------------------------------------------

    def _log_window(self, z):
        # Integrate over s = ln(u).  Below u = a*k/40 the factor exp(-a*k/u) is
        # under e^-40; above EXP_CUTOFF the factor e^-u is under 1e-15.
        a = z / (2.0 * self.q2)
        k = z / (2.0 * self.q1)
        with np.errstate(divide="ignore"):
            s_lo = np.minimum(np.log(a * k / 40.0), math.log(EXP_CUTOFF) - 1.0)
        return a, k, s_lo, math.log(EXP_CUTOFF)

    def _ccdf_scalar(self, z: float) -> float:
        if z <= 0.0:
            return 1.0
        a, k, s_lo, s_hi = self._log_window(z)
        s_lo = float(s_lo)

        def f(s):
            u = math.exp(s)
            return math.exp(s - a - k - a * k / u - u)

        out = quad(f, s_lo, s_hi, epsabs=self.ccdf_tol, epsrel=0.0, limit=200, full_output=1)
        val, err = out[0], out[1]
        if len(out) > 3 or err > self.ccdf_tol:
            raise QuadratureError(f"CCDF quadrature at z={z!r} did not converge", err)
        return min(max(val, 0.0), 1.0)

    def _ccdf_vector(self, z: np.ndarray) -> np.ndarray:
        zero = z <= 0.0
        zz = np.where(zero, 1.0, z)
        a, k, s_lo, s_hi = self._log_window(zz)
        width = s_hi - s_lo

        def f(t):
            s = s_lo + t * width
            u = np.exp(s)
            return width * np.exp(s - a - k - a * k / u - u)

        val, err, info = quad_vec(f, 0.0, 1.0, epsabs=self.ccdf_tol, epsrel=0.0,
                                  limit=4000, full_output=True)
        if not info.success or err > self.ccdf_tol:
            raise QuadratureError("vectorized CCDF quadrature did not converge", err)
        return np.where(zero, 1.0, np.clip(val, 0.0, 1.0))

    def ccdf(self, z):
        """P(index > z), by adaptive quadrature to absolute tolerance ``ccdf_tol``."""
        z_arr = np.asarray(z, dtype=float)
        if np.any(z_arr < 0):
            raise DomainError("ccdf argument must be nonnegative")
        if z_arr.ndim == 0:
            return self._ccdf_scalar(float(z_arr))
        flat = z_arr.ravel()
        if flat.size >= _VECTOR_MIN:
            out = self._ccdf_vector(flat)
        else:
            out = np.array([self._ccdf_scalar(v) for v in flat])
        return out.reshape(z_arr.shape)

    def cdf(self, z):
        return 1.0 - self.ccdf(z)

    # -- tail integrals ------------------------------------------------------

    @cached_property
    def _tail_table(self):
        # Cumulative int_{knot}^{limit} ccdf on a uniform knot grid, 8-point
        # Gauss-Legendre per panel.
        knots = np.linspace(0.0, self.tail_limit, _TABLE_PANELS + 1)
        lo, hi = knots[:-1], knots[1:]
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = self.ccdf(nodes.ravel()).reshape(nodes.shape)
        panel = half * (vals @ _GL_WEIGHTS)
        cum = np.concatenate([np.cumsum(panel[::-1])[::-1], [0.0]])
        return knots, cum

    def tail_integral(self, x):
        """int_x^inf P(index > t) dt = E[(index - x)^+]."""
        knots, cum = self._tail_table
        x_arr = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x_arr).ravel()
        if np.any(flat < 0):
            raise DomainError("tail_integral argument must be nonnegative")
        out = np.zeros_like(flat)
        inside = flat < self.tail_limit
        xi = flat[inside]
        if xi.size:
            # knots[j-1] <= x < knots[j]
            j = np.minimum(np.searchsorted(knots, xi, side="right"), _TABLE_PANELS)
            right = knots[j]
            half = 0.5 * (right - xi)
            nodes = (0.5 * (right + xi))[:, None] + half[:, None] * _GL_NODES[None, :]
            vals = self.ccdf(nodes.ravel()).reshape(nodes.shape)
            out[inside] = half * (vals @ _GL_WEIGHTS) + cum[j]
        if x_arr.ndim == 0:
            return float(out[0])
        return out.reshape(x_arr.shape)

    @property
    def mean(self) -> float:
        return self.tail_integral(0.0)


def h_func(dist, x):
    """E[max(x, index)] = x + int_x^inf ccdf(t) dt."""
    x = np.asarray(x, dtype=float)
    out = x + dist.tail_integral(x)
    return float(out) if out.ndim == 0 else out


def g_func(dist, y: float, rtol: float = 1e-8) -> float:
    """Inverse of x -> h(x)/x, which is strictly decreasing on (0, inf).

    The range of h(x)/x is (1, inf) whenever the index is unbounded, so the
    limiting value y = 1 maps to ``inf``.  For a bounded law y = 1 maps to
    the upper end of the support, the smallest x with h(x) = x.
    """
    if not y >= 1.0:
        raise DomainError(f"g_func needs y >= 1, got {y!r}")
    if y == 1.0:
        return float(dist.support_max)
    mean = dist.tail_integral(0.0)
    if mean <= 0.0:
        raise DomainError("index law is degenerate at 0; h(x)/x == 1 everywhere")

    def excess(x):
        return h_func(dist, x) / x - y

    # h(x) >= mean so h(x)/x > y below mean/y; h(x)/x -> 1 < y above.
    lo = mean / y * 0.5
    hi = max(mean, dist.tail_limit)
    if math.isfinite(dist.support_max):
        hi = max(hi, dist.support_max)
    if excess(hi) > 0:
        raise DomainError(f"y={y!r} too close to 1 to resolve numerically")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


def max_quantile(dist, p: float, n: int) -> float:
    """Smallest z with P(max of n i.i.d. indices <= z) >= p."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    # (1 - ccdf(z))^n >= p  <=>  ccdf(z) <= 1 - p^(1/n)
    target = -math.expm1(math.log(p) / n)
    lo, hi = 0.0, dist.tail_limit
    if math.isfinite(dist.support_max):
        hi = dist.support_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dist.ccdf(mid) <= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(hi, 1.0):
            break
    return hi
