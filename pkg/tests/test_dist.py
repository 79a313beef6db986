import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import k1e

from relaystop.dist import (DomainError, IndexDistribution, g_func, h_func, link_gain_from_uniform,
                            max_quantile, relay_index, sample_link_gain)


def bessel_ccdf(z, q1=1.0, q2=1.0):
    # closed form of P(w > z) for exponential gains
    z = np.asarray(z, dtype=float)
    kappa = 1 / (2 * q1) + 1 / (2 * q2)
    s = z / math.sqrt(q1 * q2)
    with np.errstate(invalid="ignore"):
        out = np.exp(-kappa * z - s) * s * k1e(s)
    return np.where(z > 0, out, 1.0)


def test_relay_index_values():
    assert relay_index(1.0, 1.0) == pytest.approx(1.0)
    assert relay_index(2.0, 3.0, 1.0, 1.0) == pytest.approx(2 * 2 * 3 / 5)
    assert relay_index(0.0, 0.0) == 0.0
    assert relay_index(0.0, 5.0) == 0.0


@given(st.floats(1e-6, 50), st.floats(1e-6, 50), st.floats(0.1, 4), st.floats(0.1, 4))
def test_relay_index_bounded_by_scaled_gains(ws, wd, q1, q2):
    w = relay_index(ws, wd, q1, q2)
    assert 0 <= w <= 2 * q2 * ws * (1 + 1e-12)
    assert w <= 2 * q1 * wd * (1 + 1e-12)
    assert relay_index(ws * 2, wd, q1, q2) >= w


def test_link_gain_sampling(rng):
    g = sample_link_gain(rng, 200_000)
    assert g.min() >= 0
    assert g.mean() == pytest.approx(1.0, abs=0.01)
    assert link_gain_from_uniform(np.exp(-2.0)) == pytest.approx(2.0)


@pytest.mark.parametrize("q1,q2", [(1.0, 1.0), (0.5, 2.0), (3.0, 1.0)])
def test_ccdf_matches_bessel(q1, q2):
    d = IndexDistribution(q1, q2)
    z = np.concatenate([[1e-4, 0.01, 0.3], np.linspace(0.5, 12, 60)])
    assert np.max(np.abs(d.ccdf(z) - bessel_ccdf(z, q1, q2))) < 1e-9
    for zi in (0.01, 0.7, 3.0):
        assert d.ccdf(zi) == pytest.approx(float(bessel_ccdf(zi, q1, q2)), abs=1e-9)


def test_ccdf_edges(dist):
    assert dist.ccdf(0.0) == 1.0
    with pytest.raises(DomainError):
        dist.ccdf(-1.0)
    assert dist.ccdf(dist.tail_limit * 2) < 1e-14
    assert dist.cdf(1.0) == pytest.approx(1 - dist.ccdf(1.0))


def test_ccdf_matches_empirical(dist, rng):
    d = IndexDistribution()
    d.fill_sample_cache(rng, 400_000)
    z = np.array([0.2, 0.6, 1.0, 2.0])
    assert np.max(np.abs(d.empirical_ccdf(z) - d.ccdf(z))) < 4e-3


def test_mean_and_tail_integral(dist):
    assert dist.mean == pytest.approx(2 / 3, abs=1e-8)
    for x in (0.0, 0.4, 1.3, 4.0):
        ref, _ = quad(lambda u: float(bessel_ccdf(u)), x, 40, limit=200)
        assert dist.tail_integral(x) == pytest.approx(ref, abs=1e-9)


def test_h_and_g(dist):
    assert h_func(dist, 1.0) == pytest.approx(1.0 + dist.tail_integral(1.0))
    y = 12 / 11
    x = g_func(dist, y)
    assert x == pytest.approx(1.1185011, abs=1e-6)
    assert h_func(dist, x) / x == pytest.approx(y, rel=1e-7)
    assert math.isinf(g_func(dist, 1.0))
    with pytest.raises(DomainError):
        g_func(dist, 0.9)


def test_g_decreasing(dist):
    ys = [1.01, 1.05, 1.2, 1.5, 2.0]
    xs = [g_func(dist, y) for y in ys]
    assert all(a > b for a, b in zip(xs, xs[1:]))


def test_max_quantile(dist):
    x = max_quantile(dist, 0.9, 5)
    assert (1 - dist.ccdf(x)) ** 5 == pytest.approx(0.9, abs=1e-6)
