"""One cooperative transmission: probing, power split and decode-and-forward errors.

Channel draws for one transmission use a fixed layout of 1 + 3N uniforms

    [direct | source->relay 1..N | relay->destination 1..N | stop coins 1..N]

so a batch of B transmissions drawn as a (B, 1+3N) matrix from one stream is
identical, row by row, to B sequential single-transmission draws, and every
strategy sees the same channels (common random numbers).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc, erfcx

from .dist import link_gain_from_uniform, relay_index
from .params import SystemParams, db_to_linear
from .policy import Action, bandwidth_efficiency


class Modulation(str, enum.Enum):
    BPSK = "bpsk"


# Chernoff constants: Phi(g) <= A_M exp(-B_M g)
CHERNOFF = {Modulation.BPSK: (0.5, 1.0)}


def ser_awgn(gamma_eff, modulation=Modulation.BPSK):
    """Symbol error rate at SNR ``gamma_eff``; BPSK: Q(sqrt(2 g)) = erfc(sqrt(g))/2."""
    if Modulation(modulation) is not Modulation.BPSK:
        raise ValueError(f"unsupported modulation {modulation!r}")
    g = np.asarray(gamma_eff, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma_eff must be nonnegative")
    out = 0.5 * erfc(np.sqrt(g))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PowerAllocation:
    P: float
    r: float
    c: float
    P_s: float
    P_r: float


def power_split(P: float, c: float, r: float) -> PowerAllocation:
    if not P > 0:
        raise ValueError("P must be positive")
    if not 0.0 < r < 1.0:
        raise ValueError("r must lie in the open interval (0, 1)")
    if not 0.0 < c <= 1.0:
        raise ValueError("c must lie in (0, 1]")
    return PowerAllocation(P, r, c, r * P * c, (1.0 - r) * P * c)


def conditional_error(gamma, c, r, w_sk, w_sd, w_kd, modulation=Modulation.BPSK):
    """DF error probability given the channels of the chosen relay k.

    Relay decodes with probability 1 - Phi(r w_sk c gamma); the destination then
    combines both copies, otherwise it only has the direct copy.
    """
    gamma = np.asarray(gamma, dtype=float)
    relay_fail = ser_awgn(r * np.asarray(w_sk) * c * gamma, modulation)
    both = ser_awgn((r * np.asarray(w_sd) + (1.0 - r) * np.asarray(w_kd)) * c * gamma, modulation)
    direct = ser_awgn(r * np.asarray(w_sd) * c * gamma, modulation)
    return (1.0 - relay_fail) * both + relay_fail * direct


def direct_error(gamma, c, w_sd, modulation=Modulation.BPSK):
    """Error probability with no relay: the whole budget P*c goes to the source."""
    return ser_awgn(np.asarray(w_sd) * c * np.asarray(gamma, dtype=float), modulation)


def error_upper_bound(gamma, c, r, q1, q2, x, A_M=0.5, B_M=1.0):
    """Sum-of-exponentials bound on the DF error once the chosen relay's index is x."""
    g = np.asarray(gamma, dtype=float) * c * np.asarray(x, dtype=float)
    return A_M * np.exp(-B_M * (1.0 - r) / (2.0 * q1) * g) + A_M * np.exp(-B_M * r / (2.0 * q2) * g)


def bpsk_exp_average(A, B, lo, hi):
    """int_lo^hi Q(sqrt(2 (A w + B))) e^{-w} dw for A, B >= 0 (hi may be inf).

    Closed form by parts; erfcx keeps exp(B/A) * erfc(.) finite for small A.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    fin = np.isfinite(hi)
    hi_f = np.where(fin, hi, 0.0)

    def edge(w, finite):
        return np.where(finite, 0.5 * erfc(np.sqrt(A * w + B)) * np.exp(-w), 0.0)

    safe_A = np.where(A > 0, A, 1.0)
    lam = (safe_A + 1.0) / safe_A

    def inner(w, finite):
        v = safe_A * w + B
        return np.where(finite, erfcx(np.sqrt(lam * v)) * np.exp(-(safe_A + 1.0) * w - B), 0.0)

    true_lo = np.ones_like(fin)
    val = edge(lo, true_lo) - edge(hi_f, fin) - 0.5 / np.sqrt(lam) * (inner(lo, true_lo) - inner(hi_f, fin))
    flat = 0.5 * erfc(np.sqrt(B)) * (np.exp(-lo) - np.where(fin, np.exp(-hi_f), 0.0))
    return np.where(A > 0, val, flat)


def sd_averaged_error(gamma, c, r, w_sk, w_kd, relay_range, modulation=Modulation.BPSK):
    """E over the direct gain of the DF error with the relay used on ``relay_range``.

    ``relay_range`` is the upper end L of the direct-gain interval [0, L] on which
    the relay is used (inf when the relay is always used); above L the
    transmission is direct with full power.
    """
    if Modulation(modulation) is not Modulation.BPSK:
        raise ValueError(f"unsupported modulation {modulation!r}")
    gamma = np.asarray(gamma, dtype=float)
    L = np.asarray(relay_range, dtype=float)
    fail = ser_awgn(r * np.asarray(w_sk) * c * gamma)
    a = r * c * gamma
    b = (1.0 - r) * np.asarray(w_kd) * c * gamma
    zero = np.zeros_like(L)
    relay_part = (1.0 - fail) * bpsk_exp_average(a, b, zero, L) + fail * bpsk_exp_average(a, 0.0, zero, L)
    direct_part = np.where(np.isfinite(L), bpsk_exp_average(c * gamma, 0.0, L, np.inf), 0.0)
    return relay_part + direct_part


# -- channel draws --------------------------------------------------------------


@dataclass
class ChannelDraw:
    omega_sd: float
    omega_s: np.ndarray
    omega_d: np.ndarray
    stop_uniforms: Optional[np.ndarray] = None


@dataclass
class ChannelBatch:
    omega_sd: np.ndarray       # (B,)
    omega_s: np.ndarray        # (B, N)
    omega_d: np.ndarray        # (B, N)
    stop_uniforms: np.ndarray  # (B, N)

    def __len__(self):
        return self.omega_sd.shape[0]

    def row(self, i: int) -> ChannelDraw:
        return ChannelDraw(float(self.omega_sd[i]), self.omega_s[i].copy(), self.omega_d[i].copy(),
                           self.stop_uniforms[i].copy())


def draw_channels(rng: np.random.Generator, N: int, size: int) -> ChannelBatch:
    u = rng.random((size, 1 + 3 * N))
    gains = link_gain_from_uniform(1.0 - u[:, : 1 + 2 * N])
    return ChannelBatch(gains[:, 0], gains[:, 1 : 1 + N], gains[:, 1 + N : 1 + 2 * N], u[:, 1 + 2 * N :])


def draw_channel(rng: np.random.Generator, N: int) -> ChannelDraw:
    return draw_channels(rng, N, 1).row(0)


def trial_stream(seed: int, chunk: int) -> np.random.Generator:
    """Independent stream for trial chunk ``chunk``: SeedSequence(seed, spawn_key=(chunk,))."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))))


# -- one transmission ------------------------------------------------------------


@dataclass
class TransmissionOutcome:
    stop_stage: int
    chosen_relay: Optional[int]
    efficiency: float
    objective_term: float
    cond_error_prob: float
    error: Optional[bool] = None


def _outcome_error(gamma, c, r, draw: ChannelDraw, relay: Optional[int], modulation):
    if relay is None:
        return float(direct_error(gamma, c, draw.omega_sd, modulation))
    k = relay - 1
    return float(conditional_error(gamma, c, r, draw.omega_s[k], draw.omega_sd, draw.omega_d[k], modulation))


def simulate_transmission(params: SystemParams, strategy, rng: np.random.Generator, gamma_db: float,
                          symbol_level: bool = False, draw: ChannelDraw | None = None) -> TransmissionOutcome:
    """Probe relays one by one under ``strategy`` and account for the chosen path.

    The direct-link gain is probed first (at no modeled cost); relay n's two
    gains become known at stage n.  ``draw`` overrides the random channels.
    """
    N = params.N
    if strategy.n_relays != N:
        raise ValueError(f"strategy built for N={strategy.n_relays}, scenario has N={N}")
    if draw is None:
        draw = draw_channel(rng, N)
    omega = relay_index(draw.omega_s, draw.omega_d, params.q1, params.q2)
    omega_max, argmax = -np.inf, 0
    for stage in range(1, N + 1):
        w = float(omega[stage - 1])
        if w > omega_max:
            omega_max, argmax = w, stage
        u = None if draw.stop_uniforms is None else float(draw.stop_uniforms[stage - 1])
        decision = strategy.next_action(stage, omega_max, argmax, draw.omega_sd, rng=rng, u=u)
        if decision.stops:
            break
    else:  # pragma: no cover - every strategy stops at N
        raise RuntimeError("strategy failed to stop at stage N")

    relay = decision.relay if decision.action is Action.STOP_WITH_RELAY else None
    c = float(bandwidth_efficiency(stage, params.tau))
    gamma = float(db_to_linear(gamma_db))
    pe = _outcome_error(gamma, c, params.r, draw, relay, params.modulation)
    error = None
    if symbol_level:
        k = (relay or 1) - 1
        rate = symbol_error_rate(gamma, c, params.r, draw.omega_s[k], draw.omega_sd, draw.omega_d[k],
                                 1, rng, use_relay=relay is not None)
        error = bool(rate > 0)
    return TransmissionOutcome(stage, relay, c, c * omega_max, pe, error)


# -- symbol-level cross-check ------------------------------------------------------


def symbol_error_rate(gamma, c, r, w_sk, w_sd, w_kd, n_symbols: int, rng: np.random.Generator,
                      use_relay: bool = True, block: int = 1 << 20) -> float:
    """Monte Carlo BPSK error rate through the DF chain.

    Real baseband: a branch with SNR g carries sqrt(2 g) x + n, n ~ N(0, 1).  The
    relay forwards only symbols it decoded correctly; the destination then
    maximal-ratio combines the direct and relay branches, or keeps the direct
    branch alone.
    """
    if use_relay:
        g_sd, g_sr, g_rd = r * w_sd * c * gamma, r * w_sk * c * gamma, (1.0 - r) * w_kd * c * gamma
    else:
        g_sd, g_sr, g_rd = w_sd * c * gamma, 0.0, 0.0
    a_sd, a_sr, a_rd = np.sqrt(2 * g_sd), np.sqrt(2 * g_sr), np.sqrt(2 * g_rd)
    errors = 0
    done = 0
    while done < n_symbols:
        m = min(block, n_symbols - done)
        x = 1.0 - 2.0 * rng.integers(0, 2, m)
        y_sd = a_sd * x + rng.standard_normal(m)
        if use_relay:
            relay_ok = np.sign(a_sr * x + rng.standard_normal(m)) == x
            y_rd = a_rd * x + rng.standard_normal(m)
            z = a_sd * y_sd + np.where(relay_ok, a_rd * y_rd, 0.0)
        else:
            z = y_sd
        # z == 0 only when every branch has zero SNR: guess
        guess = np.where(z == 0, 1.0 - 2.0 * rng.integers(0, 2, m), np.sign(z))
        errors += int(np.count_nonzero(guess != x))
        done += m
    return errors / n_symbols


# -- batches -----------------------------------------------------------------------


@dataclass
class BatchOutcome:
    stop_stage: np.ndarray      # (B,)
    chosen_relay: np.ndarray    # (B,), 0 when no relay is used
    efficiency: np.ndarray      # (B,)
    objective_term: np.ndarray  # (B,)
    cond_error: np.ndarray      # (B, G) error given all channels
    sd_avg_error: np.ndarray    # (B, G) error averaged over the direct gain


def running_argmax(omega: np.ndarray) -> np.ndarray:
    """1-based smallest stage attaining the running maximum."""
    B, N = omega.shape
    out = np.empty((B, N), dtype=np.int64)
    best = omega[:, 0].copy()
    out[:, 0] = 1
    for n in range(1, N):
        better = omega[:, n] > best
        best = np.where(better, omega[:, n], best)
        out[:, n] = np.where(better, n + 1, out[:, n - 1])
    return out


def simulate_batch(params: SystemParams, strategy, channels: ChannelBatch, gamma_db=None) -> BatchOutcome:
    """Vectorized :func:`simulate_transmission` over a batch of draws and an SNR grid (dB)."""
    N = params.N
    gammas = params.gammas if gamma_db is None else db_to_linear(np.atleast_1d(gamma_db))
    omega = relay_index(channels.omega_s, channels.omega_d, params.q1, params.q2)
    running = np.maximum.accumulate(omega, axis=1)
    argmax = running_argmax(omega)
    stop = np.asarray(strategy.stop_stages(running, channels.stop_uniforms), dtype=np.int64)
    rows = np.arange(len(channels))
    omega_stop = running[rows, stop - 1]
    best = argmax[rows, stop - 1]
    final = stop == N
    no_relay = final & (omega_stop < channels.omega_sd)
    relay = np.where(no_relay, 0, best)

    c = 1.0 / (1.0 + stop * params.tau)
    # the averaged error also covers direct gains for which the best relay is used
    k = best - 1
    w_sk = channels.omega_s[rows, k][:, None]
    w_kd = channels.omega_d[rows, k][:, None]
    w_sd = channels.omega_sd[:, None]
    cc = c[:, None]
    g = gammas[None, :]
    cond = np.where(no_relay[:, None], direct_error(g, cc, w_sd),
                    conditional_error(g, cc, params.r, w_sk, w_sd, w_kd))
    # relay is used for w_sd <= Omega_N at stage N, for every w_sd earlier
    L = np.where(final, omega_stop, np.inf)[:, None]
    sd_avg = sd_averaged_error(g, cc, params.r, w_sk, w_kd, L)
    return BatchOutcome(stop, relay, c, c * omega_stop, cond, sd_avg)
