"""Probing strategies behind one interface.

Every strategy answers two questions: the scalar ``next_action`` used when a
single transmission is stepped through stage by stage, and ``stop_stages``,
the vectorized equivalent over a batch of running-maximum paths.  All of them
share the final-stage rule: at stage N the best relay is used only if its
index is at least the direct-link gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import CONTINUE, Action, Decision, ThresholdPolicy, decide, final_decision


def _forced_final(stage, n_relays, omega_max, argmax_stage, omega_sd):
    if stage >= n_relays:
        return final_decision(omega_max, argmax_stage, omega_sd)
    return None


@dataclass(frozen=True)
class RSOSR:
    policy: ThresholdPolicy
    label: str = "rs_osr"

    @property
    def n_relays(self) -> int:
        return self.policy.N

    def next_action(self, stage, omega_max, argmax_stage, omega_sd, rng=None, u=None) -> Decision:
        return decide(self.policy, stage, omega_max, argmax_stage, omega_sd)

    def stop_stages(self, running_max: np.ndarray, uniforms=None) -> np.ndarray:
        levels = np.append(self.policy.thresholds, -np.inf)
        return np.argmax(running_max >= levels[None, :], axis=1) + 1


@dataclass(frozen=True)
class RSAll:
    n_relays: int
    label: str = "rs_all"

    def next_action(self, stage, omega_max, argmax_stage, omega_sd, rng=None, u=None) -> Decision:
        return _forced_final(stage, self.n_relays, omega_max, argmax_stage, omega_sd) or CONTINUE

    def stop_stages(self, running_max: np.ndarray, uniforms=None) -> np.ndarray:
        return np.full(running_max.shape[0], self.n_relays)


@dataclass(frozen=True)
class FixedStop:
    k: int
    n_relays: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n_relays:
            raise ValueError(f"FixedStop needs 1 <= k <= N, got k={self.k}, N={self.n_relays}")

    @property
    def label(self) -> str:
        return f"fixed:{self.k}"

    def next_action(self, stage, omega_max, argmax_stage, omega_sd, rng=None, u=None) -> Decision:
        final = _forced_final(stage, self.n_relays, omega_max, argmax_stage, omega_sd)
        if final is not None:
            return final
        if stage >= self.k:
            return Decision(Action.STOP_WITH_RELAY, argmax_stage)
        return CONTINUE

    def stop_stages(self, running_max: np.ndarray, uniforms=None) -> np.ndarray:
        return np.full(running_max.shape[0], self.k)


@dataclass(frozen=True)
class RandomStop:
    p: float
    n_relays: int

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("RandomStop needs 0 < p <= 1")

    @property
    def label(self) -> str:
        return f"random:{self.p:g}"

    def next_action(self, stage, omega_max, argmax_stage, omega_sd, rng=None, u=None) -> Decision:
        """Stop with probability p; ``u`` is the stage's uniform draw if pre-drawn."""
        final = _forced_final(stage, self.n_relays, omega_max, argmax_stage, omega_sd)
        if final is not None:
            return final
        if u is None:
            u = rng.random()
        if u < self.p:
            return Decision(Action.STOP_WITH_RELAY, argmax_stage)
        return CONTINUE

    def stop_stages(self, running_max: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        hit = uniforms[:, : self.n_relays] < self.p
        hit[:, -1] = True
        return np.argmax(hit, axis=1) + 1


def next_action(strategy, stage, omega_max, argmax_stage, omega_sd, rng=None, u=None) -> Decision:
    if not 1 <= stage <= strategy.n_relays:
        raise ValueError(f"stage must be in 1..{strategy.n_relays}")
    return strategy.next_action(stage, omega_max, argmax_stage, omega_sd, rng=rng, u=u)


def make_strategy(label: str, n_relays: int, policy: ThresholdPolicy | None = None):
    """Build a strategy from its CLI label: rs_osr, rs_all, fixed:<k>, random:<p>."""
    name, _, arg = label.strip().lower().partition(":")
    if name == "rs_osr":
        if policy is None:
            raise ValueError("rs_osr needs a solved policy")
        if policy.N != n_relays:
            raise ValueError(f"policy solved for N={policy.N}, scenario has N={n_relays}")
        return RSOSR(policy)
    if name == "rs_all":
        return RSAll(n_relays)
    if name == "fixed":
        return FixedStop(int(arg), n_relays)
    if name == "random":
        return RandomStop(float(arg), n_relays)
    raise ValueError(f"unknown strategy {label!r}")
