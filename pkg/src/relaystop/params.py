from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODULATIONS = ("bpsk",)


@dataclass(frozen=True)
class SystemParams:
    """Scenario constants shared by the simulator and the experiment driver.

    SNR is gamma = P/eta0 with eta0 = 1, so gamma in linear units equals the
    total power budget P.
    """

    N: int = 10
    tau: float = 0.1
    r: float = 0.5
    q1: float = 1.0
    q2: float = 1.0
    gamma_db_list: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    modulation: str = "bpsk"
    trials: int = 100_000
    seed: int = 20240601

    def __post_init__(self):
        object.__setattr__(self, "gamma_db_list", tuple(float(g) for g in self.gamma_db_list))
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must lie in (0, 1)")
        if not (self.q1 > 0 and self.q2 > 0):
            raise ValueError("q1 and q2 must be positive")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be an integer >= 1")
        if list(self.gamma_db_list) != sorted(self.gamma_db_list):
            raise ValueError("gamma_db_list must be sorted ascending")
        if self.modulation not in MODULATIONS:
            raise ValueError(f"modulation must be one of {MODULATIONS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def gammas(self) -> np.ndarray:
        return db_to_linear(np.asarray(self.gamma_db_list))


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)
