"""Variance schedules for the forward/reverse diffusion chain.

A schedule is the beta_t sequence (t = 1..T) plus the running products
alpha_bar_t = prod_{s<=t} (1 - beta_s), with alpha_bar_0 defined as 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleError


@dataclass(frozen=True)
class VarianceSchedule:
    betas: np.ndarray = field(repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ScheduleError("betas must be a nonempty 1-D sequence")
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ScheduleError("every beta_t must lie strictly in (0, 1)")
        betas = np.ascontiguousarray(betas)
        betas.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        alpha_bars = np.cumprod(1.0 - betas)
        alpha_bars.flags.writeable = False
        object.__setattr__(self, "_alpha_bars", alpha_bars)

    @property
    def T(self) -> int:
        return int(self.betas.size)

    @property
    def alpha_bars(self) -> np.ndarray:
        return self._alpha_bars

    def beta(self, t: int) -> float:
        """beta_t for 1-based t in [1, T]."""
        if not 1 <= t <= self.T:
            raise IndexError(f"timestep {t} outside [1, {self.T}]")
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """alpha_bar_t for t in [0, T]; alpha_bar_0 == 1 by convention."""
        if not 0 <= t <= self.T:
            raise IndexError(f"timestep {t} outside [0, {self.T}]")
        if t == 0:
            return 1.0
        return float(self._alpha_bars[t - 1])

    @property
    def fingerprint(self) -> str:
        """Stable content hash binding checkpoints to this schedule."""
        digest = hashlib.sha256()
        digest.update(str(self.T).encode())
        digest.update(self.betas.tobytes())
        return digest.hexdigest()[:16]


def make_schedule(T: int, beta_start: float, beta_end: float, kind: str = "linear") -> VarianceSchedule:
    """Build a schedule with betas linearly spaced over [beta_start, beta_end].

    Endpoints are included; T == 1 yields the single beta beta_start.
    """
    if kind != "linear":
        raise ScheduleError(f"unsupported schedule kind {kind!r}")
    if not isinstance(T, int) or T < 1:
        raise ScheduleError(f"step count T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return VarianceSchedule(np.linspace(beta_start, beta_end, T))
