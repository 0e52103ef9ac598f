"""Linear-beta noise schedule and the closed-form diffusion forward process.

Timesteps are 1-indexed: ``alpha_bar[t - 1]`` belongs to timestep ``t``.
The defaults (T=50, beta 1e-4 to 0.02) follow the DDPM convention; they are
conventions, not measured values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numkit import Rng, gaussian_sample

DEFAULT_T = 50
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray
    beta_min: float
    beta_max: float

    def sqrt_ab(self, t):
        return np.sqrt(self.alpha_bar[np.asarray(t) - 1])

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}


def make_schedule(T: int = DEFAULT_T, beta_min: float = DEFAULT_BETA_MIN,
                  beta_max: float = DEFAULT_BETA_MAX) -> NoiseSchedule:
    if int(T) != T or T < 1:
        raise ConfigError(f"schedule.T must be a positive integer, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigError(f"schedule needs 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    beta = np.linspace(beta_min, beta_max, int(T))
    alpha_bar = np.cumprod(1.0 - beta)
    beta.setflags(write=False)
    alpha_bar.setflags(write=False)
    return NoiseSchedule(int(T), beta, alpha_bar, float(beta_min), float(beta_max))


@dataclass(frozen=True)
class TimestepRange:
    lo: int
    hi: int
    label: str = ""

    def validate(self, T: int) -> "TimestepRange":
        if not (1 <= self.lo <= self.hi <= T):
            raise ConfigError(f"timestep range [{self.lo}, {self.hi}] must satisfy 1 <= lo <= hi <= {T}")
        return self

    @property
    def name(self) -> str:
        return self.label or f"{self.lo}-{self.hi}"


# Early / Mid / Late partition of a 50-step chain used by the ablation
ABLATION_RANGES = (
    TimestepRange(1, 16, "Early"),
    TimestepRange(17, 33, "Mid"),
    TimestepRange(34, 50, "Late"),
)


@dataclass
class NoisyView:
    z_t: np.ndarray
    t: int | np.ndarray
    epsilon: np.ndarray


def sample_timestep(rng: Rng, trange: TimestepRange, size=None):
    return rng.integers(trange.lo, trange.hi, size=size)


def forward_diffuse(z0: np.ndarray, t, schedule: NoiseSchedule, rng: Rng | None = None,
                    epsilon: np.ndarray | None = None) -> NoisyView:
    """Draw ``z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps``.

    ``z0`` is a vector or a row batch; ``t`` is a scalar or one timestep per row.
    Pass ``epsilon`` to inject the noise instead of drawing it from ``rng``.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    batch = z0 if z0.ndim == 2 else z0[None, :]
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.int64), (batch.shape[0],))
    if t_arr.min() < 1 or t_arr.max() > schedule.T:
        raise ConfigError(f"timestep out of range [1, {schedule.T}]: {t_arr.min()}..{t_arr.max()}")
    if epsilon is None:
        if rng is None:
            raise ValueError("forward_diffuse needs either rng or epsilon")
        eps = gaussian_sample(rng, *batch.shape)
    else:
        eps = np.asarray(epsilon, dtype=np.float64).reshape(batch.shape)
    ab = schedule.alpha_bar[t_arr - 1][:, None]
    z_t = np.sqrt(ab) * batch + np.sqrt(1.0 - ab) * eps
    if z0.ndim == 1:
        return NoisyView(z_t[0], int(t_arr[0]), eps[0])
    return NoisyView(z_t, t_arr.copy(), eps)
