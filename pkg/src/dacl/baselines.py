"""Comparison methods: triplet training on Gaussian-jittered latents, and a denoising autoencoder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (ContrastiveConfig, EncoderConfig, ViewFn, conditioned_input, train_contrastive)
from .diffusion import NoiseSchedule, TimestepRange, forward_diffuse, sample_timestep
from .errors import ConfigError, DataError, NumericError, ShapeError
from .numkit import AdamState, Mlp, Rng, adam_step, backward, forward, gaussian_sample, init_mlp


@dataclass
class GaussianAugConfig:
    sigma: float = 0.1  # multiple of the per-dimension latent std

    def validate(self):
        if not self.sigma > 0:
            raise ConfigError(f"gaussian sigma must be > 0, got {self.sigma}")
        return self


def gaussian_views(noise_scale: np.ndarray) -> ViewFn:
    """z0 + noise_scale * eps, always presented to the encoder at t=1."""
    noise_scale = np.asarray(noise_scale, dtype=np.float64)

    def make(z0: np.ndarray, rng: Rng):
        eps = gaussian_sample(rng, *z0.shape)
        return z0 + noise_scale * eps, np.ones(z0.shape[0], dtype=np.int64)

    return make


def train_contrastive_gaussian(latents: np.ndarray, labels: np.ndarray, aug: GaussianAugConfig,
                               config: ContrastiveConfig, seed: int, enc_config: EncoderConfig | None = None):
    aug.validate()
    scale = aug.sigma * np.asarray(latents, dtype=np.float64).std(axis=0)
    return train_contrastive(latents, labels, gaussian_views(scale), enc_config or EncoderConfig(),
                             config, seed)


@dataclass
class DaeConfig:
    epochs: int = 200
    lr: float = 1e-4
    batch_size: int = 64
    temb_dim: int = 64
    hidden: tuple[int, ...] = (256, 256)


@dataclass
class DaeParams:
    net: Mlp  # (latent ++ temb) -> latent
    latent_dim: int
    temb_dim: int

    def __post_init__(self):
        if self.net.in_dim != self.latent_dim + self.temb_dim or self.net.out_dim != self.latent_dim:
            raise ShapeError("DAE must map latent (+ timestep code) back to latent width")

    def reconstruct(self, z_t: np.ndarray, t, return_cache: bool = False):
        x = conditioned_input(z_t, t, self.latent_dim, self.temb_dim)
        out, cache = forward(self.net, x, return_cache=True)
        if return_cache:
            return out, (x, cache)
        return out[0] if np.ndim(z_t) == 1 else out

    def embed(self, z0: np.ndarray) -> np.ndarray:
        """Representation: last hidden layer activations for the clean latent at t=1."""
        _, (_, cache) = self.reconstruct(np.atleast_2d(z0), 1, return_cache=True)
        h = cache.last_hidden
        return h[0] if np.ndim(z0) == 1 else h

    @property
    def embed_dim(self) -> int:
        return self.net.sizes[-2]

    def to_dict(self) -> dict:
        return {"net": self.net.to_dict(), "latent_dim": self.latent_dim, "temb_dim": self.temb_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "DaeParams":
        return cls(Mlp.from_dict(d["net"]), int(d["latent_dim"]), int(d["temb_dim"]))


def init_dae(latent_dim: int, config: DaeConfig, rng: Rng) -> DaeParams:
    sizes = [latent_dim + config.temb_dim, *config.hidden, latent_dim]
    return DaeParams(init_mlp(sizes, rng, name="dae"), latent_dim, config.temb_dim)


def dae_loss_and_grads(params: DaeParams, z_t: np.ndarray, t: np.ndarray, z0: np.ndarray):
    out, (x, cache) = params.reconstruct(z_t, t, return_cache=True)
    resid = out - z0
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise NumericError("DAE loss is not finite")
    grads, _ = backward(params.net, x, 2.0 * resid / resid.size, cache=cache)
    return loss, grads


@dataclass
class DaeHistory:
    loss: list[float] = field(default_factory=list)


def train_dae(latents: np.ndarray, schedule: NoiseSchedule, config: DaeConfig, seed: int,
              trange: TimestepRange | None = None) -> tuple[DaeParams, DaeHistory]:
    """Regress the clean latent from its diffused view over shuffled mini-batches."""
    z = np.asarray(latents, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise DataError("train_dae needs a non-empty latent matrix")
    trange = (trange or TimestepRange(1, schedule.T)).validate(schedule.T)
    params = init_dae(z.shape[1], config, Rng(seed, stream=20))
    rng = Rng(seed, stream=21)
    state = AdamState(lr=config.lr)
    history = DaeHistory()
    n = z.shape[0]
    steps = math.ceil(n / config.batch_size)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            z0 = z[order[start:start + config.batch_size]]
            t = sample_timestep(rng, trange, size=z0.shape[0])
            z_t = forward_diffuse(z0, t, schedule, rng).z_t
            loss, grads = dae_loss_and_grads(params, z_t, t, z0)
            adam_step(params.net, grads, state)
            total += loss
        history.loss.append(total / steps)
    return params, history


def dae_reconstruction_loss(params: DaeParams, latents: np.ndarray, schedule: NoiseSchedule, rng: Rng) -> float:
    z0 = np.asarray(latents, dtype=np.float64)
    t = sample_timestep(rng, TimestepRange(1, schedule.T), size=z0.shape[0])
    z_t = forward_diffuse(z0, t, schedule, rng).z_t
    return float(np.mean((params.reconstruct(z_t, t) - z0) ** 2))
