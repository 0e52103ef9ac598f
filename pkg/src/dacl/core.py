"""Phase 2: timestep-conditioned encoder trained on diffused triplet views.

Each step samples anchors uniformly over the training latents, reuses the
anchor latent as the positive, picks a negative from another class, diffuses
all three independently and applies the squared-distance triplet hinge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diffusion import NoiseSchedule, TimestepRange, forward_diffuse, sample_timestep
from .errors import ConfigError, DataError, ShapeError
from .numkit import AdamState, ForwardCache, Mlp, Rng, adam_step, backward, forward, init_mlp

# (z0 batch, rng) -> (views, timesteps)
ViewFn = Callable[[np.ndarray, Rng], tuple[np.ndarray, np.ndarray]]


@dataclass
class EncoderConfig:
    temb_dim: int = 64
    hidden: tuple[int, ...] = (256, 256)
    embed_dim: int = 128
    normalize: bool = False


@dataclass
class ContrastiveConfig:
    epochs: int = 200
    lr: float = 1e-4
    batch_size: int = 64
    margin: float = 1.0
    balanced: bool = False

    def validate(self):
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        return self


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal code: interleaved (sin(t/w_k), cos(t/w_k)), w_k geometric from 1 to 1e4."""
    if dim < 2 or dim % 2:
        raise ConfigError(f"timestep embedding dimension must be even and positive, got {dim}")
    half = dim // 2
    if half == 1:
        omega = np.ones(1)
    else:
        omega = 10_000.0 ** (np.arange(half) / (half - 1))
    t_arr = np.asarray(t, dtype=np.float64)
    phase = t_arr.reshape(-1, 1) / omega
    out = np.empty((phase.shape[0], dim))
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out[0] if t_arr.ndim == 0 else out


@dataclass
class EncoderParams:
    trunk: Mlp          # (latent ++ temb) -> embedding
    latent_dim: int
    temb_dim: int
    normalize: bool = False

    def __post_init__(self):
        if self.trunk.in_dim != self.latent_dim + self.temb_dim:
            raise ShapeError(f"encoder input {self.trunk.in_dim} != latent {self.latent_dim} + temb {self.temb_dim}")

    @property
    def embed_dim(self) -> int:
        return self.trunk.out_dim

    def embed(self, z0: np.ndarray) -> np.ndarray:
        """Inference readout: clean latent at t=1."""
        return encode(self, z0, 1)

    def to_dict(self) -> dict:
        return {"trunk": self.trunk.to_dict(), "latent_dim": self.latent_dim,
                "temb_dim": self.temb_dim, "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderParams":
        return cls(Mlp.from_dict(d["trunk"]), int(d["latent_dim"]), int(d["temb_dim"]), bool(d["normalize"]))


def init_encoder(latent_dim: int, config: EncoderConfig, rng: Rng, name: str = "dacl_encoder") -> EncoderParams:
    sizes = [latent_dim + config.temb_dim, *config.hidden, config.embed_dim]
    return EncoderParams(init_mlp(sizes, rng, name=name), latent_dim, config.temb_dim, config.normalize)


def conditioned_input(z_t: np.ndarray, t, latent_dim: int, temb_dim: int) -> np.ndarray:
    z = np.asarray(z_t, dtype=np.float64)
    batch = z if z.ndim == 2 else z[None, :]
    if batch.shape[1] != latent_dim:
        raise ShapeError(f"expected latent width {latent_dim}, got {batch.shape[1]}")
    t_arr = np.broadcast_to(np.asarray(t), (batch.shape[0],))
    return np.hstack([batch, timestep_embedding(t_arr, temb_dim)])


@dataclass
class EncoderCache:
    x: np.ndarray
    mlp: ForwardCache
    raw: np.ndarray


def encode(params: EncoderParams, z_t: np.ndarray, t, return_cache: bool = False):
    x = conditioned_input(z_t, t, params.latent_dim, params.temb_dim)
    raw, cache = forward(params.trunk, x, return_cache=True)
    e = raw / np.linalg.norm(raw, axis=1, keepdims=True) if params.normalize else raw
    if np.ndim(z_t) == 1:
        e = e[0]
    if return_cache:
        return e, EncoderCache(x, cache, raw)
    return e


def encoder_backward(params: EncoderParams, cache: EncoderCache, grad_e: np.ndarray):
    g = np.atleast_2d(grad_e)
    if params.normalize:
        norm = np.linalg.norm(cache.raw, axis=1, keepdims=True)
        u = cache.raw / norm
        g = (g - u * np.sum(g * u, axis=1, keepdims=True)) / norm
    grads, dx = backward(params.trunk, cache.x, g, cache=cache.mlp)
    return grads, dx[:, : params.latent_dim]


def triplet_hinge(eA, eP, eN, margin: float) -> np.ndarray:
    eA, eP, eN = (np.atleast_2d(np.asarray(e, dtype=np.float64)) for e in (eA, eP, eN))
    if not (eA.shape == eP.shape == eN.shape):
        raise ShapeError(f"triplet embeddings disagree: {eA.shape}, {eP.shape}, {eN.shape}")
    d_pos = np.sum((eA - eP) ** 2, axis=1)
    d_neg = np.sum((eA - eN) ** 2, axis=1)
    return d_pos - d_neg + margin


def triplet_loss(eA, eP, eN, margin: float) -> float:
    """Mean of max(0, |eA-eP|^2 - |eA-eN|^2 + m) over rows."""
    return float(np.mean(np.maximum(0.0, triplet_hinge(eA, eP, eN, margin))))


def triplet_loss_grads(eA, eP, eN, margin: float):
    """Loss plus gradients w.r.t. each embedding; the subgradient at the kink is 0."""
    arg = triplet_hinge(eA, eP, eN, margin)
    n = arg.shape[0]
    active = (arg > 0.0).astype(np.float64)[:, None] / n
    gA = 2.0 * (eN - eP) * active
    gP = -2.0 * (eA - eP) * active
    gN = 2.0 * (eA - eN) * active
    return float(np.mean(np.maximum(0.0, arg))), gA, gP, gN


@dataclass
class Triplet:
    z0_anchor: np.ndarray
    z0_positive: np.ndarray
    z0_negative: np.ndarray
    label_anchor: np.ndarray
    label_negative: np.ndarray
    anchor_index: np.ndarray
    negative_index: np.ndarray


class LatentPools:
    """Per-class index pools over a latent matrix."""

    def __init__(self, latents: np.ndarray, labels: np.ndarray):
        self.latents = np.asarray(latents, dtype=np.float64)
        self.labels = np.asarray(labels)
        if self.latents.ndim != 2 or self.latents.shape[0] != self.labels.shape[0]:
            raise ShapeError("latents and labels must have matching rows")
        self.classes = np.unique(self.labels)
        if len(self.classes) < 2:
            raise DataError("triplet sampling needs at least two classes")
        self.members = {c: np.flatnonzero(self.labels == c) for c in self.classes}
        self.others = {c: np.flatnonzero(self.labels != c) for c in self.classes}

    def __len__(self):
        return self.latents.shape[0]


def sample_triplets(pools: LatentPools, rng: Rng, n: int, balanced: bool = False) -> Triplet:
    if balanced:
        cls_idx = rng.integers(0, len(pools.classes) - 1, size=n)
        u = rng.uniform(n)
        anchor = np.empty(n, dtype=np.int64)
        for k, c in enumerate(pools.classes):
            rows = cls_idx == k
            m = pools.members[c]
            anchor[rows] = m[np.minimum((u[rows] * len(m)).astype(np.int64), len(m) - 1)]
    else:
        anchor = rng.integers(0, len(pools) - 1, size=n)
    u = rng.uniform(n)
    negative = np.empty(n, dtype=np.int64)
    a_lab = pools.labels[anchor]
    for c in pools.classes:
        rows = a_lab == c
        o = pools.others[c]
        negative[rows] = o[np.minimum((u[rows] * len(o)).astype(np.int64), len(o) - 1)]
    zA = pools.latents[anchor]
    return Triplet(zA, zA.copy(), pools.latents[negative], a_lab, pools.labels[negative], anchor, negative)


def sample_triplet(pools: LatentPools, rng: Rng, balanced: bool = False) -> Triplet:
    b = sample_triplets(pools, rng, 1, balanced)
    return Triplet(b.z0_anchor[0], b.z0_positive[0], b.z0_negative[0], b.label_anchor[0],
                   b.label_negative[0], b.anchor_index[0], b.negative_index[0])


def diffusion_views(schedule: NoiseSchedule, trange: TimestepRange) -> ViewFn:
    trange.validate(schedule.T)

    def make(z0: np.ndarray, rng: Rng):
        t = sample_timestep(rng, trange, size=z0.shape[0])
        return forward_diffuse(z0, t, schedule, rng).z_t, t

    return make


@dataclass
class ContrastiveHistory:
    loss: list[float] = field(default_factory=list)
    # timesteps of anchor and positive views in the final epoch
    last_t_anchor: np.ndarray | None = None
    last_t_positive: np.ndarray | None = None


def contrastive_step(params: EncoderParams, trip: Triplet, views: ViewFn, rng: Rng, margin: float):
    """Loss and parameter gradients for one triplet batch.

    All view noise is drawn before the shared encoder runs on the stacked batch.
    """
    zA, tA = views(trip.z0_anchor, rng)
    zP, tP = views(trip.z0_positive, rng)
    zN, tN = views(trip.z0_negative, rng)
    n = zA.shape[0]
    e, cache = encode(params, np.vstack([zA, zP, zN]), np.concatenate([tA, tP, tN]), return_cache=True)
    loss, gA, gP, gN = triplet_loss_grads(e[:n], e[n:2 * n], e[2 * n:], margin)
    grads, _ = encoder_backward(params, cache, np.vstack([gA, gP, gN]))
    return loss, grads, tA, tP


def train_contrastive(latents: np.ndarray, labels: np.ndarray, views: ViewFn, enc_config: EncoderConfig,
                      config: ContrastiveConfig, seed: int, name: str = "dacl_encoder"):
    """Shared triplet training loop; the view function is the only method-specific part."""
    config.validate()
    pools = LatentPools(latents, labels)
    params = init_encoder(pools.latents.shape[1], enc_config, Rng(seed, stream=20), name=name)
    rng = Rng(seed, stream=21)
    state = AdamState(lr=config.lr)
    history = ContrastiveHistory()
    steps = math.ceil(len(pools) / config.batch_size)
    for _ in range(config.epochs):
        total = 0.0
        t_a, t_p = [], []
        for _ in range(steps):
            trip = sample_triplets(pools, rng, config.batch_size, config.balanced)
            loss, grads, tA, tP = contrastive_step(params, trip, views, rng, config.margin)
            adam_step(params.trunk, grads, state)
            total += loss
            t_a.append(tA)
            t_p.append(tP)
        history.loss.append(total / steps)
        history.last_t_anchor = np.concatenate(t_a)
        history.last_t_positive = np.concatenate(t_p)
    return params, history


def train_dacl(latents: np.ndarray, labels: np.ndarray, schedule: NoiseSchedule, trange: TimestepRange,
               config: ContrastiveConfig, seed: int, enc_config: EncoderConfig | None = None):
    return train_contrastive(latents, labels, diffusion_views(schedule, trange),
                             enc_config or EncoderConfig(), config, seed)


def view_distances(params: EncoderParams, z0: np.ndarray, negatives: np.ndarray, views: ViewFn, rng: Rng):
    """Mean embedding distance between two independent views of each latent,
    and between a view of each latent and a view of its paired negative."""
    zA, tA = views(z0, rng)
    zP, tP = views(z0, rng)
    zN, tN = views(negatives, rng)
    eA, eP, eN = encode(params, zA, tA), encode(params, zP, tP), encode(params, zN, tN)
    pos = float(np.mean(np.linalg.norm(eA - eP, axis=1)))
    neg = float(np.mean(np.linalg.norm(eA - eN, axis=1)))
    return pos, neg
