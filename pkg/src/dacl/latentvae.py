"""Phase 1: a small Gaussian VAE whose posterior mean serves as the clean latent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError, ShapeError
from .numkit import AdamState, Mlp, Rng, adam_step, backward, forward, gaussian_sample, init_mlp


@dataclass
class VaeConfig:
    hidden: tuple[int, ...] = (128, 64)
    latent_dim: int = 32
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 64
    kl_weight: float = 1e-3


@dataclass
class VaeParams:
    encoder: Mlp                 # features -> (mu, logvar)
    decoder: Mlp                 # latent -> features
    latent_dim: int
    mean: np.ndarray             # input standardization
    scale: np.ndarray

    def __post_init__(self):
        if self.encoder.out_dim != 2 * self.latent_dim:
            raise ShapeError(f"encoder width {self.encoder.out_dim} != 2 * latent_dim {self.latent_dim}")
        if self.decoder.in_dim != self.latent_dim:
            raise ShapeError(f"decoder input {self.decoder.in_dim} != latent_dim {self.latent_dim}")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ShapeError("decoder output width must equal the feature dimension")

    @property
    def feature_dim(self) -> int:
        return self.encoder.in_dim

    def standardize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.feature_dim:
            raise ShapeError(f"expected {self.feature_dim} features, got {x.shape[-1]}")
        return (x - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "encoder": self.encoder.to_dict(),
            "decoder": self.decoder.to_dict(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VaeParams":
        return cls(Mlp.from_dict(d["encoder"]), Mlp.from_dict(d["decoder"]), int(d["latent_dim"]),
                   np.array(d["mean"], dtype=np.float64), np.array(d["scale"], dtype=np.float64))


@dataclass
class VaeLossBreakdown:
    reconstruction: float
    kl: float
    total: float
    kl_weight: float


@dataclass
class VaeHistory:
    total: list[float] = field(default_factory=list)
    reconstruction: list[float] = field(default_factory=list)
    kl: list[float] = field(default_factory=list)


def fit_standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale < 1e-12] = 1.0  # constant columns pass through centred
    return mean, scale


def init_vae(feature_dim: int, config: VaeConfig, rng: Rng,
             mean: np.ndarray | None = None, scale: np.ndarray | None = None) -> VaeParams:
    h = list(config.hidden)
    L = config.latent_dim
    enc = init_mlp([feature_dim, *h, 2 * L], rng, name="vae_encoder")
    dec = init_mlp([L, *reversed(h), feature_dim], rng, name="vae_decoder")
    if mean is None:
        mean = np.zeros(feature_dim)
    if scale is None:
        scale = np.ones(feature_dim)
    return VaeParams(enc, dec, L, mean, scale)


def vae_encode_mean(params: VaeParams, x: np.ndarray) -> np.ndarray:
    """Posterior mean for raw features ``x`` (vector or row batch); no sampling."""
    x = np.asarray(x, dtype=np.float64)
    out = forward(params.encoder, params.standardize(x))
    mu = out[:, : params.latent_dim]
    return mu[0] if x.ndim == 1 else mu


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Batch-mean KL(N(mu, exp(logvar)) || N(0, I))."""
    per_row = -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)
    return float(per_row.mean())


def _loss_and_grads(params: VaeParams, xs: np.ndarray, eps: np.ndarray, kl_weight: float,
                    need_grads: bool = True):
    L = params.latent_dim
    n, d = xs.shape
    out, enc_cache = forward(params.encoder, xs, return_cache=True)
    mu, logvar = out[:, :L], out[:, L:]
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    xhat, dec_cache = forward(params.decoder, z, return_cache=True)
    resid = xhat - xs
    rec = float(np.mean(resid * resid))
    kl = kl_divergence(mu, logvar)
    total = rec + kl_weight * kl
    if not np.isfinite(total):
        raise NumericError("VAE loss is not finite")
    breakdown = VaeLossBreakdown(rec, kl, total, kl_weight)
    if not need_grads:
        return breakdown, None
    g_dec, dz = backward(params.decoder, z, 2.0 * resid / (n * d), cache=dec_cache)
    dmu = dz + kl_weight * mu / n
    dlogvar = dz * eps * 0.5 * std - kl_weight * 0.5 * (1.0 - np.exp(logvar)) / n
    g_enc, _ = backward(params.encoder, xs, np.hstack([dmu, dlogvar]), cache=enc_cache)
    return breakdown, (g_enc, g_dec)


def vae_loss(params: VaeParams, batch: np.ndarray, rng: Rng | None, kl_weight: float,
             epsilon: np.ndarray | None = None) -> VaeLossBreakdown:
    """ELBO terms on an already-standardized ``batch``.

    Reconstruction is the element-mean squared error of the decoded
    reparameterized sample; KL is the batch mean of the per-row divergence.
    """
    xs = np.asarray(batch, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise ShapeError("vae_loss needs a non-empty row batch")
    if epsilon is None:
        epsilon = gaussian_sample(rng, xs.shape[0], params.latent_dim)
    return _loss_and_grads(params, xs, epsilon, kl_weight, need_grads=False)[0]


def vae_loss_and_grads(params: VaeParams, batch: np.ndarray, epsilon: np.ndarray, kl_weight: float):
    return _loss_and_grads(params, np.asarray(batch, dtype=np.float64), epsilon, kl_weight)


def train_vae(features: np.ndarray, config: VaeConfig, seed: int) -> tuple[VaeParams, VaeHistory]:
    """Fit the VAE with Adam over shuffled mini-batches of all training features."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("train_vae needs at least 2 feature rows")
    if not np.all(np.isfinite(x)):
        raise DataError("train_vae: features contain non-finite values")
    rng = Rng(seed, stream=10)
    mean, scale = fit_standardizer(x)
    params = init_vae(x.shape[1], config, rng, mean, scale)
    xs = params.standardize(x)
    state = AdamState(lr=config.lr)
    history = VaeHistory()
    n = xs.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        tot = rec = kl = 0.0
        steps = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            eps = gaussian_sample(rng, len(idx), config.latent_dim)
            b, grads = vae_loss_and_grads(params, xs[idx], eps, config.kl_weight)
            adam_step([params.encoder, params.decoder], list(grads), state)
            tot += b.total
            rec += b.reconstruction
            kl += b.kl
            steps += 1
        history.total.append(tot / steps)
        history.reconstruction.append(rec / steps)
        history.kl.append(kl / steps)
    return params, history
