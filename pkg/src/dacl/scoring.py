"""Prototype-distance anomaly scores, linear probe, patient aggregation and ROC/AUROC."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import DataError, NumericError
from .numkit import AdamState, Mlp, Rng, adam_step, backward, forward, init_mlp


class Embedder(Protocol):
    def embed(self, z0: np.ndarray) -> np.ndarray: ...


@dataclass
class Prototype:
    mu_normal: np.ndarray
    count: int
    source: str = ""


def compute_prototype(model: Embedder, normal_latents: np.ndarray, source: str = "") -> Prototype:
    z = np.atleast_2d(np.asarray(normal_latents, dtype=np.float64))
    if z.shape[0] == 0 or z.size == 0:
        raise DataError("prototype needs at least one normal training latent")
    e = np.atleast_2d(model.embed(z))
    return Prototype(e.mean(axis=0), e.shape[0], source)


def anomaly_score(model: Embedder, prototype: Prototype, z0: np.ndarray):
    """Euclidean distance of the t=1 embedding of ``z0`` to the normal prototype."""
    e = model.embed(z0)
    d = np.linalg.norm(np.atleast_2d(e) - prototype.mu_normal, axis=1)
    return float(d[0]) if np.ndim(z0) == 1 else d


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise NumericError("non-finite anomaly score")
    if y.all() or not y.any():
        raise DataError("AUROC needs both normal and anomaly samples")
    return s, y


def auroc(scores, labels) -> float:
    """P(anomaly score > normal score) with ties counted 1/2; ``labels`` are 1 for anomaly."""
    s, y = _check_binary(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) at every distinct threshold, from (0, 0) to (1, 1)."""
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last_of_run]
    fp = np.cumsum(~y)[last_of_run]
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (~y).sum()]
    return fpr, tpr


def trapezoid_area(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass
class ScoredRecord:
    record_id: str
    patient_id: str
    label: int
    score: float


@dataclass
class PatientScore:
    patient_id: str
    label: int
    score: float
    n_records: int


def patient_aggregate(records: Sequence[ScoredRecord]) -> list[PatientScore]:
    """Mean record score per patient; a patient is anomalous if any record is."""
    groups: "OrderedDict[str, list[ScoredRecord]]" = OrderedDict()
    for r in records:
        groups.setdefault(r.patient_id, []).append(r)
    return [PatientScore(pid, int(any(r.label for r in rs)), float(np.mean([r.score for r in rs])), len(rs))
            for pid, rs in groups.items()]


@dataclass
class ProbeConfig:
    epochs: int = 100
    lr: float = 1e-2
    batch_size: int = 64


@dataclass
class ProbeParams:
    linear: Mlp
    mean: np.ndarray
    scale: np.ndarray

    def logits(self, emb: np.ndarray) -> np.ndarray:
        return forward(self.linear, (np.atleast_2d(emb) - self.mean) / self.scale)[:, 0]


def probe_loss_and_grads(probe: ProbeParams, xs: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy on standardized inputs ``xs``."""
    s, cache = forward(probe.linear, xs, return_cache=True)
    s = s[:, 0]
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
    g = ((expit(s) - y) / y.size)[:, None]
    grads, _ = backward(probe.linear, xs, g, cache=cache)
    return loss, grads


def train_linear_probe(embeddings: np.ndarray, labels, config: ProbeConfig, seed: int) -> ProbeParams:
    """Logistic regression on frozen embeddings, Adam over shuffled mini-batches."""
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size != x.shape[0]:
        raise DataError("probe: embeddings and labels differ in length")
    if y.min() == y.max():
        raise DataError("probe training set needs both classes")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale < 1e-12] = 1.0
    rng = Rng(seed, stream=30)
    probe = ProbeParams(init_mlp([x.shape[1], 1], rng, name="probe"), mean, scale)
    xs = (x - mean) / scale
    state = AdamState(lr=config.lr)
    n = x.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads = probe_loss_and_grads(probe, xs[idx], y[idx])
            adam_step(probe.linear, grads, state)
    return probe


@dataclass
class ProtocolResult:
    protocol: str
    auroc: float
    roc: list[tuple[float, float]]
    patient_scores: list[PatientScore]
    record_auroc: float


def evaluate_scores(protocol: str, records: Sequence[ScoredRecord]) -> ProtocolResult:
    patients = patient_aggregate(records)
    ps = [p.score for p in patients]
    pl = [p.label for p in patients]
    fpr, tpr = roc_curve(ps, pl)
    rec_auc = auroc([r.score for r in records], [r.label for r in records])
    return ProtocolResult(protocol, auroc(ps, pl), list(zip(fpr.tolist(), tpr.tolist())), patients, rec_auc)


@dataclass
class EvalReport:
    method: str
    seed: int
    config_hash: str
    results: dict[str, ProtocolResult] = field(default_factory=dict)

    def auroc(self, protocol: str) -> float:
        return self.results[protocol].auroc

    def to_dict(self) -> dict:
        out = {"method": self.method, "seed": self.seed, "config_hash": self.config_hash, "protocols": {}}
        for name, r in self.results.items():
            out["protocols"][name] = {
                "auroc": r.auroc,
                "record_auroc": r.record_auroc,
                "roc": [list(p) for p in r.roc],
                "patient_scores": [asdict(p) for p in r.patient_scores],
            }
        return out
