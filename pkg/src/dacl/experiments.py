"""Seeded benchmark runs shared by the acceptance suite and the scripts in ``scripts/``."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, load_config
from .core import diffusion_views, init_encoder, view_distances
from .datasets import FeatureRecord
from .diffusion import ABLATION_RANGES, TimestepRange
from .numkit import Rng
from .pipeline import Phase1, evaluate, latents_for, load_records, run_phase1, run_phase2
from .scoring import EvalReport

METHODS = ("dacl", "gauss-contrastive", "dae")


@dataclass
class MethodRun:
    model: object
    losses: list[float]
    report: EvalReport
    seconds: float


@dataclass
class SeedBench:
    seed: int
    cfg: RunConfig
    records: list[FeatureRecord]
    phase1: Phase1
    overrides: dict = field(default_factory=dict)
    phase1_seconds: float = 0.0
    runs: dict[str, MethodRun] = field(default_factory=dict)
    ablation: dict[str, MethodRun] = field(default_factory=dict)

    def method_config(self, method: str, trange: TimestepRange | None = None) -> RunConfig:
        over = dict(self.overrides, method=method)
        if trange is not None:
            over["train.t_lo"], over["train.t_hi"] = trange.lo, trange.hi
        return load_config(None, over)


def prepare(seed: int, overrides: dict | None = None) -> SeedBench:
    over = dict(overrides or {}, seed=seed)
    cfg = load_config(None, over)
    records = load_records(cfg)
    start = time.perf_counter()
    p1 = run_phase1(cfg, records)
    return SeedBench(seed, cfg, records, p1, overrides=over, phase1_seconds=time.perf_counter() - start)


def _train_eval(bench: SeedBench, cfg: RunConfig, trange: TimestepRange | None = None) -> MethodRun:
    start = time.perf_counter()
    model, losses = run_phase2(cfg, bench.phase1, bench.records, trange)
    seconds = time.perf_counter() - start
    report, _, _ = evaluate(cfg, bench.phase1.vae, bench.phase1.manifest, model, bench.records, "both")
    return MethodRun(model, losses, report, seconds)


def run_methods(bench: SeedBench, methods=METHODS) -> SeedBench:
    for m in methods:
        if m not in bench.runs:
            bench.runs[m] = _train_eval(bench, bench.method_config(m))
    return bench


def run_ranges(bench: SeedBench, ranges=ABLATION_RANGES) -> SeedBench:
    for r in ranges:
        if r.name not in bench.ablation:
            bench.ablation[r.name] = _train_eval(bench, bench.method_config("dacl", r), r)
    return bench


def noise_invariance(bench: SeedBench, draw_stream: int = 40) -> dict[str, float]:
    """View distances on held-out latents for the initial and the trained DACL encoder.

    Both encoders see the same diffused views and the same negative pairing.
    """
    cfg = bench.cfg
    _, test = bench.phase1.manifest.select(bench.records)
    z, y = latents_for(bench.phase1.vae, test)
    pick = Rng(bench.seed, stream=draw_stream)
    neg_idx = np.empty(len(y), dtype=np.int64)
    for cls in (0, 1):
        others = np.flatnonzero(y != cls)
        mine = np.flatnonzero(y == cls)
        neg_idx[mine] = others[pick.integers(0, len(others) - 1, size=len(mine))]
    views = diffusion_views(cfg.make_schedule(), cfg.timestep_range())
    before = init_encoder(z.shape[1], cfg.encoder(), Rng(bench.seed, stream=20))
    after = bench.runs["dacl"].model
    pos0, neg0 = view_distances(before, z, z[neg_idx], views, Rng(bench.seed, stream=41))
    pos1, neg1 = view_distances(after, z, z[neg_idx], views, Rng(bench.seed, stream=41))
    return {"pos_before": pos0, "neg_before": neg0, "pos_after": pos1, "neg_after": neg1}
