"""End-to-end orchestration shared by the CLI and the experiment scripts."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .baselines import train_contrastive_gaussian, train_dae
from .config import RunConfig, config_hash, phase1_hash, to_dict
from .core import train_dacl
from .datasets import FeatureRecord, SplitManifest, as_arrays, generate_synthetic, load_features, split_by_patient
from .diffusion import TimestepRange
from .errors import DaclError, DataError
from .latentvae import VaeParams, train_vae, vae_encode_mean
from .scoring import EvalReport, ScoredRecord, compute_prototype, anomaly_score, evaluate_scores, train_linear_probe

log = logging.getLogger("dacl")


@contextlib.contextmanager
def stage(name: str):
    """Prefix errors raised inside with the pipeline stage."""
    try:
        yield
    except DaclError as exc:
        if not str(exc).startswith("["):
            exc.args = (f"[{name}] {exc}",) + exc.args[1:]
        raise


def load_records(cfg: RunConfig) -> list[FeatureRecord]:
    with stage("datasets"):
        if cfg.data.path is not None:
            return load_features(cfg.data.path)
        return generate_synthetic(cfg.synthetic_spec())


@dataclass
class Phase1:
    vae: VaeParams
    manifest: SplitManifest
    history: list[float]
    hash: str


def run_phase1(cfg: RunConfig, records: list[FeatureRecord]) -> Phase1:
    with stage("datasets/split"):
        manifest = split_by_patient(records, cfg.split.fraction, cfg.split.seed)
        train, _ = manifest.select(records)
        x, _ = as_arrays(train)
    with stage("latentvae/train"):
        vae, hist = train_vae(x, cfg.vae, cfg.seed)
    log.info("phase 1: VAE loss %.4f -> %.4f", hist.total[0], hist.total[-1])
    return Phase1(vae, manifest, hist.total, phase1_hash(cfg))


def latents_for(vae: VaeParams, records: list[FeatureRecord]) -> tuple[np.ndarray, np.ndarray]:
    x, y = as_arrays(records)
    return vae_encode_mean(vae, x), y


def run_phase2(cfg: RunConfig, p1: Phase1, records: list[FeatureRecord], trange: TimestepRange | None = None):
    """Train the configured method on frozen VAE latents. Returns (model, loss history)."""
    if p1.hash != phase1_hash(cfg):
        raise DataError("refusing to train: VAE checkpoint does not match this run's phase 1 configuration")
    train, _ = p1.manifest.select(records)
    z, y = latents_for(p1.vae, train)
    schedule = cfg.make_schedule()
    trange = trange or cfg.timestep_range()
    with stage(f"{cfg.method}/train"):
        if cfg.method == "dacl":
            model, hist = train_dacl(z, y, schedule, trange, cfg.contrastive(), cfg.seed, cfg.encoder())
        elif cfg.method == "gauss-contrastive":
            model, hist = train_contrastive_gaussian(z, y, cfg.gaussian(), cfg.contrastive(), cfg.seed,
                                                     cfg.encoder())
        else:
            model, hist = train_dae(z, schedule, cfg.dae(), cfg.seed)
    log.info("phase 2 (%s): loss %.4g -> %.4g", cfg.method, hist.loss[0], hist.loss[-1])
    return model, hist.loss


def evaluate(cfg: RunConfig, vae: VaeParams, manifest: SplitManifest, model, records: list[FeatureRecord],
             protocol: str | None = None, chash: str | None = None):
    """Score the test split. Returns (EvalReport, test record ids, test embeddings)."""
    protocol = protocol or cfg.protocol
    with stage("scoring"):
        train, test = manifest.select(records)
        if not test:
            raise DataError("test split is empty")
        z_tr, y_tr = latents_for(vae, train)
        z_te, _ = latents_for(vae, test)
        report = EvalReport(cfg.method, cfg.seed, chash or config_hash(cfg))
        if protocol in ("prototype", "both"):
            proto = compute_prototype(model, z_tr[y_tr == 0], source=report.config_hash)
            scores = np.atleast_1d(anomaly_score(model, proto, z_te))
            report.results["prototype"] = evaluate_scores("prototype", _scored(test, scores))
        if protocol in ("probe", "both"):
            probe = train_linear_probe(model.embed(z_tr), y_tr, cfg.probe, cfg.seed)
            logits = probe.logits(model.embed(z_te))
            report.results["probe"] = evaluate_scores("probe", _scored(test, logits))
        emb = np.atleast_2d(model.embed(z_te))
    return report, [r.record_id for r in test], emb


def _scored(records, scores) -> list[ScoredRecord]:
    return [ScoredRecord(r.record_id, r.patient_id, r.label, float(s)) for r, s in zip(records, scores)]


# --- artifact writers -------------------------------------------------------

def write_history(path: Path, losses) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(losses, start=1):
            w.writerow([i, repr(float(v))])


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_roc(path: Path, roc) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for f, t in roc:
            w.writerow([repr(f), repr(t)])


def write_embeddings(path: Path, ids, emb: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", *(f"e{k}" for k in range(emb.shape[1]))])
        for rid, row in zip(ids, emb):
            w.writerow([rid, *(repr(float(v)) for v in row)])


def train_run(cfg: RunConfig, out_dir: Path, vae_checkpoint: Path | None = None) -> Path:
    """Phase 1 (or reuse of a matching VAE checkpoint), then phase 2, with all artifacts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_records(cfg)
    chash = config_hash(cfg)
    resolved = to_dict(cfg)
    resolved.pop("output_dir")
    if vae_checkpoint is not None:
        vae, manifest, meta = ckpt.load_vae(vae_checkpoint)
        if meta["phase1_hash"] != phase1_hash(cfg):
            raise DataError(f"VAE checkpoint {vae_checkpoint} was built with a different phase 1 configuration")
        p1 = Phase1(vae, manifest, [], meta["phase1_hash"])
    else:
        p1 = run_phase1(cfg, records)
        write_history(out_dir / "vae_history.csv", p1.history)
    ckpt.save_vae(out_dir / ckpt.VAE_FILE, p1.vae, p1.manifest, p1.hash, cfg.seed)
    model, losses = run_phase2(cfg, p1, records)
    trange = cfg.timestep_range()
    ckpt.save_model(out_dir / ckpt.MODEL_FILE, cfg.method, model, phase1_hash=p1.hash, config_hash=chash,
                    seed=cfg.seed, schedule=to_dict(cfg.schedule), timestep_range=(trange.lo, trange.hi),
                    margin=cfg.train.margin, config=resolved)
    write_history(out_dir / "history.csv", losses)
    write_json(out_dir / "resolved_config.json", {"config_hash": chash, "seed": cfg.seed, "config": resolved})
    return out_dir


def eval_run(run_dir: Path, cfg: RunConfig, protocol: str, out_dir: Path | None = None) -> EvalReport:
    out_dir = out_dir or run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    vae, manifest, model, meta = ckpt.load_pair(run_dir)
    records = load_records(cfg)
    report, ids, emb = evaluate(cfg, vae, manifest, model, records, protocol, chash=meta["config_hash"])
    write_json(out_dir / "report.json", report.to_dict())
    for name, res in report.results.items():
        write_roc(out_dir / f"roc_{name}.csv", res.roc)
    write_embeddings(out_dir / "embeddings.csv", ids, emb)
    return report


# --- timestep ablation ------------------------------------------------------

def _ablate_seed(base: dict, seed: int, ranges: list[TimestepRange], out_dir: str | None) -> list[dict]:
    from .config import apply_override, from_dict

    data = json.loads(json.dumps(base))
    apply_override(data, "seed", seed)
    apply_override(data, "method", "dacl")
    cfg = from_dict(data).resolved()
    records = load_records(cfg)
    p1 = run_phase1(cfg, records)
    rows = []
    for trange in ranges:
        trange.validate(cfg.schedule.T)
        apply_override(data, "train.t_lo", trange.lo)
        apply_override(data, "train.t_hi", trange.hi)
        rcfg = from_dict(data).resolved()
        model, losses = run_phase2(rcfg, p1, records, trange)
        report, _, _ = evaluate(rcfg, p1.vae, p1.manifest, model, records, "both")
        if out_dir is not None:
            d = Path(out_dir) / f"seed{seed}" / trange.name
            d.mkdir(parents=True, exist_ok=True)
            write_json(d / "report.json", report.to_dict())
            write_history(d / "history.csv", losses)
        rows.append({"range_label": trange.name, "lo": trange.lo, "hi": trange.hi, "seed": seed,
                     "auroc_prototype": report.auroc("prototype"), "auroc_probe": report.auroc("probe"),
                     "config_hash": report.config_hash})
    return rows


def run_ablation(base: dict, ranges: list[TimestepRange], seeds: list[int], out_dir: Path | None = None,
                 jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Train one DACL encoder per (seed, range). Returns (per-run rows, per-range mean rows)."""
    from .errors import ConfigError

    if len(ranges) < 2:
        raise ConfigError("ablation needs at least two timestep ranges")
    names = [r.name for r in ranges]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate ablation range labels: {names}")
    if not seeds:
        raise ConfigError("ablation needs at least one seed")
    out = str(out_dir) if out_dir is not None else None
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_ablate_seed, [base] * len(seeds), seeds, [ranges] * len(seeds),
                                     [out] * len(seeds)))
    else:
        per_seed = [_ablate_seed(base, s, ranges, out) for s in seeds]
    runs = [row for rows in per_seed for row in rows]
    summary = []
    for r in ranges:
        sel = [row for row in runs if row["range_label"] == r.name]
        summary.append({"range_label": r.name, "lo": r.lo, "hi": r.hi,
                        "auroc_prototype": float(np.mean([s["auroc_prototype"] for s in sel])),
                        "auroc_probe": float(np.mean([s["auroc_probe"] for s in sel]))})
    if out_dir is not None:
        write_table(Path(out_dir) / "ablation_summary.csv", summary,
                    ["range_label", "lo", "hi", "auroc_prototype", "auroc_probe"])
        write_table(Path(out_dir) / "ablation_runs.csv", runs,
                    ["range_label", "lo", "hi", "seed", "auroc_prototype", "auroc_probe", "config_hash"])
    return runs, summary


def write_table(path: Path, rows: list[dict], columns: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
