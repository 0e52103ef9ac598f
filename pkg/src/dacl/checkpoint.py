"""Versioned JSON checkpoints.

Floats are written with Python's shortest round-trip repr, so a load
reproduces every float64 bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

from .baselines import DaeParams
from .core import EncoderParams
from .datasets import SplitManifest
from .errors import ConfigError, DataError
from .latentvae import VaeParams

FORMAT_VERSION = 1
VAE_FILE = "vae.ckpt.json"
MODEL_FILE = "model.ckpt.json"


def _dump(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, allow_nan=False) + "\n")


def _load(path: Path, kind: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from None
    if payload.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint format {payload.get('format_version')!r}")
    if payload.get("kind") != kind:
        raise ConfigError(f"{path}: expected a {kind} checkpoint, found {payload.get('kind')!r}")
    return payload


def save_vae(path, vae: VaeParams, manifest: SplitManifest, phase1_hash: str, seed: int) -> None:
    _dump({"format_version": FORMAT_VERSION, "kind": "vae", "phase1_hash": phase1_hash, "seed": seed,
           "vae": vae.to_dict(), "split": manifest.to_dict()}, Path(path))


def load_vae(path) -> tuple[VaeParams, SplitManifest, dict]:
    p = _load(Path(path), "vae")
    return VaeParams.from_dict(p["vae"]), SplitManifest.from_dict(p["split"]), p


def save_model(path, method: str, model, *, phase1_hash: str, config_hash: str, seed: int,
               schedule: dict, timestep_range: tuple[int, int], margin: float, config: dict) -> None:
    _dump({"format_version": FORMAT_VERSION, "kind": "model", "method": method, "phase1_hash": phase1_hash,
           "config_hash": config_hash, "seed": seed, "schedule": schedule,
           "timestep_range": list(timestep_range), "margin": margin, "params": model.to_dict(),
           "config": config}, Path(path))


def load_model(path):
    p = _load(Path(path), "model")
    if p["method"] == "dae":
        model = DaeParams.from_dict(p["params"])
    else:
        model = EncoderParams.from_dict(p["params"])
    return model, p


def load_pair(run_dir):
    """Load the VAE and method checkpoints of one run, refusing mismatched pairs."""
    run_dir = Path(run_dir)
    vae, manifest, vmeta = load_vae(run_dir / VAE_FILE)
    model, mmeta = load_model(run_dir / MODEL_FILE)
    if vmeta["phase1_hash"] != mmeta["phase1_hash"]:
        raise ConfigError(f"{run_dir}: phase 1 hash mismatch: model was trained on VAE {mmeta['phase1_hash']}, "
                          f"but the VAE checkpoint is {vmeta['phase1_hash']}")
    return vae, manifest, model, mmeta
