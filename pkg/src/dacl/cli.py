"""``dacl`` command line: gen-synthetic, train, eval, ablate.

Exit codes: 0 success, 2 config/validation, 3 data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint as ckpt
from .config import apply_override, from_dict, load_config, parse_override, to_dict
from .datasets import SyntheticSpec, generate_synthetic, write_features
from .diffusion import ABLATION_RANGES, TimestepRange
from .errors import ConfigError, DaclError
from .pipeline import eval_run, run_ablation, train_run

log = logging.getLogger("dacl")


def _overrides(args) -> dict:
    out = dict(parse_override(s) for s in (args.set or []))
    for flag, key in (("seed", "seed"), ("method", "method"), ("data", "data.path"), ("epochs", "train.epochs"),
                      ("out", "output_dir"), ("protocol", "protocol")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    if getattr(args, "t_range", None):
        lo, hi = parse_range(args.t_range)
        out["train.t_lo"], out["train.t_hi"] = lo, hi
    return out


def parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split("-"))
    except ValueError:
        raise ConfigError(f"timestep range must look like LO-HI, got {text!r}") from None
    return lo, hi


def parse_ranges(text: str | None) -> list[TimestepRange]:
    """``Early:1-16,Mid:17-33`` (labels optional)."""
    if not text:
        return list(ABLATION_RANGES)
    ranges = []
    for item in text.split(","):
        label, _, span = item.rpartition(":")
        lo, hi = parse_range(span)
        ranges.append(TimestepRange(lo, hi, label))
    return ranges


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="feature CSV (synthetic data when omitted)")
    p.add_argument("--out", help="output directory")


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec()
    if args.config:
        data = json.loads(args.config.read_text())
        unknown = set(data) - set(to_dict(spec))
        if unknown:
            raise ConfigError(f"unknown synthetic field(s): {', '.join(sorted(unknown))}")
        spec = SyntheticSpec(**{**to_dict(spec), **data})
    for item in args.set or []:
        k, v = parse_override(item)
        if k not in to_dict(spec):
            raise ConfigError(f"unknown synthetic field {k!r}")
        setattr(spec, k, v)
    if args.seed is not None:
        spec.seed = args.seed
    records = generate_synthetic(spec.validate())
    args.out_path.parent.mkdir(parents=True, exist_ok=True)
    write_features(records, args.out_path)
    log.info("wrote %d records to %s", len(records), args.out_path)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    log.info("effective config: %s", json.dumps(to_dict(cfg), sort_keys=True))
    out = train_run(cfg, Path(cfg.output_dir), args.vae_checkpoint)
    log.info("checkpoints written to %s", out)
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.checkpoint)
    _, meta = ckpt.load_model(run_dir / ckpt.MODEL_FILE)
    data = meta["config"]
    data["output_dir"] = str(args.out or run_dir)
    if args.data is not None:
        apply_override(data, "data.path", args.data)
    cfg = from_dict(data).resolved()
    report = eval_run(run_dir, cfg, args.protocol, Path(cfg.output_dir))
    for name, res in report.results.items():
        print(f"{report.method} {name}: patient AUROC {res.auroc:.4f} (record AUROC {res.record_auroc:.4f})")
    return 0


def cmd_ablate(args) -> int:
    base: dict = json.loads(args.config.read_text()) if args.config else {}
    for k, v in _overrides(args).items():
        apply_override(base, k, v)
    from_dict(base).resolved()  # validate before any work
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [base.get("seed", 0)]
    out = Path(args.out or base.get("output_dir", "runs/ablation"))
    _, summary = run_ablation(base, parse_ranges(args.ranges), seeds, out, jobs=args.jobs)
    for row in summary:
        print(f"{row['range_label']:>8} [{row['lo']:>2}-{row['hi']:>2}]  prototype {row['auroc_prototype']:.4f}"
              f"  probe {row['auroc_probe']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dacl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a two-cluster synthetic feature CSV")
    p.add_argument("out_path", type=Path)
    p.add_argument("--config", type=Path, help="JSON object with synthetic spec fields")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="phase 1 VAE + phase 2 method training")
    _add_config_flags(p)
    p.add_argument("--method", choices=["dacl", "gauss-contrastive", "dae"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--t-range", help="training timestep range LO-HI")
    p.add_argument("--vae-checkpoint", type=Path, help="reuse a phase 1 checkpoint with a matching hash")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score the test split of a trained run")
    p.add_argument("checkpoint", help="run directory produced by `train`")
    p.add_argument("--protocol", choices=["prototype", "probe", "both"], default="both")
    p.add_argument("--data", help="feature CSV overriding the one recorded in the checkpoint")
    p.add_argument("--out", help="report directory (default: the run directory)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="one DACL encoder per timestep range")
    _add_config_flags(p)
    p.add_argument("--ranges", help="e.g. Early:1-16,Mid:17-33,Late:34-50 (default)")
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2,3,4")
    p.add_argument("--epochs", type=int)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (one per seed)")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except DaclError as exc:
        print(f"dacl {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
