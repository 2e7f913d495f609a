"""Occlusion benchmark toolkit: dataset synthesis, 2D/3D metrics and a toy denoiser.

Exit codes: 0 success, 1 input/format error, 2 empty result, 3 partial failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import EmptyResultError, OccbenchError, __version__
from .benchmark import (
    LEVEL_EDGES, build_benchmark_manifest, canonical_poses, classify_level, level_histogram, random_poses,
)
from .diffusion import train_toy
from .evaluate import CSV_COLUMNS_2D, CSV_COLUMNS_3D, Eval3dConfig, eval2d, eval3d, load_feature_source
from .mesh_metrics import DEFAULT_RESOLUTION, DEFAULT_SAMPLES, DEFAULT_TAU
from .occlusion import FilterPolicy, build_pairs, read_source_dir

log = logging.getLogger("occbench")

EXIT_OK, EXIT_INPUT, EXIT_EMPTY, EXIT_PARTIAL = 0, 1, 2, 3
GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": None, "format": "json"}


def _add_globals(p: argparse.ArgumentParser) -> None:
    # SUPPRESS lets the flags appear before or after the subcommand name
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit seed (default 0)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default 1)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)


def _emit(text: str, args) -> None:
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    if not args.out:
        raise OccbenchError("synth needs --out <directory>")
    sources = read_source_dir(args.input)
    curation = json.loads(Path(args.curation).read_text()) if args.curation else None
    policy = FilterPolicy(args.min_visible_ratio, args.min_area, args.boundary_margin)
    manifest = build_pairs(
        sources, seed=args.seed, identity_fraction=args.identity_fraction, augment=args.augment,
        policy=policy, radius_range=(args.radius_min, args.radius_max), curation=curation,
        out_dir=args.out,
    )
    print(f"{len(manifest.entries)} entries, {len(manifest.rejected)} rejected -> {Path(args.out) / 'manifest.json'}")
    return EXIT_OK


def _read_ratio_csv(path) -> list[tuple[str, float]]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip():
                continue
            try:
                ratio = float(rec[1])
            except (IndexError, ValueError):
                if not rows:  # header line
                    continue
                raise OccbenchError(f"{path}: malformed row {rec!r}") from None
            rows.append((rec[0].strip(), ratio))
    if not rows:
        raise EmptyResultError(f"{path}: no (id, ratio) rows")
    return rows


def cmd_stratify(args) -> int:
    src = Path(args.input)
    if src.suffix == ".json":
        manifest = build_benchmark_manifest(json.loads(src.read_text()), args.seed)
        _emit(manifest.dumps(), args)
        return EXIT_OK
    rows = _read_ratio_csv(src)
    levels = [(sid, r, classify_level(r).value) for sid, r in rows]
    hist = level_histogram(lvl for _, _, lvl in levels)
    if args.format == "csv":
        bounds = [e for e, _ in LEVEL_EDGES] + [1.0]
        lines = ["level,range,count,proportion"]
        for i, (lvl, h) in enumerate(hist.items()):
            closing = "]" if i == len(hist) - 1 else ")"
            lines.append(f"{lvl},[{bounds[i]:g};{bounds[i + 1]:g}{closing},{h['count']},{h['proportion']:.6f}")
        _emit("\n".join(lines) + "\n", args)
    else:
        _emit(_dumps({
            "histogram": hist,
            "total": len(rows),
            "entries": [{"id": s, "ratio": r, "level": lvl} for s, r, lvl in levels],
        }), args)
    return EXIT_OK


def cmd_poses(args) -> int:
    out = {"canonical": [asdict(p) for p in canonical_poses()]}
    if args.random:
        out["random"] = [asdict(p) for p in random_poses(args.random, args.seed)]
        _emit(_dumps(out), args)
    else:
        _emit(_dumps(out["canonical"]), args)
    return EXIT_OK


def _emit_report(report, args, columns) -> None:
    if args.out:
        base = Path(args.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        if args.format == "csv":
            base.write_text(report.to_csv(columns))
        else:
            base.write_text(report.dumps())
            base.with_suffix(".csv").write_text(report.to_csv(columns))
    else:
        sys.stdout.write(report.to_csv(columns) if args.format == "csv" else report.dumps())


def cmd_eval3d(args) -> int:
    cfg = Eval3dConfig(args.samples, args.tau, args.resolution, args.voxel_mode, args.squared, args.seed)
    report = eval3d(args.pred, args.gt, args.manifest, cfg, threads=args.threads)
    _emit_report(report, args, CSV_COLUMNS_3D)
    if report.failures:
        log.error("%d of %d entries failed", report.failures, len(report.rows))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_eval2d(args) -> int:
    real = load_feature_source(args.real)
    gen = load_feature_source(args.gen)
    report = eval2d(real, gen, paired=args.paired, kid_blocks=args.kid_blocks, seed=args.seed)
    _emit_report(report, args, CSV_COLUMNS_2D)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    run = train_toy(steps=args.steps, lr=args.lr, ema_beta=args.ema_beta, seed=args.seed,
                    batch_size=args.batch_size, hidden=args.hidden, T=args.timesteps,
                    weight_decay=args.weight_decay)
    log.info("loss %.4f -> %.4f, sampler accuracy %.3f", run.initial_loss, run.final_loss, run.sampler_accuracy)
    _emit(_dumps(run.to_json()), args)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"occbench {__version__}")
    _add_globals(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize occluded/unoccluded training pairs")
    _add_globals(p)
    p.add_argument("input", help="directory of <id>_image.png, <id>_mask.png, <id>_occluder.png")
    p.add_argument("--identity-fraction", type=float, default=0.1)
    p.add_argument("--augment", action="store_true", help="add dilated and eroded occluder variants")
    p.add_argument("--min-visible-ratio", type=float, default=0.05)
    p.add_argument("--boundary-margin", type=int, default=1)
    p.add_argument("--min-area", type=int, default=1024, help="minimum full-mask area in pixels")
    p.add_argument("--radius-min", type=int, default=1)
    p.add_argument("--radius-max", type=int, default=15)
    p.add_argument("--curation", help="JSON object mapping source id -> keep (true/false)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stratify", help="occlusion-level histogram from a CSV of (id, ratio)")
    _add_globals(p)
    p.add_argument("input", help="CSV of id,ratio; or a JSON sample list to build a benchmark manifest")
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("poses", help="print the six canonical camera poses")
    _add_globals(p)
    p.add_argument("--random", type=int, default=0, metavar="N", help="also draw N random poses")
    p.set_defaults(func=cmd_poses)

    p = sub.add_parser("eval3d", help="Chamfer / F-Score / V-IoU over mesh pairs")
    _add_globals(p)
    p.add_argument("pred", help="directory of predicted <id>.obj meshes")
    p.add_argument("gt", help="directory of ground-truth <id>.obj meshes")
    p.add_argument("--manifest", help="benchmark manifest JSON supplying ids and levels")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--voxel-mode", choices=("parity", "surface-fill"), default="parity")
    p.add_argument("--squared", action="store_true", help="squared-distance Chamfer")
    p.set_defaults(func=cmd_eval3d)

    p = sub.add_parser("eval2d", help="FID / KID / CLIP score over DOFB feature files")
    _add_globals(p)
    p.add_argument("real", help="DOFB file or directory of .fvec files")
    p.add_argument("gen", help="DOFB file or directory of .fvec files")
    p.add_argument("--paired", action="store_true", help="rows pair up; also report CLIP score")
    p.add_argument("--kid-blocks", type=int, default=1)
    p.set_defaults(func=cmd_eval2d)

    p = sub.add_parser("train-toy", help="train the toy conditional denoiser")
    _add_globals(p)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--ema-beta", type=float, default=0.9999)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--timesteps", type=int, default=1000)
    p.set_defaults(func=cmd_train_toy)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("DEOCC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    try:
        return args.func(args)
    except EmptyResultError as exc:
        print(f"occbench: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (OccbenchError, OSError, json.JSONDecodeError) as exc:
        print(f"occbench: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
