"""Command-line entry point: segment, sweep and synth subcommands.

Exit codes: 0 success, 2 bad flags, 3 I/O errors, 4 numeric failure
during training. Every training run writes labels.pgm (raw cluster ids),
segmented_rgb.png, segmented_gray.png, loss.csv and manifest.json into
its output directory, even when it stops on a numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import (
    ImageFormatError,
    colorize,
    labels_to_gray,
    load_grayscale,
    save_pgm,
    save_png,
    write_pgm,
)
from .losses import LossBreakdown
from .metrics import detection_report
from .network import TrainConfig
from .synth import format_scene_spec, generate_scene, parse_scene_spec, preset_names, preset_scene
from .trainer import SegmentationResult, loss_history_csv, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


@dataclass
class RunManifest:
    """Everything needed to reproduce and audit one training run."""

    command: str
    tool_version: str
    input_paths: list[str]
    output_dir: str
    config: TrainConfig
    stop_reason: str
    iterations_run: int
    unique_clusters_final: int
    wall_seconds: float
    loss_first: LossBreakdown | None
    loss_last: LossBreakdown | None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["config"] = dataclasses.asdict(self.config)
        d["loss_first"] = None if self.loss_first is None else dataclasses.asdict(self.loss_first)
        d["loss_last"] = None if self.loss_last is None else dataclasses.asdict(self.loss_last)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        d = dict(d)
        d["config"] = TrainConfig(**d["config"])
        for key in ("loss_first", "loss_last"):
            d[key] = None if d[key] is None else LossBreakdown(**d[key])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# argument plumbing


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=5.0, help="continuity weight (default 5)")
    p.add_argument("--lr", type=float, default=0.1, help="learning rate (default 0.1)")
    p.add_argument("--momentum", type=float, default=0.9, help="SGD momentum (default 0.9)")
    p.add_argument("--iters", type=int, default=200, help="iteration cap (default 200)")
    p.add_argument("--q-max", type=int, default=18, help="max cluster count (default 18)")
    p.add_argument("--q-min", type=int, default=4, help="cluster floor, stops the run (default 4)")
    p.add_argument("--channels", type=int, default=64, help="feature channels (default 64)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--loss-reduction", choices=("mean", "sum"), default="mean",
                   help="normalize losses by pixel count or keep raw sums")
    p.add_argument("--invert-gray", action="store_true",
                   help="flip the grayscale rendering so faults come out dark")


def _config_from_args(args, alpha=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        max_iterations=args.iters,
        alpha=args.alpha if alpha is None else alpha,
        feature_channels=args.channels,
        q_max=args.q_max,
        q_min=args.q_min,
        seed=0 if args.seed is None else args.seed,
        loss_reduction=args.loss_reduction,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvseg",
        description="Unsupervised segmentation of grayscale thermal PV panel images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment one image")
    seg.add_argument("--input", required=True, help="input image (PGM P5 or 8-bit PNG)")
    seg.add_argument("--out", required=True, help="output directory")
    seg.add_argument("--allow-jpeg", action="store_true",
                     help="accept JPEG input (lossy; off by default)")
    _add_train_flags(seg)
    seg.set_defaults(func=cmd_segment)

    swp = sub.add_parser("sweep", help="segment once per continuity weight")
    swp.add_argument("--input", required=True, help="input image (PGM P5 or 8-bit PNG)")
    swp.add_argument("--out", required=True, help="output directory")
    swp.add_argument("--alphas", required=True, help="comma-separated list, e.g. 1,5,10")
    swp.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    swp.add_argument("--allow-jpeg", action="store_true",
                     help="accept JPEG input (lossy; off by default)")
    _add_train_flags(swp)
    swp.set_defaults(func=cmd_sweep)

    syn = sub.add_parser("synth", help="generate a synthetic scene, optionally segment and score it")
    src = syn.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scene spec file (flat key = value text)")
    src.add_argument("--preset", choices=preset_names(), help="built-in scene")
    syn.add_argument("--out", required=True, help="output directory")
    syn.add_argument("--evaluate", action="store_true",
                     help="segment the scene and score fault detection against the truth")
    syn.add_argument("--tau", type=float, default=0.3, help="IoU detection threshold (default 0.3)")
    _add_train_flags(syn)
    syn.set_defaults(func=cmd_synth)

    return parser


# ---------------------------------------------------------------------------
# shared output writing


def _write_run_outputs(out_dir: Path, command, input_paths, image, config, result, wall,
                       invert_gray=False) -> RunManifest:
    from . import __version__

    out_dir.mkdir(parents=True, exist_ok=True)
    labels = result.final_labels
    write_pgm(labels.astype(np.uint8), out_dir / "labels.pgm")
    save_png(colorize(labels, config.q_max), out_dir / "segmented_rgb.png")
    save_png(labels_to_gray(labels, image, invert=invert_gray), out_dir / "segmented_gray.png")
    (out_dir / "loss.csv").write_text(loss_history_csv(result.loss_history))
    manifest = RunManifest(
        command=command,
        tool_version=__version__,
        input_paths=[str(p) for p in input_paths],
        output_dir=str(out_dir),
        config=config,
        stop_reason=result.stop_reason,
        iterations_run=result.iterations_run,
        unique_clusters_final=result.unique_clusters_final,
        wall_seconds=wall,
        loss_first=result.loss_history[0] if result.loss_history else None,
        loss_last=result.loss_history[-1] if result.loss_history else None,
    )
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def _run_and_write(out_dir: Path, command, input_paths, image, config, invert_gray) -> SegmentationResult:
    t0 = time.perf_counter()
    result = train(image[None, :, :], config)
    wall = time.perf_counter() - t0
    _write_run_outputs(out_dir, command, input_paths, image, config, result, wall, invert_gray)
    return result


# ---------------------------------------------------------------------------
# commands


def cmd_segment(args) -> int:
    if args.q_max > 255:
        print("error: --q-max above 255 cannot be stored in labels.pgm", file=sys.stderr)
        return EXIT_USAGE
    image = load_grayscale(args.input, allow_jpeg=args.allow_jpeg)
    config = _config_from_args(args)
    result = _run_and_write(Path(args.out), "segment", [args.input], image, config, args.invert_gray)
    if result.stop_reason == "numeric_failure":
        print("error: training aborted on non-finite values (see manifest.json)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _parse_alphas(text: str, parser_error) -> list[float]:
    alphas = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            parser_error(f"malformed --alphas list {text!r}")
        try:
            a = float(tok)
        except ValueError:
            parser_error(f"bad alpha value {tok!r}")
        if not (np.isfinite(a) and a >= 0):
            parser_error(f"alpha must be finite and >= 0, got {tok}")
        alphas.append(a)
    if not alphas:
        parser_error("--alphas must list at least one value")
    return alphas


def _sweep_entry(payload):
    image, config = payload
    t0 = time.perf_counter()
    result = train(image[None, :, :], config)
    return result, time.perf_counter() - t0


def cmd_sweep(args) -> int:
    parser = build_parser()
    alphas = _parse_alphas(args.alphas, parser.error)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    image = load_grayscale(args.input, allow_jpeg=args.allow_jpeg)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    configs = [_config_from_args(args, alpha=a) for a in alphas]
    payloads = [(image, c) for c in configs]
    if args.jobs == 1:
        outcomes = [_sweep_entry(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_sweep_entry, payloads))

    rows = ["alpha,iteration,total"]
    failed = []
    for alpha, config, (result, wall) in zip(alphas, configs, outcomes):
        sub = out_root / f"alpha_{alpha:g}"
        _write_run_outputs(sub, "sweep", [args.input], image, config, result, wall, args.invert_gray)
        for i, b in enumerate(result.loss_history, start=1):
            rows.append(f"{alpha:g},{i},{b.total!r}")
        if result.stop_reason == "numeric_failure":
            failed.append(alpha)
    (out_root / "sweep.csv").write_text("\n".join(rows) + "\n")

    if failed:
        print(f"error: numeric failure for alpha in {failed} (results recorded)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec is not None:
        try:
            spec = parse_scene_spec(Path(args.spec).read_text())
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        spec = preset_scene(args.preset)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if not 0.0 < args.tau <= 1.0:
        print(f"error: --tau must lie in (0, 1], got {args.tau}", file=sys.stderr)
        return EXIT_USAGE

    image, truth = generate_scene(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_pgm(image, out_dir / "scene.pgm")
    save_png(image, out_dir / "scene.png")
    write_pgm(truth, out_dir / "truth.pgm")
    save_png(colorize(truth, 4), out_dir / "truth.png")
    (out_dir / "scene_spec.txt").write_text(format_scene_spec(spec))

    if not args.evaluate:
        return EXIT_OK

    config = _config_from_args(args)
    result = _run_and_write(out_dir, "synth", [str(out_dir / "scene.pgm")], image, config,
                            args.invert_gray)
    report = detection_report(result.final_labels, truth, tau=args.tau)
    metrics = {
        "tau": args.tau,
        "classes": {
            name: {"detected": r.detected, "best_iou": r.score, "cluster_id": r.cluster_id}
            for name, r in report.items()
        },
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    if result.stop_reason == "numeric_failure":
        print("error: training aborted on non-finite values (see manifest.json)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ImageFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
