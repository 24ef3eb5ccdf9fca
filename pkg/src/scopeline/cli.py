"""Operator entry point: run pipelines, evaluate results, benchmark, generate fixtures.

Exit codes: 0 success, 2 configuration error, 3 input-data error. Output
files are written to a temporary name and atomically renamed into place.
Log verbosity comes from the SCOPELINE_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .annotations import annotations_by_frame, load_annotations
from .backends.synthetic import SyntheticDetectorConfig
from .bench import BenchSpec, DEFAULT_PROFILE, format_bench_table, run_bench
from .datagen import DatasetSpec, write_dataset
from .ensemble import MODE_AND, MODE_SIZE_AWARE
from .errors import ConfigError, DataFormatError, MediaFormatError, ScopelineError
from .evaluation import (
    CRITERION_CENTROID,
    CRITERION_IOU,
    DEFAULT_FP_MERGE_WINDOW_FRAMES,
    MatchConfig,
    VideoEvalInput,
    evaluate_videos,
    write_clips_csv,
    write_fp_cdf_csv,
    write_metrics_json,
    write_recall_curve_csv,
)
from .media import DirectoryFrameStream
from .pipeline import (
    EXECUTION_PARALLEL,
    EXECUTION_SEQUENTIAL,
    Pipeline,
    PipelineConfig,
    load_results,
    result_to_dict,
)

log = logging.getLogger("scopeline")

RESULTS_NAME = "results.jsonl"
MANIFEST_NAME = "manifest.json"
LATENCY_REPORT_NAME = "latency_report.json"


def _atomic_write(path: Path, write_fn: Callable[[Path], None]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(tmp)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, lambda p: p.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8"))


def _load_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{what} {path} is not valid JSON: {exc}") from exc


def _load_run_config(config_path: Path) -> tuple[PipelineConfig, Path | None]:
    """Load a pipeline config; a run manifest replays its recorded config and input."""
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "config" in raw and "input" in raw:
        recorded_input = raw["input"].get("path") if isinstance(raw["input"], dict) else None
        return (
            PipelineConfig.from_dict(raw["config"]),
            Path(recorded_input) if recorded_input else None,
        )
    return PipelineConfig.from_dict(raw), None


def _apply_run_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.mode is not None:
        config = replace(config, execution=args.mode)
    ensemble = config.ensemble
    if args.ensemble is not None:
        ensemble = replace(ensemble, mode=args.ensemble)
    if args.iou_threshold is not None:
        ensemble = replace(ensemble, iou_threshold=args.iou_threshold)
    if args.short_edge_threshold is not None:
        ensemble = replace(ensemble, short_edge_ratio_threshold=args.short_edge_threshold)
    config = replace(config, ensemble=ensemble)
    if args.seed is not None:
        if isinstance(config.detector_a, SyntheticDetectorConfig):
            config = replace(config, detector_a=replace(config.detector_a, seed=args.seed))
        if isinstance(config.detector_b, SyntheticDetectorConfig):
            config = replace(config, detector_b=replace(config.detector_b, seed=args.seed + 1))
    return config


def _discover_annotations(input_dir: Path, explicit: str | None) -> Path | None:
    if explicit is not None:
        path = Path(explicit)
        if not path.is_file():
            raise DataFormatError(f"annotations file not found: {path}")
        return path
    for candidate in (
        input_dir / "annotations.jsonl",
        input_dir.parent / "annotations.jsonl",
        input_dir.parent.parent / "annotations.jsonl",
    ):
        if candidate.is_file():
            return candidate
    return None


def _seed_registry(config: PipelineConfig) -> dict:
    seeds = {}
    for slot, spec in (("detector_a", config.detector_a), ("detector_b", config.detector_b)):
        seeds[slot] = spec.seed if isinstance(spec, SyntheticDetectorConfig) else None
    return seeds


def cmd_run(args: argparse.Namespace) -> int:
    config, recorded_input = _load_run_config(Path(args.config))
    config = _apply_run_overrides(config, args)

    input_dir = Path(args.input) if args.input else recorded_input
    if input_dir is None:
        raise ConfigError("no input directory: pass --input or replay a run manifest")
    if not input_dir.is_dir():
        raise MediaFormatError(f"input frame directory not found: {input_dir}")
    stream = DirectoryFrameStream(input_dir, fps_override=args.fps)

    annotations_path = _discover_annotations(input_dir, args.annotations)
    truth = {}
    if annotations_path is not None:
        truth = annotations_by_frame(load_annotations(annotations_path), stream.video_id)
        log.info("loaded %d annotated frames from %s", len(truth), annotations_path)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    summaries = []

    def write_rows(tmp_path: Path) -> None:
        with open(tmp_path, "w", encoding="utf-8") as fh:
            def sink(result) -> None:
                fh.write(json.dumps(result_to_dict(result), separators=(",", ":")) + "\n")

            with Pipeline(config, truth) as pipeline:
                summaries.append(pipeline.process_stream(stream, sink))

    _atomic_write(out / RESULTS_NAME, write_rows)
    summary = summaries[0]

    manifest = {
        "tool": "scopeline",
        "version": __version__,
        "config": config.to_dict(),
        "input": {"path": str(input_dir), **stream.info.to_dict()},
        "annotations": str(annotations_path) if annotations_path else None,
        "seeds": _seed_registry(config),
    }
    _atomic_write_json(out / MANIFEST_NAME, manifest)
    _atomic_write_json(out / LATENCY_REPORT_NAME, summary.latency.to_dict())

    fps = summary.latency.throughput_fps
    fps_text = f", accounted throughput {fps:.2f} fps" if fps else ""
    print(
        f"processed {summary.frames} frames ({summary.blurry_frames} blurry, "
        f"{summary.failed_frames} failed){fps_text}"
    )
    return 0


def _results_source(entry: str) -> tuple[Path, Path | None]:
    path = Path(entry)
    if path.is_dir():
        results = path / RESULTS_NAME
        manifest = path / MANIFEST_NAME
        return results, manifest if manifest.is_file() else None
    manifest = path.parent / MANIFEST_NAME
    return path, manifest if manifest.is_file() else None


def cmd_eval(args: argparse.Namespace) -> int:
    match_cfg = MatchConfig(criterion=args.match, iou_match_threshold=args.match_threshold)
    annotations = load_annotations(Path(args.annotations))

    inputs = []
    for index, entry in enumerate(args.results):
        results_path, manifest_path = _results_source(entry)
        if not results_path.is_file():
            raise DataFormatError(f"results file not found: {results_path}")
        results = load_results(results_path)
        if manifest_path is not None:
            info = _load_json(manifest_path, "run manifest").get("input", {})
            video_id = info.get("video_id", f"run-{index:03d}")
            fps = float(info.get("fps", args.fps))
            frame_count = int(info.get("frame_count", 0))
        else:
            video_id = results_path.parent.name or f"run-{index:03d}"
            fps = args.fps
            frame_count = 0
        video_annotations = tuple(a for a in annotations if a.video_id == video_id)
        if not frame_count:
            candidates = [r.frame_index for r in results]
            candidates += [a.frame_index for a in video_annotations]
            frame_count = max(candidates) + 1 if candidates else 0
        if frame_count < 1:
            raise DataFormatError(f"cannot determine frame count for {results_path}")
        inputs.append(
            VideoEvalInput(
                video_id=video_id,
                fps=fps,
                frame_count=frame_count,
                annotations=video_annotations,
                detections_by_frame={r.frame_index: r.detections for r in results},
            )
        )

    report = evaluate_videos(inputs, match_cfg, args.merge_window)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "metrics.json", lambda p: write_metrics_json(p, report))
    _atomic_write(out / "clips.csv", lambda p: write_clips_csv(p, report.clip_records))
    _atomic_write(out / "recall_curve.csv", lambda p: write_recall_curve_csv(p, report.clip_records))
    _atomic_write(out / "fp_cdf.csv", lambda p: write_fp_cdf_csv(p, report.fp_rates))

    metrics = report.metrics

    def fmt(value: float | None) -> str:
        return "undefined" if value is None else f"{value:.2f}%"

    print(
        f"tp={report.counts.tp} fp={report.counts.fp} fn={report.counts.fn} "
        f"precision={fmt(metrics.precision)} recall={fmt(metrics.recall)} "
        f"f1={fmt(metrics.f1)} f2={fmt(metrics.f2)}"
    )
    return 0


def _parse_profile(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"profile must be gate,detectorA,detectorB in ms, got {text!r}")
    try:
        gate, det_a, det_b = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"profile must be numeric, got {text!r}") from exc
    return gate, det_a, det_b


def cmd_bench(args: argparse.Namespace) -> int:
    spec = BenchSpec(
        frames=args.frames,
        width=args.width,
        height=args.height,
        blur_fraction=args.blur_fraction,
        seed=args.seed,
        profile=_parse_profile(args.profile),
    )
    modes = (
        (EXECUTION_SEQUENTIAL, EXECUTION_PARALLEL)
        if args.mode == "both"
        else (args.mode,)
    )
    report = run_bench(spec, modes)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(format_bench_table(report))
    return 0


def _parse_edge_range(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"edge range must be lo,hi in pixels, got {text!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"edge range must be integers, got {text!r}") from exc
    return lo, hi


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    spec = DatasetSpec(
        videos=args.videos,
        frames_per_video=args.frames,
        polyps_per_video=args.polyps,
        blur_fraction=args.blur_fraction,
        seed=args.seed,
        width=args.width,
        height=args.height,
        fps=args.fps,
        polyp_edge_range=_parse_edge_range(args.polyp_edge_range),
        stagger_appearance=args.stagger,
    )
    video_dirs = write_dataset(spec, Path(args.out))
    print(f"wrote {len(video_dirs)} videos x {spec.frames_per_video} frames under {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scopeline", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"scopeline {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a pipeline over a frame directory")
    run.add_argument("--config", required=True, help="pipeline config JSON (or a run manifest to replay)")
    run.add_argument("--input", default=None, help="frame directory with manifest.json")
    run.add_argument("--output", required=True, help="output directory for results and manifest")
    run.add_argument("--annotations", default=None, help="annotations JSONL for synthetic backends")
    run.add_argument("--mode", choices=[EXECUTION_SEQUENTIAL, EXECUTION_PARALLEL], default=None)
    run.add_argument("--ensemble", choices=[MODE_AND, MODE_SIZE_AWARE], default=None)
    run.add_argument("--iou-threshold", type=float, default=None)
    run.add_argument("--short-edge-threshold", type=float, default=None)
    run.add_argument("--seed", type=int, default=None, help="override synthetic seeds (A=seed, B=seed+1)")
    run.add_argument("--fps", type=float, default=None, help="override the stream fps")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="evaluate results files against annotations")
    ev.add_argument("--results", action="append", required=True, help="run directory or results.jsonl (repeatable)")
    ev.add_argument("--annotations", required=True)
    ev.add_argument("--output", required=True)
    ev.add_argument("--match", choices=[CRITERION_IOU, CRITERION_CENTROID], default=CRITERION_IOU)
    ev.add_argument("--match-threshold", type=float, default=0.5)
    ev.add_argument("--fps", type=float, default=60.0, help="fps fallback when no run manifest is present")
    ev.add_argument("--merge-window", type=int, default=DEFAULT_FP_MERGE_WINDOW_FRAMES)
    ev.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="benchmark accounted latency with simulated stage costs")
    bench.add_argument("--frames", type=int, default=240)
    bench.add_argument("--width", type=int, default=160)
    bench.add_argument("--height", type=int, default=120)
    bench.add_argument("--blur-fraction", type=float, default=0.0)
    bench.add_argument("--profile", default=",".join(str(c) for c in DEFAULT_PROFILE),
                       help="gate,detectorA,detectorB simulated costs in ms")
    bench.add_argument("--mode", choices=[EXECUTION_SEQUENTIAL, EXECUTION_PARALLEL, "both"], default="both")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--json", action="store_true", help="emit the report as JSON")
    bench.set_defaults(func=cmd_bench)

    gen = sub.add_parser("gen-synthetic", help="generate a deterministic synthetic dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--videos", type=int, default=1)
    gen.add_argument("--frames", type=int, default=100)
    gen.add_argument("--polyps", type=int, default=1, help="polyp tracks per video")
    gen.add_argument("--blur-fraction", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--width", type=int, default=384)
    gen.add_argument("--height", type=int, default=288)
    gen.add_argument("--fps", type=float, default=60.0)
    gen.add_argument("--polyp-edge-range", default="24,96")
    gen.add_argument("--stagger", action="store_true", help="randomize each track's appearance frame")
    gen.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("SCOPELINE_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MediaFormatError, DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ScopelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
