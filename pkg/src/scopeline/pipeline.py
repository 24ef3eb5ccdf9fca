"""Per-frame orchestration: blur gate, detector pair, ensemble, latency accounting.

Stage latencies combine measured wall time (monotonic clock) with each
backend's simulated latency, so the paper-scale timing arithmetic is
testable in milliseconds of real time. ``total_wall`` is the accounted
per-frame cost: in parallel execution the detector block counts as the
maximum of the two detector stages rather than their sum.

Execution modes: ``sequential`` runs detector A then B; ``parallel``
overlaps them. The size-aware ensemble decides whether B runs at all from
A's output, so its detector invocations are inherently sequential in both
modes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter
from typing import Callable, Mapping, Sequence

from .annotations import FrameAnnotation
from .backends.base import BackendDescriptor, BlurGate, DetectorBackend, HeuristicBlurGate
from .backends.external import (
    ExternalBlurGate,
    ExternalDetectorBackend,
    connect_tcp_client,
    spawn_subprocess_client,
)
from .backends.synthetic import SyntheticDetector, SyntheticDetectorConfig
from .ensemble import MODE_SIZE_AWARE, EnsembleConfig, and_ensemble, size_aware_ensemble
from .errors import ConfigError, DataFormatError, ScopelineError
from .geometry import SOURCE_A, SOURCE_B, BoundingBox, ScoredBox
from .media import DEFAULT_BLUR_THRESHOLD, Frame

STAGE_GATE = "gate"
STAGE_DETECTOR_A = "detector_a"
STAGE_DETECTOR_B = "detector_b"
STAGE_ENSEMBLE = "ensemble"
STAGE_TOTAL = "total_wall"

GATE_HEURISTIC = "heuristic"
GATE_EXTERNAL = "external"
GATE_DISABLED = "disabled"

EXECUTION_SEQUENTIAL = "sequential"
EXECUTION_PARALLEL = "parallel"

TRANSPORT_SUBPROCESS = "subprocess"
TRANSPORT_TCP = "tcp"


@dataclass(frozen=True)
class ExternalBackendSpec:
    """Where an out-of-process backend lives."""

    transport: str
    command: tuple[str, ...] = ()
    host: str = "127.0.0.1"
    port: int = 0

    def __post_init__(self) -> None:
        if self.transport not in (TRANSPORT_SUBPROCESS, TRANSPORT_TCP):
            raise ConfigError(f"transport must be 'subprocess' or 'tcp', got {self.transport!r}")
        if self.transport == TRANSPORT_SUBPROCESS and not self.command:
            raise ConfigError("subprocess backend needs a non-empty 'command'")
        if self.transport == TRANSPORT_TCP and not 0 < self.port < 65536:
            raise ConfigError(f"tcp backend needs a port in (0, 65536), got {self.port}")


@dataclass(frozen=True)
class GateConfig:
    kind: str = GATE_HEURISTIC
    threshold: float = DEFAULT_BLUR_THRESHOLD
    simulated_latency_ms: float = 0.0
    external: ExternalBackendSpec | None = None

    def __post_init__(self) -> None:
        if self.kind not in (GATE_HEURISTIC, GATE_EXTERNAL, GATE_DISABLED):
            raise ConfigError(f"gate kind must be heuristic/external/disabled, got {self.kind!r}")
        if self.kind == GATE_EXTERNAL and self.external is None:
            raise ConfigError("external gate needs an 'external' backend spec")
        if self.simulated_latency_ms < 0.0:
            raise ConfigError("gate simulated_latency_ms must be non-negative")


DetectorSpec = SyntheticDetectorConfig | ExternalBackendSpec


@dataclass(frozen=True)
class PipelineConfig:
    detector_a: DetectorSpec
    detector_b: DetectorSpec
    gate: GateConfig = GateConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    execution: str = EXECUTION_SEQUENTIAL

    def __post_init__(self) -> None:
        if self.execution not in (EXECUTION_SEQUENTIAL, EXECUTION_PARALLEL):
            raise ConfigError(
                f"execution must be 'sequential' or 'parallel', got {self.execution!r}"
            )

    def to_dict(self) -> dict:
        return {
            "gate": _gate_to_dict(self.gate),
            "detector_a": _detector_to_dict(self.detector_a),
            "detector_b": _detector_to_dict(self.detector_b),
            "ensemble": {
                "iou_threshold": self.ensemble.iou_threshold,
                "mode": self.ensemble.mode,
                "short_edge_ratio_threshold": self.ensemble.short_edge_ratio_threshold,
            },
            "execution": self.execution,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> PipelineConfig:
        _check_keys(raw, {"gate", "detector_a", "detector_b", "ensemble", "execution"}, "config")
        try:
            detector_a = _detector_from_dict(raw["detector_a"], "detector_a")
            detector_b = _detector_from_dict(raw["detector_b"], "detector_b")
        except KeyError as exc:
            raise ConfigError(f"config lacks required key {exc}") from exc
        gate = _gate_from_dict(raw.get("gate", {}))
        ensemble = _ensemble_from_dict(raw.get("ensemble", {}))
        execution = str(raw.get("execution", EXECUTION_SEQUENTIAL))
        return cls(detector_a, detector_b, gate, ensemble, execution)


def _check_keys(raw: Mapping, allowed: set[str], where: str) -> None:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _external_from_dict(raw: Mapping, where: str) -> ExternalBackendSpec:
    _check_keys(raw, {"transport", "command", "host", "port"}, where)
    return ExternalBackendSpec(
        transport=str(raw.get("transport", TRANSPORT_SUBPROCESS)),
        command=tuple(str(c) for c in raw.get("command", ())),
        host=str(raw.get("host", "127.0.0.1")),
        port=int(raw.get("port", 0)),
    )


def _score_range(raw, name: str) -> tuple[float, float]:
    try:
        lo, hi = raw
        return float(lo), float(hi)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a [lo, hi] pair, got {raw!r}") from exc


def _detector_from_dict(raw: Mapping, where: str) -> DetectorSpec:
    if not isinstance(raw, Mapping) or "kind" not in raw:
        raise ConfigError(f"{where} must be an object with a 'kind' field")
    kind = raw["kind"]
    if kind == "synthetic":
        _check_keys(
            raw,
            {
                "kind",
                "seed",
                "p_tp",
                "fp_rate",
                "jitter_px",
                "tp_score_range",
                "fp_score_range",
                "simulated_latency_ms",
            },
            where,
        )
        defaults = SyntheticDetectorConfig(seed=0)
        try:
            return SyntheticDetectorConfig(
                seed=int(raw["seed"]),
                p_tp=float(raw.get("p_tp", defaults.p_tp)),
                fp_rate=float(raw.get("fp_rate", defaults.fp_rate)),
                jitter_px=float(raw.get("jitter_px", defaults.jitter_px)),
                tp_score_range=_score_range(
                    raw.get("tp_score_range", defaults.tp_score_range), f"{where}.tp_score_range"
                ),
                fp_score_range=_score_range(
                    raw.get("fp_score_range", defaults.fp_score_range), f"{where}.fp_score_range"
                ),
                simulated_latency_ms=float(raw.get("simulated_latency_ms", 0.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"{where} lacks required key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if kind == "external":
        spec = dict(raw)
        spec.pop("kind")
        return _external_from_dict(spec, where)
    raise ConfigError(f"{where}.kind must be 'synthetic' or 'external', got {kind!r}")


def _detector_to_dict(spec: DetectorSpec) -> dict:
    if isinstance(spec, SyntheticDetectorConfig):
        return {
            "kind": "synthetic",
            "seed": spec.seed,
            "p_tp": spec.p_tp,
            "fp_rate": spec.fp_rate,
            "jitter_px": spec.jitter_px,
            "tp_score_range": list(spec.tp_score_range),
            "fp_score_range": list(spec.fp_score_range),
            "simulated_latency_ms": spec.simulated_latency_ms,
        }
    out = {"kind": "external", "transport": spec.transport}
    if spec.transport == TRANSPORT_SUBPROCESS:
        out["command"] = list(spec.command)
    else:
        out["host"] = spec.host
        out["port"] = spec.port
    return out


def _gate_from_dict(raw: Mapping) -> GateConfig:
    _check_keys(raw, {"kind", "threshold", "simulated_latency_ms", "external"}, "gate")
    kind = str(raw.get("kind", GATE_HEURISTIC))
    external = None
    if "external" in raw and raw["external"] is not None:
        external = _external_from_dict(raw["external"], "gate.external")
    try:
        return GateConfig(
            kind=kind,
            threshold=float(raw.get("threshold", DEFAULT_BLUR_THRESHOLD)),
            simulated_latency_ms=float(raw.get("simulated_latency_ms", 0.0)),
            external=external,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gate: {exc}") from exc


def _gate_to_dict(gate: GateConfig) -> dict:
    out: dict = {"kind": gate.kind}
    if gate.kind == GATE_HEURISTIC:
        out["threshold"] = gate.threshold
    if gate.kind == GATE_EXTERNAL:
        out["external"] = {
            "transport": gate.external.transport,
            **(
                {"command": list(gate.external.command)}
                if gate.external.transport == TRANSPORT_SUBPROCESS
                else {"host": gate.external.host, "port": gate.external.port}
            ),
        }
    if gate.kind != GATE_DISABLED:
        out["simulated_latency_ms"] = gate.simulated_latency_ms
    return out


def _ensemble_from_dict(raw: Mapping) -> EnsembleConfig:
    _check_keys(raw, {"iou_threshold", "mode", "short_edge_ratio_threshold"}, "ensemble")
    defaults = EnsembleConfig()
    try:
        return EnsembleConfig(
            iou_threshold=float(raw.get("iou_threshold", defaults.iou_threshold)),
            mode=str(raw.get("mode", defaults.mode)),
            short_edge_ratio_threshold=float(
                raw.get("short_edge_ratio_threshold", defaults.short_edge_ratio_threshold)
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ensemble: {exc}") from exc


@dataclass(frozen=True)
class PipelineResult:
    """Per-frame outcome: blur verdict, final detections, per-stage latencies."""

    frame_index: int
    blurry: bool
    detections: tuple[ScoredBox, ...]
    stage_latencies: dict[str, float]
    error: str | None = None


@dataclass(frozen=True)
class StageStats:
    mean: float
    p50: float
    p95: float
    max: float
    count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "p50": self.p50, "p95": self.p95, "max": self.max, "count": self.count}


@dataclass(frozen=True)
class LatencyReport:
    """Per-stage latency statistics plus accounted throughput for a run."""

    stages: dict[str, StageStats]
    throughput_fps: float | None
    frames: int

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "throughput_fps": self.throughput_fps,
            "stages": {name: stats.to_dict() for name, stats in sorted(self.stages.items())},
        }


def _nearest_rank(sorted_values: Sequence[float], fraction: float) -> float:
    rank = math.ceil(fraction * len(sorted_values))
    return sorted_values[min(max(rank, 1), len(sorted_values)) - 1]


def build_latency_report(samples: Mapping[str, Sequence[float]], frames: int) -> LatencyReport:
    stages = {}
    for name, values in samples.items():
        if not values:
            continue
        ordered = sorted(values)
        stages[name] = StageStats(
            mean=sum(ordered) / len(ordered),
            p50=_nearest_rank(ordered, 0.50),
            p95=_nearest_rank(ordered, 0.95),
            max=ordered[-1],
            count=len(ordered),
        )
    totals = samples.get(STAGE_TOTAL, ())
    throughput = 1000.0 * len(totals) / sum(totals) if totals else None
    return LatencyReport(stages=stages, throughput_fps=throughput, frames=frames)


@dataclass(frozen=True)
class RunSummary:
    frames: int
    blurry_frames: int
    failed_frames: int
    latency: LatencyReport


def build_detector(spec: DetectorSpec, source: str) -> DetectorBackend:
    if isinstance(spec, SyntheticDetectorConfig):
        return SyntheticDetector(spec, source)
    if spec.transport == TRANSPORT_SUBPROCESS:
        client = spawn_subprocess_client(spec.command)
    else:
        client = connect_tcp_client(spec.host, spec.port)
    return ExternalDetectorBackend(client, source)


def build_gate(config: GateConfig) -> BlurGate | None:
    if config.kind == GATE_DISABLED:
        return None
    if config.kind == GATE_HEURISTIC:
        return HeuristicBlurGate(config.threshold, config.simulated_latency_ms)
    spec = config.external
    if spec.transport == TRANSPORT_SUBPROCESS:
        client = spawn_subprocess_client(spec.command)
    else:
        client = connect_tcp_client(spec.host, spec.port)
    gate = ExternalBlurGate(client)
    gate.descriptor = BackendDescriptor(gate.descriptor.name, config.simulated_latency_ms)
    return gate


class Pipeline:
    """Owns the gate and detector backends for one run."""

    def __init__(
        self,
        config: PipelineConfig,
        truth: Mapping[int, FrameAnnotation] | None = None,
    ):
        self.config = config
        self.truth = dict(truth) if truth else {}
        self.gate = build_gate(config.gate)
        self.detector_a = build_detector(config.detector_a, SOURCE_A)
        self.detector_b = build_detector(config.detector_b, SOURCE_B)
        self._pool: ThreadPoolExecutor | None = None
        if config.execution == EXECUTION_PARALLEL:
            self._pool = ThreadPoolExecutor(max_workers=2, thread_name_prefix="detector")

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None
        for backend in (self.gate, self.detector_a, self.detector_b):
            close = getattr(backend, "close", None)
            if close is not None:
                close()

    def __enter__(self) -> Pipeline:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _timed_detect(
        self, backend: DetectorBackend, frame: Frame, truth: FrameAnnotation | None
    ) -> tuple[list[ScoredBox], float, float]:
        """Returns (boxes, accounted stage ms, real ms)."""
        start = perf_counter()
        boxes = backend.detect(frame, truth)
        real_ms = (perf_counter() - start) * 1000.0
        return boxes, real_ms + backend.descriptor.simulated_latency_ms, real_ms

    def process_frame(self, frame: Frame, truth: FrameAnnotation | None = None) -> PipelineResult:
        """Run one frame through gate, detectors, and ensemble.

        Backend failures propagate as ScopelineError; stream drivers catch
        them and mark the frame failed (see :meth:`process_stream`).
        """
        if truth is None:
            truth = self.truth.get(frame.frame_index)
        start = perf_counter()
        latencies: dict[str, float] = {}
        simulated_total = 0.0

        if self.gate is not None:
            gate_start = perf_counter()
            blurry = self.gate.is_blurry(frame)
            gate_real = (perf_counter() - gate_start) * 1000.0
            gate_sim = self.gate.descriptor.simulated_latency_ms
            latencies[STAGE_GATE] = gate_real + gate_sim
            simulated_total += gate_sim
            if blurry:
                latencies[STAGE_TOTAL] = (perf_counter() - start) * 1000.0 + simulated_total
                return PipelineResult(frame.frame_index, True, (), latencies)

        parallel_correction = 0.0
        if self.config.ensemble.mode == MODE_SIZE_AWARE:
            boxes_a, lat_a, _ = self._timed_detect(self.detector_a, frame, truth)
            latencies[STAGE_DETECTOR_A] = lat_a
            simulated_total += self.detector_a.descriptor.simulated_latency_ms

            b_real: dict[str, float] = {}

            def b_supplier() -> list[ScoredBox]:
                boxes_b, lat_b, real_b = self._timed_detect(self.detector_b, frame, truth)
                latencies[STAGE_DETECTOR_B] = lat_b
                b_real["ms"] = real_b
                return boxes_b

            ensemble_start = perf_counter()
            detections, b_was_invoked = size_aware_ensemble(
                boxes_a, b_supplier, frame.width, frame.height, self.config.ensemble
            )
            ensemble_real = (perf_counter() - ensemble_start) * 1000.0 - b_real.get("ms", 0.0)
            latencies[STAGE_ENSEMBLE] = max(ensemble_real, 0.0)
            if b_was_invoked:
                simulated_total += self.detector_b.descriptor.simulated_latency_ms
        else:
            if self._pool is not None:
                block_start = perf_counter()
                future_a = self._pool.submit(self._timed_detect, self.detector_a, frame, truth)
                future_b = self._pool.submit(self._timed_detect, self.detector_b, frame, truth)
                boxes_a, lat_a, _ = future_a.result()
                boxes_b, lat_b, _ = future_b.result()
                block_real = (perf_counter() - block_start) * 1000.0
                # Accounted block is the slower accounted detector; replace the
                # measured overlap time with it.
                parallel_correction = max(lat_a, lat_b) - block_real
            else:
                boxes_a, lat_a, _ = self._timed_detect(self.detector_a, frame, truth)
                boxes_b, lat_b, _ = self._timed_detect(self.detector_b, frame, truth)
                simulated_total += (
                    self.detector_a.descriptor.simulated_latency_ms
                    + self.detector_b.descriptor.simulated_latency_ms
                )
            latencies[STAGE_DETECTOR_A] = lat_a
            latencies[STAGE_DETECTOR_B] = lat_b

            ensemble_start = perf_counter()
            detections = and_ensemble(boxes_a, boxes_b, self.config.ensemble)
            latencies[STAGE_ENSEMBLE] = (perf_counter() - ensemble_start) * 1000.0

        total = (perf_counter() - start) * 1000.0 + simulated_total + parallel_correction
        latencies[STAGE_TOTAL] = max(total, 0.0)
        return PipelineResult(frame.frame_index, False, tuple(detections), latencies)

    def process_stream(
        self,
        stream,
        sink: Callable[[PipelineResult], None],
        on_error: Callable[[int, Exception], None] | None = None,
    ) -> RunSummary:
        """Process every frame of a stream, delivering results in frame order.

        Frame-level failures (backend faults, undecodable frames) are
        recorded in the result's ``error`` field and do not abort the run.
        """
        samples: dict[str, list[float]] = {}
        blurry_frames = 0
        failed_frames = 0
        frames = 0
        for frame_index in range(stream.frame_count):
            frames += 1
            try:
                frame = stream.read_frame(frame_index)
                result = self.process_frame(frame)
            except (ScopelineError, OSError) as exc:
                failed_frames += 1
                result = PipelineResult(frame_index, False, (), {}, error=str(exc))
                if on_error is not None:
                    on_error(frame_index, exc)
            if result.blurry:
                blurry_frames += 1
            for stage, value in result.stage_latencies.items():
                samples.setdefault(stage, []).append(value)
            sink(result)
        report = build_latency_report(samples, frames)
        return RunSummary(frames, blurry_frames, failed_frames, report)


def result_to_dict(result: PipelineResult) -> dict:
    """Serializable row for results.jsonl.

    Stage latencies are wall-clock measurements and stay out of the results
    file so reruns are byte-identical; aggregate timing lives in the latency
    report.
    """
    return {
        "frame_index": result.frame_index,
        "blurry": result.blurry,
        "detections": [
            {
                "x": sb.box.x,
                "y": sb.box.y,
                "w": sb.box.w,
                "h": sb.box.h,
                "score": sb.score,
                "source": sb.source,
                "label": sb.label,
            }
            for sb in result.detections
        ],
        "error": result.error,
    }


def result_from_dict(row: Mapping) -> PipelineResult:
    try:
        detections = tuple(
            ScoredBox(
                BoundingBox(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])),
                float(d["score"]),
                str(d.get("source", SOURCE_A)),
                str(d.get("label", "polyp")),
            )
            for d in row["detections"]
        )
        return PipelineResult(
            frame_index=int(row["frame_index"]),
            blurry=bool(row["blurry"]),
            detections=detections,
            stage_latencies={},
            error=row.get("error"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad results row: {exc}") from exc


def load_results(path: str | Path) -> list[PipelineResult]:
    """Read a results.jsonl file; raises DataFormatError naming the bad line."""
    results = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                results.append(result_from_dict(row))
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return results
