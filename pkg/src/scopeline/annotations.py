"""Ground-truth annotation records and their JSON Lines serialization.

One row per annotated frame:
``{"video_id": s, "frame_index": n, "boxes": [{"x","y","w","h","label"}]}``.
Frames without a row carry no annotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataFormatError
from .geometry import LABEL_INSTRUMENT, LABEL_POLYP, BoundingBox

_KNOWN_LABELS = (LABEL_POLYP, LABEL_INSTRUMENT)


@dataclass(frozen=True)
class LabeledBox:
    box: BoundingBox
    label: str = LABEL_POLYP

    def __post_init__(self) -> None:
        if self.label not in _KNOWN_LABELS:
            raise ValueError(f"unknown label {self.label!r}, expected one of {_KNOWN_LABELS}")


@dataclass(frozen=True)
class FrameAnnotation:
    """All ground-truth boxes for one frame of one video."""

    video_id: str
    frame_index: int
    boxes: tuple[LabeledBox, ...]

    def polyp_boxes(self) -> list[BoundingBox]:
        return [lb.box for lb in self.boxes if lb.label == LABEL_POLYP]


def annotation_to_dict(annotation: FrameAnnotation) -> dict:
    return {
        "video_id": annotation.video_id,
        "frame_index": annotation.frame_index,
        "boxes": [
            {"x": lb.box.x, "y": lb.box.y, "w": lb.box.w, "h": lb.box.h, "label": lb.label}
            for lb in annotation.boxes
        ],
    }


def annotation_from_dict(row: Mapping) -> FrameAnnotation:
    try:
        boxes = tuple(
            LabeledBox(
                BoundingBox(int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"])),
                str(b.get("label", LABEL_POLYP)),
            )
            for b in row["boxes"]
        )
        return FrameAnnotation(str(row["video_id"]), int(row["frame_index"]), boxes)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad annotation row: {exc}") from exc


def load_annotations(path: str | Path) -> list[FrameAnnotation]:
    """Read an annotations JSONL file; raises DataFormatError naming the bad line."""
    annotations = []
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
                annotations.append(annotation_from_dict(row))
            except DataFormatError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return annotations


def save_annotations(path: str | Path, annotations: Iterable[FrameAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for annotation in annotations:
            fh.write(json.dumps(annotation_to_dict(annotation), separators=(",", ":")))
            fh.write("\n")


def annotations_by_frame(
    annotations: Sequence[FrameAnnotation], video_id: str | None = None
) -> dict[int, FrameAnnotation]:
    """Index annotations by frame, optionally restricted to one video."""
    indexed: dict[int, FrameAnnotation] = {}
    for annotation in annotations:
        if video_id is not None and annotation.video_id != video_id:
            continue
        if annotation.frame_index in indexed:
            raise DataFormatError(
                f"duplicate annotation for frame {annotation.frame_index}"
                + (f" of video {video_id}" if video_id else "")
            )
        indexed[annotation.frame_index] = annotation
    return indexed
