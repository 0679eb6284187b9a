"""Normalize segmenter outputs into DetectionSets.

Two real sources exist: a pipeline-style box-then-mask segmenter and an
end-to-end mask segmenter. Both arrive as line-delimited JSON shards; the
mock segmenter replays a scripted scenario table with the same schema for
offline tests and fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .masks import BBox, InvalidBox, MalformedRle, RleMask
from .references import REFERENCE_KINDS, MentionTask, TextReference

SOURCE_MODELS = ("pipeline", "end_to_end", "mock")

DEFAULT_BOX_THRESHOLD = 0.3
DEFAULT_TEXT_THRESHOLD = 0.25


class SchemaError(ValueError):
    """A detection shard line is structurally unreadable."""


@dataclass(frozen=True)
class Detection:
    mask: RleMask
    confidence: float
    reference_kind: str
    source_model: str
    box: Optional[BBox] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.reference_kind not in REFERENCE_KINDS:
            raise ValueError(f"unknown reference kind {self.reference_kind!r}")
        if self.source_model not in SOURCE_MODELS:
            raise ValueError(f"unknown source model {self.source_model!r}")


@dataclass
class DetectionSet:
    mention_id: str
    height: int
    width: int
    detections: list[Detection] = field(default_factory=list)

    def __post_init__(self) -> None:
        for det in self.detections:
            if (det.mask.height, det.mask.width) != (self.height, self.width):
                raise ValueError(
                    f"detection mask {det.mask.height}x{det.mask.width} does not "
                    f"match image {self.height}x{self.width}"
                )


@dataclass
class IngestStats:
    records: int = 0
    kept: int = 0
    dropped: int = 0
    skipped: int = 0

    def merge(self, other: "IngestStats") -> "IngestStats":
        return IngestStats(
            self.records + other.records,
            self.kept + other.kept,
            self.dropped + other.dropped,
            self.skipped + other.skipped,
        )


def _parse_detection(
    entry: Any,
    image_h: int,
    image_w: int,
    reference_kind: str,
    source_model: str,
    require_box: bool,
) -> Detection:
    score = float(entry["score"])
    mask = RleMask.from_json(entry["rle"])
    if (mask.height, mask.width) != (image_h, image_w):
        raise MalformedRle(
            f"mask {mask.height}x{mask.width} vs image {image_h}x{image_w}"
        )
    box_field = entry.get("box")
    if box_field is None:
        if require_box:
            raise InvalidBox("pipeline detection lacks a box")
        box = None
    else:
        x, y, w, h = (int(v) for v in box_field)
        box = BBox(x, y, w, h)
        box.check_frame(image_h, image_w)
    return Detection(
        mask=mask,
        confidence=score,
        reference_kind=reference_kind,
        source_model=source_model,
        box=box,
    )


def _ingest(
    path: str | Path,
    expected_model: str,
    threshold: float,
    require_box: bool,
) -> tuple[list[DetectionSet], IngestStats]:
    stats = IngestStats()
    sets = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                mention_id = str(obj["mention_id"])
                image_h, image_w = (int(v) for v in obj["image_size"])
                model = str(obj["model"])
                kind = str(obj["reference_kind"])
                raw_detections = obj["detections"]
            except Exception as exc:
                raise SchemaError(f"{path}: record {index}: {exc}") from exc
            if model != expected_model:
                raise SchemaError(
                    f"{path}: record {index}: model {model!r}, expected {expected_model!r}"
                )
            kept = []
            for entry in raw_detections:
                stats.records += 1
                try:
                    det = _parse_detection(entry, image_h, image_w, kind, model, require_box)
                except (MalformedRle, InvalidBox, KeyError, TypeError, ValueError):
                    stats.skipped += 1
                    continue
                if det.confidence >= threshold:
                    kept.append(det)
                    stats.kept += 1
                else:
                    stats.dropped += 1
            kept.sort(key=lambda d: -d.confidence)
            sets.append(DetectionSet(mention_id, image_h, image_w, kept))
    return sets, stats


def ingest_pipeline_output(
    path: str | Path, box_threshold: float = DEFAULT_BOX_THRESHOLD
) -> tuple[list[DetectionSet], IngestStats]:
    """Read a pipeline-segmenter shard. Detections scoring below the box
    threshold are dropped (inclusive: score >= threshold is kept)."""
    return _ingest(path, "pipeline", box_threshold, require_box=True)


def ingest_end_to_end_output(
    path: str | Path, threshold: float = DEFAULT_TEXT_THRESHOLD
) -> tuple[list[DetectionSet], IngestStats]:
    """Read an end-to-end-segmenter shard; boxes are optional."""
    return _ingest(path, "end_to_end", threshold, require_box=False)


class MockSegmenter:
    """Deterministic test double for both segmenters.

    The scenario table reuses the detection-shard schema; lookups are keyed
    by (mention_id, reference_kind, model) and unknown keys produce an empty
    DetectionSet sized from any scenario of the same mention (1x1 fallback).
    """

    def __init__(self, scenarios: dict[tuple[str, str, str], DetectionSet]):
        self.scenarios = scenarios

    @classmethod
    def load(cls, path: str | Path) -> "MockSegmenter":
        scenarios: dict[tuple[str, str, str], DetectionSet] = {}
        with open(path, encoding="utf-8") as fh:
            for index, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    mention_id = str(obj["mention_id"])
                    image_h, image_w = (int(v) for v in obj["image_size"])
                    model = str(obj["model"])
                    kind = str(obj["reference_kind"])
                    detections = [
                        _parse_detection(entry, image_h, image_w, kind, model, require_box=False)
                        for entry in obj["detections"]
                    ]
                except Exception as exc:
                    raise SchemaError(f"{path}: record {index}: {exc}") from exc
                detections.sort(key=lambda d: -d.confidence)
                scenarios[(mention_id, kind, model)] = DetectionSet(
                    mention_id, image_h, image_w, detections
                )
        return cls(scenarios)

    def image_size(self, mention_id: str) -> tuple[int, int]:
        for (mid, _, _), ds in self.scenarios.items():
            if mid == mention_id:
                return (ds.height, ds.width)
        return (1, 1)

    def segment(
        self, task: MentionTask, reference: TextReference, model: str = "mock"
    ) -> DetectionSet:
        key = (task.mention_id, reference.kind, model)
        found = self.scenarios.get(key)
        if found is None:
            h, w = self.image_size(task.mention_id)
            return DetectionSet(task.mention_id, h, w, [])
        return found


def mock_segment(
    task: MentionTask,
    reference: TextReference,
    scenario_table: str | Path,
    model: str = "mock",
) -> DetectionSet:
    """One-shot convenience wrapper around MockSegmenter."""
    return MockSegmenter.load(scenario_table).segment(task, reference, model)
