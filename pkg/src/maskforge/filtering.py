"""Ensemble filtering and correction of mask annotations.

Four rules run in a fixed order per mention: non-visual drop, pipeline-error
correction via cross-source agreement, full-image correction for low-confidence
geo-visual entities, and dense-scene mask inversion. Drops short-circuit;
corrections compose left to right on the working mask.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ingest import Detection, DetectionSet
from .masks import (
    BinaryMask,
    RleMask,
    box_to_mask,
    connected_components,
    dilate,
    erode,
    intersect_box_mask,
    invert,
    iou,
    rle_decode,
    rle_encode,
)
from .references import EntityRecord, MentionTask

OUTCOMES = ("accepted", "corrected", "dropped")
RULES = ("none", "non_visual", "pipeline_error", "incomplete_location", "dense_inversion")

# Non-visual entity types dropped outright. "location" is deliberately NOT in
# this set: geo-visual location/building entities flow on to the full-image
# correction rule instead; move it here to drop them.
DEFAULT_EXCLUDED_CATEGORIES = frozenset({"time", "method", "event", "game", "technology"})
DEFAULT_EXCLUDED_INTERROGATIVES = frozenset({"when", "how", "why"})
DEFAULT_LOCATION_CATEGORIES = frozenset({"location", "building"})


class NoDetections(RuntimeError):
    """Every detection source for a mention came back empty."""


@dataclass(frozen=True)
class FilterConfig:
    iou_agreement_threshold: float = 0.5
    location_confidence_threshold: float = 0.5
    dense_component_threshold: int = 5
    dense_coverage_fraction: float = 0.7
    morphology_radius: int = 1
    excluded_categories: frozenset[str] = DEFAULT_EXCLUDED_CATEGORIES
    excluded_interrogatives: frozenset[str] = DEFAULT_EXCLUDED_INTERROGATIVES
    location_categories: frozenset[str] = DEFAULT_LOCATION_CATEGORIES

    def __post_init__(self) -> None:
        for name in ("iou_agreement_threshold", "location_confidence_threshold",
                     "dense_coverage_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.dense_component_threshold < 1:
            raise ValueError("dense_component_threshold must be >= 1")
        if self.morphology_radius < 0:
            raise ValueError("morphology_radius must be >= 0")
        object.__setattr__(self, "excluded_categories", frozenset(self.excluded_categories))
        object.__setattr__(
            self, "excluded_interrogatives", frozenset(self.excluded_interrogatives)
        )
        object.__setattr__(self, "location_categories", frozenset(self.location_categories))


@dataclass(frozen=True)
class FilterVerdict:
    mention_id: str
    outcome: str
    rule_fired: str
    final_mask: Optional[RleMask]
    agreement_iou: float
    notes: str = ""
    source_kind: str = ""
    source_model: str = ""

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.rule_fired not in RULES:
            raise ValueError(f"unknown rule {self.rule_fired!r}")
        if (self.outcome == "dropped") != (self.final_mask is None):
            raise ValueError("dropped verdicts and only dropped verdicts lack a mask")
        if (self.rule_fired == "none") != (self.outcome == "accepted"):
            raise ValueError("rule_fired=none iff outcome=accepted")

    def to_json(self) -> dict:
        return {
            "mention_id": self.mention_id,
            "outcome": self.outcome,
            "rule_fired": self.rule_fired,
            "final_mask": self.final_mask.to_json() if self.final_mask else None,
            "agreement_iou": self.agreement_iou,
            "notes": self.notes,
            "source_kind": self.source_kind,
            "source_model": self.source_model,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FilterVerdict":
        mask = obj.get("final_mask")
        return cls(
            mention_id=obj["mention_id"],
            outcome=obj["outcome"],
            rule_fired=obj["rule_fired"],
            final_mask=RleMask.from_json(mask) if mask else None,
            agreement_iou=float(obj["agreement_iou"]),
            notes=obj.get("notes", ""),
            source_kind=obj.get("source_kind", ""),
            source_model=obj.get("source_model", ""),
        )


@dataclass
class _Sources:
    """Detections regrouped by (reference_kind, source_model)."""

    height: int
    width: int
    by_key: dict[tuple[str, str], list[Detection]] = field(default_factory=dict)

    @classmethod
    def gather(cls, sets: list[DetectionSet]) -> "_Sources":
        if not sets:
            raise NoDetections("no detection sets supplied")
        src = cls(sets[0].height, sets[0].width)
        for ds in sets:
            if (ds.height, ds.width) != (src.height, src.width):
                raise ValueError("detection sets disagree on image size")
            for det in ds.detections:
                src.by_key.setdefault((det.reference_kind, det.source_model), []).append(det)
        for dets in src.by_key.values():
            dets.sort(key=lambda d: -d.confidence)
        return src

    @property
    def keys(self) -> list[tuple[str, str]]:
        return sorted(self.by_key)

    def top(self, key: tuple[str, str]) -> Detection:
        return self.by_key[key][0]

    def best_detection(self) -> tuple[tuple[str, str], Detection]:
        """Highest-confidence per-source top; deterministic tie-break on key."""
        best_key = max(self.keys, key=lambda k: (self.top(k).confidence, k))
        return best_key, self.top(best_key)

    def all_detections(self) -> list[Detection]:
        return [d for k in self.keys for d in self.by_key[k]]


def rule_non_visual(task: MentionTask, entity: EntityRecord, cfg: FilterConfig) -> Optional[str]:
    """Drop reason for non-visual mentions, or None.

    Fires on excluded entity categories and on queries opening with an
    excluded interrogative (case-insensitive first word).
    """
    if entity.category in cfg.excluded_categories:
        return f"entity category {entity.category!r} excluded"
    words = task.raw_query.strip().lower().split()
    if words and words[0].strip(".,!?") in cfg.excluded_interrogatives:
        return f"query opens with interrogative {words[0]!r}"
    return None


def _box_score(det: Detection, e2e_mask: BinaryMask) -> float:
    assert det.box is not None
    return det.confidence * intersect_box_mask(det.box, e2e_mask) / det.box.area


def rule_pipeline_error(
    sets: list[DetectionSet], cfg: FilterConfig
) -> tuple[Optional[BinaryMask], float, str]:
    """Agreement check across sources and, on disagreement, box-resampled
    correction.

    Returns (corrected mask or None, agreement IOU, note). Agreement is the
    max pairwise IOU between the top-confidence masks of each
    (reference kind, model) source; a single source trivially agrees with
    itself. The correction picks the pipeline box maximizing
    confidence * (intersection with the best end-to-end mask / box area),
    then clips that detection's best-overlapping pipeline mask to the box.
    """
    sources = _Sources.gather(sets)
    if not sources.by_key:
        raise NoDetections("every source is empty")
    tops = {key: rle_decode(sources.top(key).mask) for key in sources.keys}
    if len(tops) < 2:
        return None, 1.0, "single source, agreement not checkable"
    agreement = max(
        iou(tops[a], tops[b]) for a, b in itertools.combinations(sources.keys, 2)
    )
    if agreement >= cfg.iou_agreement_threshold:
        return None, agreement, ""

    e2e_keys = [k for k in sources.keys if k[1] == "end_to_end"]
    pipe_keys = [k for k in sources.keys if k[1] == "pipeline"]
    boxed = [d for d in sources.all_detections() if d.source_model == "pipeline" and d.box]
    if not e2e_keys or not boxed:
        if not e2e_keys and pipe_keys:
            keep_key = max(pipe_keys, key=lambda k: (sources.top(k).confidence, k))
            note = "disagreement but no end-to-end mask to correct against; kept top pipeline mask"
        else:
            keep_key, _ = sources.best_detection()
            note = "disagreement but no pipeline boxes; kept top mask"
        return rle_decode(sources.top(keep_key).mask), agreement, note

    e2e_best = max((sources.top(k) for k in e2e_keys), key=lambda d: d.confidence)
    e2e_mask = rle_decode(e2e_best.mask)
    chosen = max(
        enumerate(boxed), key=lambda pair: (_box_score(pair[1], e2e_mask), -pair[0])
    )[1]
    box_mask = box_to_mask(chosen.box, sources.height, sources.width)
    overlap = max(
        (d for d in sources.all_detections() if d.source_model == "pipeline"),
        key=lambda d: intersect_box_mask(chosen.box, rle_decode(d.mask)),
    )
    corrected = BinaryMask(
        sources.height,
        sources.width,
        np.logical_and(rle_decode(overlap.mask).bits, box_mask.bits),
    )
    return corrected, agreement, "box resampled against end-to-end mask"


def rule_incomplete_location(
    task: MentionTask, entity: EntityRecord, best: Detection, cfg: FilterConfig
) -> Optional[BinaryMask]:
    """Full-image mask for geo-visual entities segmented with low confidence."""
    if entity.category not in cfg.location_categories:
        return None
    if best.confidence >= cfg.location_confidence_threshold:
        return None
    return BinaryMask.ones(best.mask.height, best.mask.width)


def _box_coverage(sources: _Sources) -> float:
    """Max over reference kinds of (union of that kind's boxes) / image area."""
    best = 0.0
    kinds = {k[0] for k in sources.by_key}
    for kind in kinds:
        union = np.zeros((sources.height, sources.width), dtype=bool)
        any_box = False
        for (k, _), dets in sources.by_key.items():
            if k != kind:
                continue
            for det in dets:
                if det.box is not None:
                    any_box = True
                    union[det.box.y : det.box.y + det.box.h, det.box.x : det.box.x + det.box.w] = True
        if any_box:
            best = max(best, union.sum() / (sources.height * sources.width))
    return best


def rule_dense_inversion(
    sets: list[DetectionSet], candidate: BinaryMask, cfg: FilterConfig
) -> Optional[BinaryMask]:
    """Invert a foreground/background-confused mask in a dense scene.

    Fires only when boxes of one reference kind cover at least the configured
    fraction of the image AND the opened candidate (erode then dilate) splits
    into more components than the threshold.
    """
    sources = _Sources.gather(sets)
    if _box_coverage(sources) < cfg.dense_coverage_fraction:
        return None
    opened = dilate(erode(candidate, cfg.morphology_radius), cfg.morphology_radius)
    count, _ = connected_components(opened)
    if count <= cfg.dense_component_threshold:
        return None
    return invert(candidate)


def run_filters(
    task: MentionTask,
    entity: EntityRecord,
    sets: list[DetectionSet],
    cfg: FilterConfig = FilterConfig(),
) -> FilterVerdict:
    """Apply all rules for one mention and return its verdict.

    Order: non_visual -> pipeline_error -> incomplete_location ->
    dense_inversion. The first drop wins; corrections compose on the working
    mask. rule_fired records the last rule that fired (all fired rules appear
    in notes). Deterministic for identical inputs.
    """
    reason = rule_non_visual(task, entity, cfg)
    if reason is not None:
        return FilterVerdict(
            mention_id=task.mention_id,
            outcome="dropped",
            rule_fired="non_visual",
            final_mask=None,
            agreement_iou=0.0,
            notes=reason,
        )

    try:
        sources = _Sources.gather(sets)
        if not sources.by_key:
            raise NoDetections("every source is empty")
        corrected, agreement, note = rule_pipeline_error(sets, cfg)
    except NoDetections as exc:
        return FilterVerdict(
            mention_id=task.mention_id,
            outcome="dropped",
            rule_fired="pipeline_error",
            final_mask=None,
            agreement_iou=0.0,
            notes=str(exc),
        )

    fired: list[str] = []
    notes: list[str] = [note] if note else []
    best_key, best = sources.best_detection()
    if corrected is not None:
        mask = corrected
        fired.append("pipeline_error")
    else:
        mask = rle_decode(best.mask)

    loc = rule_incomplete_location(task, entity, best, cfg)
    if loc is not None:
        mask = loc
        fired.append("incomplete_location")
        notes.append(f"low-confidence {entity.category} ({best.confidence:.2f}); full-image mask")

    dense = rule_dense_inversion(sets, mask, cfg)
    if dense is not None:
        mask = dense
        fired.append("dense_inversion")
        notes.append("dense scene: opened mask shattered; inverted")

    if fired:
        notes.insert(0, "fired: " + ",".join(fired))
    return FilterVerdict(
        mention_id=task.mention_id,
        outcome="corrected" if fired else "accepted",
        rule_fired=fired[-1] if fired else "none",
        final_mask=rle_encode(mask),
        agreement_iou=agreement,
        notes="; ".join(notes),
        source_kind=best_key[0],
        source_model=best_key[1],
    )


def write_verdict_log(verdicts: list[FilterVerdict], path) -> None:
    """Line-delimited verdict log, sorted by mention_id for determinism."""
    with open(path, "w", encoding="utf-8") as fh:
        for verdict in sorted(verdicts, key=lambda v: v.mention_id):
            fh.write(json.dumps(verdict.to_json(), sort_keys=True) + "\n")


def read_verdict_log(path) -> list[FilterVerdict]:
    verdicts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                verdicts.append(FilterVerdict.from_json(json.loads(line)))
    return verdicts
