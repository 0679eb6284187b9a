"""Assemble filter verdicts into COCO-format dataset files, with split
bookkeeping, per-entity caps, and corpus statistics.

All JSON is emitted canonically (sorted keys, no timestamps) so reruns are
byte-identical.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .filtering import FilterVerdict
from .masks import RleMask
from .references import SPLITS, KnowledgeBase, MentionTask


class UnknownEntity(KeyError):
    """A verdict references an entity missing from the knowledge base."""


class DuplicateAnnotation(ValueError):
    """Two annotations were assigned the same id."""


@dataclass(frozen=True)
class Provenance:
    rule_fired: str = "none"
    source_model: str = ""
    reference_kind: str = ""

    def to_json(self) -> dict:
        return {
            "rule_fired": self.rule_fired,
            "source_model": self.source_model,
            "reference_kind": self.reference_kind,
        }


@dataclass(frozen=True)
class AnnotationRecord:
    annotation_id: int
    mention_id: str
    image_ref: str
    height: int
    width: int
    entity_id: str
    rle: RleMask
    query: str
    split: str
    seen: str
    provenance: Provenance = Provenance()

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.seen not in ("seen", "unseen"):
            raise ValueError(f"seen flag must be 'seen' or 'unseen', got {self.seen!r}")
        if (self.rle.height, self.rle.width) != (self.height, self.width):
            raise ValueError(
                f"rle {self.rle.height}x{self.rle.width} does not match "
                f"image {self.height}x{self.width}"
            )

    @property
    def area_ratio(self) -> float:
        return self.rle.area / (self.height * self.width)


@dataclass
class SplitManifest:
    """Seen/unseen entity lists per split. Entities not listed are unseen."""

    seen: dict[str, frozenset[str]] = field(default_factory=dict)
    unseen: dict[str, frozenset[str]] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        manifest = cls()
        for split, lists in raw.items():
            if split not in SPLITS:
                raise ValueError(f"manifest names unknown split {split!r}")
            manifest.seen[split] = frozenset(lists.get("seen", []))
            manifest.unseen[split] = frozenset(lists.get("unseen", []))
        return manifest

    def seen_flag(self, split: str, entity_id: str) -> str:
        if entity_id in self.seen.get(split, frozenset()):
            return "seen"
        return "unseen"


@dataclass
class SplitSummary:
    """Entity and example counts per split x seen/unseen, plus totals."""

    entities: dict[str, dict[str, int]] = field(default_factory=dict)
    examples: dict[str, dict[str, int]] = field(default_factory=dict)

    @classmethod
    def tally(cls, records: list[AnnotationRecord]) -> "SplitSummary":
        summary = cls()
        per_cell_entities: dict[tuple[str, str], set[str]] = defaultdict(set)
        per_cell_examples: Counter[tuple[str, str]] = Counter()
        for rec in records:
            per_cell_entities[(rec.split, rec.seen)].add(rec.entity_id)
            per_cell_examples[(rec.split, rec.seen)] += 1
        for split in SPLITS:
            summary.entities[split] = {
                flag: len(per_cell_entities[(split, flag)]) for flag in ("seen", "unseen")
            }
            summary.examples[split] = {
                flag: per_cell_examples[(split, flag)] for flag in ("seen", "unseen")
            }
        return summary

    def split_total(self, split: str) -> int:
        return sum(self.examples[split].values())

    @property
    def total_examples(self) -> int:
        return sum(self.split_total(s) for s in SPLITS)

    def to_json(self) -> dict:
        return {
            "splits": {
                split: {
                    "seen_entities": self.entities[split]["seen"],
                    "unseen_entities": self.entities[split]["unseen"],
                    "seen_examples": self.examples[split]["seen"],
                    "unseen_examples": self.examples[split]["unseen"],
                    "total_examples": self.split_total(split),
                }
                for split in SPLITS
            },
            "total_examples": self.total_examples,
        }

    def render_table(self) -> str:
        """Aligned text table: one column per split, the familiar five rows."""
        headers = ["", *[s.capitalize() for s in SPLITS], "Total"]
        rows = [
            ["# SEEN entities"] + [str(self.entities[s]["seen"]) for s in SPLITS]
            + [str(sum(self.entities[s]["seen"] for s in SPLITS))],
            ["# SEEN examples"] + [str(self.examples[s]["seen"]) for s in SPLITS]
            + [str(sum(self.examples[s]["seen"] for s in SPLITS))],
            ["# UNSEEN entities"] + [str(self.entities[s]["unseen"]) for s in SPLITS]
            + [str(sum(self.entities[s]["unseen"] for s in SPLITS))],
            ["# UNSEEN examples"] + [str(self.examples[s]["unseen"]) for s in SPLITS]
            + [str(sum(self.examples[s]["unseen"] for s in SPLITS))],
            ["# Total examples"] + [str(self.split_total(s)) for s in SPLITS]
            + [str(self.total_examples)],
        ]
        widths = [max(len(r[i]) for r in [headers, *rows]) for i in range(len(headers))]
        lines = []
        for row in [headers, *rows]:
            cells = [row[0].ljust(widths[0])] + [
                cell.rjust(widths[i]) for i, cell in enumerate(row) if i > 0
            ]
            lines.append("  ".join(cells).rstrip())
        return "\n".join(lines) + "\n"


def assemble(
    verdicts: list[FilterVerdict],
    tasks: dict[str, MentionTask],
    kb: KnowledgeBase,
    manifest: SplitManifest,
) -> tuple[dict[str, list[AnnotationRecord]], SplitSummary]:
    """Turn accepted/corrected verdicts into per-split annotation records.

    Annotation ids are assigned sequentially over verdicts sorted by
    mention_id, so output is independent of verdict arrival order.
    """
    records: dict[str, list[AnnotationRecord]] = {split: [] for split in SPLITS}
    next_id = 1
    seen_ids: set[int] = set()
    for verdict in sorted(verdicts, key=lambda v: v.mention_id):
        if verdict.outcome == "dropped":
            continue
        task = tasks[verdict.mention_id]
        if task.entity_id not in kb:
            raise UnknownEntity(task.entity_id)
        if next_id in seen_ids:
            raise DuplicateAnnotation(str(next_id))
        seen_ids.add(next_id)
        assert verdict.final_mask is not None
        records[task.split].append(
            AnnotationRecord(
                annotation_id=next_id,
                mention_id=verdict.mention_id,
                image_ref=task.image_ref,
                height=verdict.final_mask.height,
                width=verdict.final_mask.width,
                entity_id=task.entity_id,
                rle=verdict.final_mask,
                query=task.raw_query,
                split=task.split,
                seen=manifest.seen_flag(task.split, task.entity_id),
                provenance=Provenance(
                    rule_fired=verdict.rule_fired,
                    source_model=verdict.source_model,
                    reference_kind=verdict.source_kind,
                ),
            )
        )
        next_id += 1
    summary = SplitSummary.tally([r for recs in records.values() for r in recs])
    return records, summary


def cap_per_entity(
    records: list[AnnotationRecord], cap: int = 50, seed: int = 0
) -> list[AnnotationRecord]:
    """Uniformly subsample each entity down to at most `cap` records.

    Selection is seeded per entity, so it is stable under record reordering
    and insensitive to other entities' counts.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    by_entity: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for rec in records:
        by_entity[rec.entity_id].append(rec)
    keep: set[int] = set()
    for entity_id, recs in by_entity.items():
        if len(recs) <= cap:
            keep.update(r.annotation_id for r in recs)
            continue
        ordered = sorted(recs, key=lambda r: r.annotation_id)
        rng = random.Random(f"{seed}:{entity_id}")
        keep.update(r.annotation_id for r in rng.sample(ordered, cap))
    return [r for r in records if r.annotation_id in keep]


def area_ratio_histogram(records: list[AnnotationRecord], bins: int = 20) -> list[int]:
    """Equal-width histogram of mention-area / image-area over [0, 1].

    Full-image masks (ratio 1.0) land in the last bin.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts = [0] * bins
    for rec in records:
        index = min(int(rec.area_ratio * bins), bins - 1)
        counts[index] += 1
    return counts


def category_distribution(
    records: list[AnnotationRecord],
    kb: KnowledgeBase,
    primary_categories: Optional[set[str]] = None,
    max_categories: int = 10,
) -> dict[str, int]:
    """Record counts by entity category, lumping the tail under "others".

    With no explicit primary set, the `max_categories` most frequent
    categories are kept and the rest grouped.
    """
    raw: Counter[str] = Counter()
    for rec in records:
        entity = kb.get(rec.entity_id)
        if entity is None:
            raise UnknownEntity(rec.entity_id)
        raw[entity.category or "others"] += 1
    if primary_categories is None:
        ranked = sorted(raw.items(), key=lambda kv: (-kv[1], kv[0]))
        primary_categories = {cat for cat, _ in ranked[:max_categories] if cat != "others"}
    out: dict[str, int] = {}
    for cat, count in raw.items():
        key = cat if cat in primary_categories else "others"
        out[key] = out.get(key, 0) + count
    return dict(sorted(out.items()))


def _canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _mask_bbox(rle: RleMask) -> list[int]:
    """Tight [x, y, w, h] around the set pixels; zeros for an empty mask."""
    from .masks import rle_decode
    import numpy as np

    bits = rle_decode(rle).bits
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        return [0, 0, 0, 0]
    return [
        int(cols[0]),
        int(rows[0]),
        int(cols[-1] - cols[0] + 1),
        int(rows[-1] - rows[0] + 1),
    ]


def coco_document(records: list[AnnotationRecord], kb: KnowledgeBase, split: str) -> dict:
    """COCO-shaped document for one split; categories are entities."""
    image_ids: dict[str, int] = {}
    images = []
    for ref in sorted({r.image_ref for r in records}):
        image_ids[ref] = len(image_ids) + 1
    dims: dict[str, tuple[int, int]] = {}
    for rec in records:
        dims[rec.image_ref] = (rec.height, rec.width)
    for ref, image_id in image_ids.items():
        h, w = dims[ref]
        images.append({"id": image_id, "file_name": ref, "height": h, "width": w})

    category_ids: dict[str, int] = {}
    categories = []
    for entity_id in sorted({r.entity_id for r in records}):
        category_ids[entity_id] = len(category_ids) + 1
        categories.append(
            {"id": category_ids[entity_id], "name": kb[entity_id].label, "entity_id": entity_id}
        )

    annotations = []
    for rec in sorted(records, key=lambda r: r.annotation_id):
        annotations.append(
            {
                "id": rec.annotation_id,
                "image_id": image_ids[rec.image_ref],
                "category_id": category_ids[rec.entity_id],
                "segmentation": rec.rle.to_json(),
                "area": rec.rle.area,
                "bbox": _mask_bbox(rec.rle),
                "iscrowd": 0,
                "mention_id": rec.mention_id,
                "query": rec.query,
                "seen": rec.seen,
                "provenance": rec.provenance.to_json(),
            }
        )
    return {
        "info": {
            "description": f"pixel-mask entity annotations, {split} split",
            "split": split,
            "version": "1",
        },
        "images": images,
        "annotations": annotations,
        "categories": categories,
    }


def write_coco_files(
    records_by_split: dict[str, list[AnnotationRecord]],
    kb: KnowledgeBase,
    summary: SplitSummary,
    out_dir: str | Path,
) -> list[Path]:
    """Emit one COCO file per non-empty split plus the summary (JSON + text)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for split in SPLITS:
        records = records_by_split.get(split, [])
        if not records:
            continue
        path = out_dir / f"{split}.json"
        path.write_text(_canonical_dumps(coco_document(records, kb, split)) + "\n", encoding="utf-8")
        written.append(path)
    summary_json = out_dir / "summary.json"
    summary_json.write_text(_canonical_dumps(summary.to_json()) + "\n", encoding="utf-8")
    summary_txt = out_dir / "summary.txt"
    summary_txt.write_text(summary.render_table(), encoding="utf-8")
    written.extend([summary_json, summary_txt])
    return written


def read_coco_records(path: str | Path) -> list[AnnotationRecord]:
    """Rehydrate AnnotationRecords from an emitted COCO file."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    images = {img["id"]: img for img in doc["images"]}
    entity_by_cat = {c["id"]: c["entity_id"] for c in doc["categories"]}
    split = doc.get("info", {}).get("split")
    if split is None:
        stem = Path(path).stem
        split = stem if stem in SPLITS else "entity"
    records = []
    for ann in doc["annotations"]:
        img = images[ann["image_id"]]
        records.append(
            AnnotationRecord(
                annotation_id=ann["id"],
                mention_id=ann["mention_id"],
                image_ref=img["file_name"],
                height=img["height"],
                width=img["width"],
                entity_id=entity_by_cat[ann["category_id"]],
                rle=RleMask.from_json(ann["segmentation"]),
                query=ann["query"],
                split=split,
                seen=ann["seen"],
                provenance=Provenance(
                    rule_fired=ann["provenance"]["rule_fired"],
                    source_model=ann["provenance"]["source_model"],
                    reference_kind=ann["provenance"]["reference_kind"],
                ),
            )
        )
    return records
