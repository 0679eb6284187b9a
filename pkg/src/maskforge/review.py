"""Review queue sampling and the audited verdict store.

Sampling follows the manual-evaluation protocol: at most one annotation per
entity, then an exact per-split entity draw, all seeded. The store keeps one
live verdict per item plus a full overwrite history, persisted as an
append-only log next to a snapshot file.
"""

from __future__ import annotations

import json
import random
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .assembly import AnnotationRecord
from .masks import RleMask
from .references import KnowledgeBase

VERDICTS = ("pending", "correct", "incorrect")


class InsufficientEntities(ValueError):
    """A split has fewer distinct entities than the requested sample size."""

    def __init__(self, split: str, requested: int, available: int):
        super().__init__(
            f"split {split!r}: requested {requested} entities, only {available} available"
        )
        self.split = split
        self.requested = requested
        self.available = available
        self.deficit = requested - available


class VerdictConflict(ValueError):
    """Verdict posted for an item that is no longer pending."""


class UnknownItem(KeyError):
    pass


@dataclass(frozen=True)
class ReviewItem:
    annotation_id: int
    image_ref: str
    rle: RleMask
    entity_id: str
    entity_label: str
    hypernyms: tuple[str, ...]
    reference_kind: str
    source_model: str
    split: str
    query: str = ""
    verdict: str = "pending"
    note: str = ""
    reviewed_at: Optional[float] = None

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_json(self) -> dict:
        return {
            "annotation_id": self.annotation_id,
            "image_ref": self.image_ref,
            "rle": self.rle.to_json(),
            "entity_id": self.entity_id,
            "entity_label": self.entity_label,
            "hypernyms": list(self.hypernyms),
            "reference_kind": self.reference_kind,
            "source_model": self.source_model,
            "split": self.split,
            "query": self.query,
            "verdict": self.verdict,
            "note": self.note,
            "reviewed_at": self.reviewed_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewItem":
        return cls(
            annotation_id=int(obj["annotation_id"]),
            image_ref=obj["image_ref"],
            rle=RleMask.from_json(obj["rle"]),
            entity_id=obj["entity_id"],
            entity_label=obj["entity_label"],
            hypernyms=tuple(obj.get("hypernyms", [])),
            reference_kind=obj.get("reference_kind", ""),
            source_model=obj.get("source_model", ""),
            split=obj.get("split", "entity"),
            query=obj.get("query", ""),
            verdict=obj.get("verdict", "pending"),
            note=obj.get("note", ""),
            reviewed_at=obj.get("reviewed_at"),
        )


def sample_review_queue(
    records: list[AnnotationRecord],
    kb: KnowledgeBase,
    sizes: dict[str, int],
    seed: int = 0,
) -> list[ReviewItem]:
    """Draw the manual-evaluation queue: per split, one record per entity,
    then exactly sizes[split] entities, deterministic under seed."""
    by_split_entity: dict[str, dict[str, list[AnnotationRecord]]] = defaultdict(
        lambda: defaultdict(list)
    )
    for rec in records:
        by_split_entity[rec.split][rec.entity_id].append(rec)

    queue: list[ReviewItem] = []
    for split in sorted(sizes):
        requested = sizes[split]
        entities = by_split_entity.get(split, {})
        if len(entities) < requested:
            raise InsufficientEntities(split, requested, len(entities))
        chosen_entities = random.Random(f"{seed}:{split}").sample(sorted(entities), requested)
        for entity_id in chosen_entities:
            candidates = sorted(entities[entity_id], key=lambda r: r.annotation_id)
            pick = random.Random(f"{seed}:{split}:{entity_id}").randrange(len(candidates))
            rec = candidates[pick]
            entity = kb[rec.entity_id]
            queue.append(
                ReviewItem(
                    annotation_id=rec.annotation_id,
                    image_ref=rec.image_ref,
                    rle=rec.rle,
                    entity_id=rec.entity_id,
                    entity_label=entity.label,
                    hypernyms=entity.hypernyms,
                    reference_kind=rec.provenance.reference_kind,
                    source_model=rec.provenance.source_model,
                    split=rec.split,
                    query=rec.query,
                )
            )
    queue.sort(key=lambda item: item.annotation_id)
    return queue


def write_queue(queue: list[ReviewItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in queue:
            fh.write(json.dumps(item.to_json(), sort_keys=True) + "\n")


def read_queue(path: str | Path) -> list[ReviewItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                items.append(ReviewItem.from_json(json.loads(line)))
    return items


@dataclass
class AuditEntry:
    annotation_id: int
    verdict: str
    note: str
    at: float
    prior_verdict: str
    prior_note: str

    def to_json(self) -> dict:
        return {
            "annotation_id": self.annotation_id,
            "verdict": self.verdict,
            "note": self.note,
            "at": self.at,
            "prior_verdict": self.prior_verdict,
            "prior_note": self.prior_note,
        }


class ReviewStore:
    """Verdict store with append-audit persistence and serialized writes."""

    SNAPSHOT_EVERY = 50

    def __init__(self, queue: list[ReviewItem], store_dir: str | Path):
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._writes_since_snapshot = 0
        self.items: dict[int, ReviewItem] = {item.annotation_id: item for item in queue}
        self.order: list[int] = [item.annotation_id for item in queue]
        self.history: list[AuditEntry] = []
        self._replay_log()

    @property
    def log_path(self) -> Path:
        return self.store_dir / "verdicts.log.jsonl"

    @property
    def snapshot_path(self) -> Path:
        return self.store_dir / "snapshot.jsonl"

    def _replay_log(self) -> None:
        if not self.log_path.exists():
            return
        with open(self.log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                annotation_id = int(entry["annotation_id"])
                if annotation_id in self.items:
                    self.items[annotation_id] = replace(
                        self.items[annotation_id],
                        verdict=entry["verdict"],
                        note=entry["note"],
                        reviewed_at=entry["at"],
                    )
                    self.history.append(AuditEntry(**entry))

    def get(self, annotation_id: int) -> ReviewItem:
        try:
            return self.items[annotation_id]
        except KeyError:
            raise UnknownItem(str(annotation_id)) from None

    def list_items(
        self, status: Optional[str] = None, limit: int = 50, offset: int = 0
    ) -> tuple[list[ReviewItem], int]:
        selected = [
            self.items[i] for i in self.order if status is None or self.items[i].verdict == status
        ]
        return selected[offset : offset + limit], len(selected)

    def record_verdict(
        self, annotation_id: int, verdict: str, note: str = "", force: bool = False
    ) -> ReviewItem:
        if verdict not in ("correct", "incorrect"):
            raise ValueError(f"verdict must be correct|incorrect, got {verdict!r}")
        with self._lock:
            item = self.get(annotation_id)
            if item.verdict != "pending" and not force:
                raise VerdictConflict(
                    f"item {annotation_id} already reviewed as {item.verdict}"
                )
            now = time.time()
            entry = AuditEntry(
                annotation_id=annotation_id,
                verdict=verdict,
                note=note,
                at=now,
                prior_verdict=item.verdict,
                prior_note=item.note,
            )
            updated = replace(item, verdict=verdict, note=note, reviewed_at=now)
            self.items[annotation_id] = updated
            self.history.append(entry)
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
            # the log is the durable record; the snapshot is refreshed in batches
            self._writes_since_snapshot += 1
            if self._writes_since_snapshot >= self.SNAPSHOT_EVERY:
                self._write_snapshot()
            return updated

    def flush(self) -> None:
        with self._lock:
            self._write_snapshot()

    def _write_snapshot(self) -> None:
        self._writes_since_snapshot = 0
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for annotation_id in self.order:
                fh.write(json.dumps(self.items[annotation_id].to_json(), sort_keys=True) + "\n")
        tmp.replace(self.snapshot_path)

    def report(self) -> dict:
        """Accuracy per reference kind x model, plus the overall row.

        Cells cover reviewed items only; percent is rounded to one decimal.
        """
        cells: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])
        for item in self.items.values():
            if item.verdict == "pending":
                continue
            cell = cells[(item.reference_kind, item.source_model)]
            cell[1] += 1
            if item.verdict == "correct":
                cell[0] += 1
        kinds = sorted({k for k, _ in cells})
        models = sorted({m for _, m in cells})
        table: dict[str, dict[str, dict]] = {}
        for kind in kinds:
            table[kind] = {}
            for model in models:
                if (kind, model) in cells:
                    correct, reviewed = cells[(kind, model)]
                    table[kind][model] = {
                        "correct": correct,
                        "reviewed": reviewed,
                        "accuracy": correct / reviewed,
                        "percent": round(100.0 * correct / reviewed, 1),
                    }
        total_correct = sum(c for c, _ in cells.values())
        total_reviewed = sum(r for _, r in cells.values())
        overall = None
        if total_reviewed:
            overall = {
                "correct": total_correct,
                "reviewed": total_reviewed,
                "accuracy": total_correct / total_reviewed,
                "percent": round(100.0 * total_correct / total_reviewed, 1),
            }
        return {
            "cells": table,
            "models": models,
            "kinds": kinds,
            "overall": overall,
            "pending": sum(1 for i in self.items.values() if i.verdict == "pending"),
            "total": len(self.items),
        }
