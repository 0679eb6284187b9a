"""BM25 entity-name retrieval and accuracy reporting.

Free-text predictions are mapped to entities by BM25 top-1 over the entity
names; code predictions go through the codebook first. Accuracy is reported
per split and per seen/unseen cell, with unresolved predictions counted as
wrong so denominators always match dataset sizes.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .codes import Codebook
from .references import SPLITS, KnowledgeBase

_WORD = re.compile(r"[a-z0-9]+")


def analyze(text: str) -> list[str]:
    """Lowercase word tokenizer shared by indexing and querying."""
    return _WORD.findall(text.lower())


@dataclass
class NameIndex:
    postings: dict[str, list[tuple[str, int]]] = field(default_factory=dict)
    doc_len: dict[str, int] = field(default_factory=dict)
    doc_count: int = 0
    avg_len: float = 0.0
    k1: float = 1.2
    b: float = 0.75

    def idf(self, token: str) -> float:
        df = len(self.postings.get(token, ()))
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))

    def to_json(self) -> dict:
        return {
            "postings": {t: [[d, f] for d, f in plist] for t, plist in sorted(self.postings.items())},
            "doc_len": dict(sorted(self.doc_len.items())),
            "doc_count": self.doc_count,
            "avg_len": self.avg_len,
            "k1": self.k1,
            "b": self.b,
        }


def build_index(
    kb: KnowledgeBase,
    k1: float = 1.2,
    b: float = 0.75,
    include_aliases: bool = False,
) -> NameIndex:
    """Index every entity name as one document (aliases appended on demand).

    Postings are sorted by entity_id so the index is independent of KB input
    order.
    """
    index = NameIndex(k1=k1, b=b)
    for entity_id in sorted(kb.entities):
        entity = kb[entity_id]
        text = entity.label
        if include_aliases and entity.aliases:
            text += " " + " ".join(entity.aliases)
        tokens = analyze(text)
        index.doc_len[entity_id] = len(tokens)
        for token, tf in sorted(Counter(tokens).items()):
            index.postings.setdefault(token, []).append((entity_id, tf))
    index.doc_count = len(index.doc_len)
    if index.doc_count:
        index.avg_len = sum(index.doc_len.values()) / index.doc_count
    for plist in index.postings.values():
        plist.sort()
    return index


def search(index: NameIndex, query: str, k: int = 1) -> list[tuple[str, float]]:
    """Top-k (entity_id, BM25 score), descending score, ties by entity_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.doc_count == 0:
        return []
    scores: dict[str, float] = {}
    for token in analyze(query):
        plist = index.postings.get(token)
        if not plist:
            continue
        idf = index.idf(token)
        for entity_id, tf in plist:
            norm = index.k1 * (1.0 - index.b + index.b * index.doc_len[entity_id] / index.avg_len)
            scores[entity_id] = scores.get(entity_id, 0.0) + idf * (
                tf * (index.k1 + 1.0)
            ) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda pair: (-pair[1], pair[0]))
    return ranked[:k]


Prediction = Union[str, dict, "PredictionCode", None]


@dataclass(frozen=True)
class PredictionCode:
    token_ids: tuple[int, ...]


@dataclass
class PredictionRecord:
    mention_id: str
    prediction: Prediction
    gold: str
    split: str
    seen: bool
    resolved: Optional[str] = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


def resolve_prediction(
    prediction: Prediction,
    codebook: Optional[Codebook],
    index: NameIndex,
    vocab=None,
) -> Optional[str]:
    """Map a raw prediction to an entity id, or None.

    Codes hit the codebook exactly (collisions resolve to the smallest
    entity_id). A missed code falls back to BM25 over its token strings when
    a vocab is supplied; text predictions go straight to BM25 top-1.
    """
    if prediction is None:
        return None
    token_ids: Optional[tuple[int, ...]] = None
    text: Optional[str] = None
    if isinstance(prediction, PredictionCode):
        token_ids = prediction.token_ids
    elif isinstance(prediction, dict):
        raw = prediction.get("tokens")
        if raw is not None:
            token_ids = tuple(int(t) for t in raw)
        else:
            text = str(prediction.get("text", "")) or None
    else:
        text = str(prediction)
    if token_ids is not None:
        if codebook is not None:
            hits = codebook.lookup(token_ids)
            if hits:
                return hits[0]
        if vocab is not None:
            text = " ".join(vocab.token(t) for t in token_ids if 0 <= t < len(vocab)) or None
    if not text:
        return None
    top = search(index, text, k=1)
    if not top:
        return None
    return top[0][0]


def resolve_all(
    predictions: list[PredictionRecord],
    codebook: Optional[Codebook],
    index: NameIndex,
    vocab=None,
) -> list[PredictionRecord]:
    for record in predictions:
        record.resolved = resolve_prediction(record.prediction, codebook, index, vocab)
    return predictions


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    """Line-delimited {mention_id, prediction: str|{tokens:[ids]}, gold, split, seen}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                PredictionRecord(
                    mention_id=str(obj["mention_id"]),
                    prediction=obj["prediction"],
                    gold=str(obj["gold"]),
                    split=str(obj["split"]),
                    seen=bool(obj["seen"]),
                )
            )
    return records


@dataclass
class AccuracyReport:
    cells: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    @property
    def overall(self) -> Optional[float]:
        correct = sum(c for c, _ in self.cells.values())
        total = sum(t for _, t in self.cells.values())
        return correct / total if total else None

    def split_accuracy(self, split: str) -> Optional[float]:
        correct = sum(c for (s, _), (c, _) in self.cells.items() if s == split)
        total = sum(t for (s, _), (_, t) in self.cells.items() if s == split)
        return correct / total if total else None

    def cell_accuracy(self, split: str, flag: str) -> Optional[float]:
        cell = self.cells.get((split, flag))
        if cell is None or cell[1] == 0:
            return None
        return cell[0] / cell[1]

    def to_json(self) -> dict:
        splits: dict[str, dict] = {}
        for split in SPLITS:
            entry: dict[str, dict] = {}
            for flag in ("seen", "unseen"):
                cell = self.cells.get((split, flag))
                if cell:
                    entry[flag] = {
                        "correct": cell[0],
                        "total": cell[1],
                        "accuracy": cell[0] / cell[1],
                    }
            if entry:
                accuracy = self.split_accuracy(split)
                entry["all"] = {
                    "correct": sum(v["correct"] for k, v in entry.items() if k != "all"),
                    "total": sum(v["total"] for k, v in entry.items() if k != "all"),
                    "accuracy": accuracy,
                }
                splits[split] = entry
        out: dict = {"splits": splits}
        if self.overall is not None:
            out["overall"] = {
                "correct": sum(c for c, _ in self.cells.values()),
                "total": sum(t for _, t in self.cells.values()),
                "accuracy": self.overall,
            }
        return out

    def render_table(self) -> str:
        """Entity / Query / Human / Overall columns, accuracy as percent."""
        columns = [s for s in SPLITS if any(k[0] == s for k in self.cells)]
        headers = [s.capitalize() for s in columns] + ["Overall"]
        values = []
        for split in columns:
            acc = self.split_accuracy(split)
            values.append("-" if acc is None else f"{100 * acc:.1f}")
        values.append("-" if self.overall is None else f"{100 * self.overall:.1f}")
        widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
        line1 = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
        line2 = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        return line1 + "\n" + line2 + "\n"


def accuracy_report(predictions: list[PredictionRecord]) -> AccuracyReport:
    """Tally correctness per (split, seen) cell; unresolved counts as wrong.

    Cells with no records are absent from the report rather than zero.
    """
    report = AccuracyReport()
    for record in predictions:
        key = (record.split, "seen" if record.seen else "unseen")
        correct, total = report.cells.get(key, (0, 0))
        if record.resolved is not None and record.resolved == record.gold:
            correct += 1
        report.cells[key] = (correct, total + 1)
    return report
