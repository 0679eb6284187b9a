"""Discriminative entity codes and region token ordering.

An entity's code is the first L tokens of its name taken in ascending order
of corpus term frequency (rare-first), with ties broken by position in the
name. Region tokens are ordered by descending pixel area so bigger regions
come first in a feature sequence.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .masks import BinaryMask, DimensionMismatch, area
from .references import KnowledgeBase, EntityRecord

DEFAULT_CODE_LENGTH = 4


class EmptyName(ValueError):
    """Entity name produced no tokens."""


class Vocab:
    """Token string <-> id bijection with a greedy longest-match segmenter.

    Text is NFC-normalized and lowercased, split on whitespace, and each word
    segmented greedily against the vocabulary. Characters no vocab token can
    cover fall back to single-character tokens, which are registered on first
    sight (appended after the loaded vocabulary, in encounter order).
    """

    def __init__(self, tokens: list[str] | None = None):
        self._id_of: dict[str, int] = {}
        self._tokens: list[str] = []
        self._max_len = 1
        for token in tokens or []:
            self.add(token)

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocab":
        tokens = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                token = line.rstrip("\n")
                if token:
                    tokens.append(token)
        return cls(tokens)

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self._tokens:
                fh.write(token + "\n")

    @classmethod
    def from_kb_names(cls, kb: KnowledgeBase) -> "Vocab":
        """Whitespace-level vocabulary over all entity names, sorted."""
        words = sorted({w for e in kb for w in _normalize(e.label).split()})
        return cls(words)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._id_of

    def add(self, token: str) -> int:
        existing = self._id_of.get(token)
        if existing is not None:
            return existing
        token_id = len(self._tokens)
        self._id_of[token] = token_id
        self._tokens.append(token)
        self._max_len = max(self._max_len, len(token))
        return token_id

    def token_id(self, token: str) -> int:
        return self._id_of[token]

    def token(self, token_id: int) -> str:
        return self._tokens[token_id]

    def tokenize(self, text: str) -> list[str]:
        out: list[str] = []
        for word in _normalize(text).split():
            i = 0
            while i < len(word):
                match = None
                top = min(self._max_len, len(word) - i)
                for size in range(top, 0, -1):
                    piece = word[i : i + size]
                    if piece in self._id_of:
                        match = piece
                        break
                if match is None:
                    match = word[i]
                    self.add(match)
                out.append(match)
                i += len(match)
        return out

    def tokenize_ids(self, text: str) -> list[int]:
        return [self._id_of[t] for t in self.tokenize(text)]


def _normalize(text: str) -> str:
    return unicodedata.normalize("NFC", text).lower()


@dataclass(frozen=True)
class AldCode:
    entity_id: str
    token_ids: tuple[int, ...]
    tokens: tuple[str, ...]
    code_length: int = DEFAULT_CODE_LENGTH

    def to_json(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "tokens": list(self.token_ids),
            "strings": list(self.tokens),
        }


def term_frequencies(kb: KnowledgeBase, vocab: Vocab) -> dict[int, int]:
    """Occurrences of each token across all tokenized entity names."""
    counts: Counter[int] = Counter()
    for entity in kb:
        counts.update(vocab.tokenize_ids(entity.label))
    return dict(counts)


def build_ald(
    entity: EntityRecord,
    freqs: dict[int, int],
    vocab: Vocab,
    code_length: int = DEFAULT_CODE_LENGTH,
) -> AldCode:
    """Code an entity name: distinct tokens, rarest first, truncated to L.

    Ties in frequency keep the tokens' first-occurrence order in the name.
    """
    ids = vocab.tokenize_ids(entity.label)
    if not ids:
        raise EmptyName(entity.entity_id)
    first_pos: dict[int, int] = {}
    for pos, token_id in enumerate(ids):
        first_pos.setdefault(token_id, pos)
    distinct = sorted(first_pos, key=lambda t: (freqs.get(t, 0), first_pos[t]))
    chosen = tuple(distinct[:code_length])
    return AldCode(
        entity_id=entity.entity_id,
        token_ids=chosen,
        tokens=tuple(vocab.token(t) for t in chosen),
        code_length=code_length,
    )


@dataclass
class Codebook:
    codes: dict[str, AldCode] = field(default_factory=dict)
    reverse: dict[tuple[int, ...], list[str]] = field(default_factory=dict)
    code_length: int = DEFAULT_CODE_LENGTH

    def lookup(self, token_ids: tuple[int, ...] | list[int]) -> list[str]:
        return self.reverse.get(tuple(token_ids), [])

    def collisions(self) -> dict[str, list[str]]:
        """Codes shared by more than one entity, keyed by joined token ids."""
        return {
            ",".join(map(str, code)): entities
            for code, entities in sorted(self.reverse.items())
            if len(entities) > 1
        }

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entity_id in sorted(self.codes):
                fh.write(json.dumps(self.codes[entity_id].to_json(), sort_keys=True) + "\n")

    def write_collision_report(self, path: str | Path) -> None:
        collisions = self.collisions()
        report = {
            "collision_codes": len(collisions),
            "collision_entities": sum(len(v) for v in collisions.values()),
            "codes": collisions,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")


def build_codebook(
    kb: KnowledgeBase, vocab: Vocab, code_length: int = DEFAULT_CODE_LENGTH
) -> Codebook:
    """Codes for every entity plus the exact-match reverse lookup."""
    freqs = term_frequencies(kb, vocab)
    book = Codebook(code_length=code_length)
    for entity_id in sorted(kb.entities):
        code = build_ald(kb[entity_id], freqs, vocab, code_length)
        book.codes[entity_id] = code
        book.reverse.setdefault(code.token_ids, []).append(entity_id)
    for entities in book.reverse.values():
        entities.sort()
    return book


@dataclass(frozen=True)
class RegionTokenOrder:
    """Permutation of region indices in descending-area order.

    `patch_offset` records how many patch-position tokens precede the region
    block when the sequence is assembled downstream.
    """

    order: tuple[int, ...]
    areas: tuple[int, ...]
    patch_offset: int = 0

    def positions(self) -> list[int]:
        return [self.patch_offset + i for i in range(len(self.order))]


def _first_set_pixel_column_major(mask: BinaryMask) -> int:
    flat = mask.bits.ravel(order="F")
    hits = flat.nonzero()[0]
    if hits.size == 0:
        return mask.height * mask.width
    return int(hits[0])


def region_token_order(masks: list[BinaryMask], patch_offset: int = 0) -> RegionTokenOrder:
    """Sort region masks by area, largest first.

    Equal areas are broken by the earlier first-set pixel in column-major
    order, then by input index, so the result is a stable permutation.
    """
    if not masks:
        return RegionTokenOrder((), (), patch_offset)
    shape = masks[0].shape
    for m in masks[1:]:
        if m.shape != shape:
            raise DimensionMismatch(f"{m.shape} vs {shape}")
    keyed = [
        (-area(m), _first_set_pixel_column_major(m), i) for i, m in enumerate(masks)
    ]
    keyed.sort()
    order = tuple(i for _, _, i in keyed)
    return RegionTokenOrder(order, tuple(area(masks[i]) for i in order), patch_offset)
