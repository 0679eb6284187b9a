"""Text references for visual mentions: entity label, raw query, and the
intension- and extension-enhanced variants, plus the knowledge-base loader.

The extension extractor is pluggable: a deterministic rule-based default for
offline runs, and an optional remote HTTP client. The fallback chain is
remote -> rule-based -> plain label.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Protocol

import requests

log = logging.getLogger(__name__)

REFERENCE_KINDS = ("label", "query", "intension", "extension")
SPLITS = ("entity", "query", "wiki", "human")

DEFAULT_INTENSION_TEMPLATE = "{label}, a kind of {hypernym}"
DEFAULT_EXTRACTOR_PROMPT = (
    "Extract the noun phrase that refers to the object, keeping its spatial "
    "or relational context. Return only the phrase.\n\nQuestion: {query}"
)


class ParseError(ValueError):
    """A knowledge-base snapshot line could not be parsed."""


class DuplicateEntity(ValueError):
    """Two snapshot records share an entity id."""


class MissingPlaceholder(ValueError):
    """Intension template lacks the required {label} placeholder."""


class ExtractorUnavailable(RuntimeError):
    """The remote referring-expression extractor could not be reached."""


@dataclass(frozen=True)
class EntityRecord:
    entity_id: str
    label: str
    category: str = "others"
    hypernyms: tuple[str, ...] = ()
    aliases: tuple[str, ...] = ()
    has_image: bool = False

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError(f"entity {self.entity_id!r} has an empty label")


@dataclass(frozen=True)
class TextReference:
    kind: str
    text: str
    mention_id: str

    def __post_init__(self) -> None:
        if self.kind not in REFERENCE_KINDS:
            raise ValueError(f"unknown reference kind {self.kind!r}")
        if not self.text:
            raise ValueError("reference text must be non-empty")


@dataclass(frozen=True)
class MentionTask:
    mention_id: str
    image_ref: str
    entity_id: str
    raw_query: str
    split: str

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


@dataclass
class KnowledgeBase:
    entities: dict[str, EntityRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entities)

    def __iter__(self) -> Iterator[EntityRecord]:
        return iter(self.entities.values())

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    def get(self, entity_id: str) -> Optional[EntityRecord]:
        return self.entities.get(entity_id)

    def __getitem__(self, entity_id: str) -> EntityRecord:
        return self.entities[entity_id]


def _dedup(items: list[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for item in items:
        seen.setdefault(item, None)
    return tuple(seen)


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a line-delimited JSON snapshot into a KnowledgeBase.

    Each record carries {id, label, p31: [..], p279: [..], category,
    aliases: [..], has_image}. Hypernyms are the union of the P31 and P279
    target labels, deduplicated with original order preserved.
    """
    kb = KnowledgeBase()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = EntityRecord(
                    entity_id=str(obj["id"]),
                    label=str(obj["label"]),
                    category=str(obj.get("category") or "others"),
                    hypernyms=_dedup(
                        [str(h) for h in obj.get("p31", [])]
                        + [str(h) for h in obj.get("p279", [])]
                    ),
                    aliases=tuple(str(a) for a in obj.get("aliases", [])),
                    has_image=bool(obj.get("has_image", False)),
                )
            except DuplicateEntity:
                raise
            except Exception as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if record.entity_id in kb.entities:
                raise DuplicateEntity(f"{path}:{lineno}: duplicate id {record.entity_id}")
            kb.entities[record.entity_id] = record
    return kb


def load_tasks(path: str | Path) -> list[MentionTask]:
    """Load line-delimited mention tasks {mention_id, image, entity_id, query, split}."""
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                tasks.append(
                    MentionTask(
                        mention_id=str(obj["mention_id"]),
                        image_ref=str(obj["image"]),
                        entity_id=str(obj["entity_id"]),
                        raw_query=str(obj["query"]),
                        split=str(obj["split"]),
                    )
                )
            except Exception as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return tasks


def build_label_reference(task: MentionTask, entity: EntityRecord) -> TextReference:
    return TextReference(kind="label", text=entity.label, mention_id=task.mention_id)


def build_query_reference(task: MentionTask) -> TextReference:
    return TextReference(kind="query", text=task.raw_query, mention_id=task.mention_id)


def build_intension_reference(
    entity: EntityRecord,
    template: str = DEFAULT_INTENSION_TEMPLATE,
    mention_id: str = "",
) -> TextReference:
    """Combine the label with its first hypernym through the template.

    Entities without hypernyms still yield a reference whose text is just the
    label, so every mention keeps an intension row.
    """
    if "{label}" not in template:
        raise MissingPlaceholder(f"template {template!r} lacks {{label}}")
    if not entity.hypernyms:
        text = entity.label
    else:
        text = template.format(label=entity.label, hypernym=entity.hypernyms[0])
    return TextReference(kind="intension", text=text, mention_id=mention_id)


# Relational/spatial cue words; an extracted remainder must contain one.
_CUE_PATTERN = re.compile(
    r"\b(?:on|in|next to|behind|facing|near|under|holding|left|right)\b",
    re.IGNORECASE,
)

# Interrogative scaffolds stripped from the front of a query.
_WHAT_IS = re.compile(r"^\s*what\s+(?:is|are)\s+(.*)$", re.IGNORECASE)
_WHICH_IS = re.compile(r"^\s*which\s+(.+?)\s+(?:is|are)\s+(.*)$", re.IGNORECASE)


def rule_based_extract(query: str) -> Optional[str]:
    """Deterministic referring-expression extraction.

    Strips a leading "what is"/"which ... is" scaffold and a trailing question
    mark; returns the remainder only when it carries a spatial or relational
    cue word, otherwise None.
    """
    text = query.strip()
    if text.endswith("?"):
        text = text[:-1].rstrip()
    match = _WHAT_IS.match(text)
    if match:
        candidate = match.group(1).strip()
    else:
        match = _WHICH_IS.match(text)
        if match:
            candidate = f"{match.group(1).strip()} {match.group(2).strip()}"
        else:
            candidate = text
    if not candidate or not _CUE_PATTERN.search(candidate):
        return None
    return candidate


class ReferringExtractor(Protocol):
    def extract(self, query: str) -> Optional[str]: ...


class RuleBasedExtractor:
    """Offline default: pattern stripping plus cue-word gate."""

    def extract(self, query: str) -> Optional[str]:
        return rule_based_extract(query)


def remote_extract(
    query: str,
    endpoint: str,
    prompt_template: str = DEFAULT_EXTRACTOR_PROMPT,
    timeout_s: float = 30.0,
) -> Optional[str]:
    """POST the query to a remote extractor and return its expression.

    Malformed replies are tolerated (logged, None returned); network failures
    and timeouts raise ExtractorUnavailable.
    """
    payload = {"query": query, "prompt": prompt_template.format(query=query)}
    try:
        resp = requests.post(endpoint, json=payload, timeout=timeout_s)
        resp.raise_for_status()
        body = resp.json()
    except (requests.ConnectionError, requests.Timeout) as exc:
        raise ExtractorUnavailable(f"extractor at {endpoint} unreachable: {exc}") from exc
    except requests.HTTPError as exc:
        raise ExtractorUnavailable(f"extractor at {endpoint} returned error: {exc}") from exc
    except ValueError:
        log.warning("extractor returned non-JSON body for query %r", query)
        return None
    if not isinstance(body, dict) or "expression" not in body:
        log.warning("extractor reply missing 'expression' field: %r", body)
        return None
    expression = body["expression"]
    if not expression or not isinstance(expression, str):
        return None
    return expression


class RemoteExtractor:
    def __init__(
        self,
        endpoint: str,
        prompt_template: str = DEFAULT_EXTRACTOR_PROMPT,
        timeout_s: float = 30.0,
    ):
        self.endpoint = endpoint
        self.prompt_template = prompt_template
        self.timeout_s = timeout_s

    def extract(self, query: str) -> Optional[str]:
        return remote_extract(query, self.endpoint, self.prompt_template, self.timeout_s)


class ChainedExtractor:
    """Try extractors in order; unavailable or empty results fall through."""

    def __init__(self, *extractors: ReferringExtractor):
        self.extractors = extractors

    def extract(self, query: str) -> Optional[str]:
        for extractor in self.extractors:
            try:
                result = extractor.extract(query)
            except ExtractorUnavailable as exc:
                log.warning("extractor failed, falling through: %s", exc)
                continue
            if result:
                return result
        return None


def build_extension_reference(
    task: MentionTask, extractor: ReferringExtractor
) -> Optional[TextReference]:
    """Extract a referring expression from the raw query; None when the query
    carries no usable relational content."""
    expression = extractor.extract(task.raw_query)
    if not expression:
        return None
    return TextReference(kind="extension", text=expression, mention_id=task.mention_id)


def build_references(
    task: MentionTask,
    entity: EntityRecord,
    template: str = DEFAULT_INTENSION_TEMPLATE,
    extractor: Optional[ReferringExtractor] = None,
) -> list[TextReference]:
    """All references for one mention: label and query always, intension
    always (label fallback), extension when extraction succeeds."""
    refs = [
        build_label_reference(task, entity),
        build_query_reference(task),
        build_intension_reference(entity, template, mention_id=task.mention_id),
    ]
    if extractor is not None:
        try:
            ext = build_extension_reference(task, extractor)
        except ExtractorUnavailable:
            ext = None
        if ext is not None:
            refs.append(ext)
    return refs
