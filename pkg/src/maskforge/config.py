"""Pipeline configuration: a TOML file mirrored by CLI flags.

Flags override file values; the FORGE_CONFIG environment variable supplies
the config path when --config is absent.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import tomli

from .filtering import FilterConfig
from .ingest import DEFAULT_BOX_THRESHOLD, DEFAULT_TEXT_THRESHOLD
from .references import DEFAULT_EXTRACTOR_PROMPT, DEFAULT_INTENSION_TEMPLATE

ENV_CONFIG = "FORGE_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    kb_path: str = ""
    tasks_path: str = ""
    detection_paths: tuple[str, ...] = ()
    manifest_path: str = ""
    out_dir: str = "out"
    images_dir: str = ""

    box_threshold: float = DEFAULT_BOX_THRESHOLD
    text_threshold: float = DEFAULT_TEXT_THRESHOLD

    filter: FilterConfig = field(default_factory=FilterConfig)

    cap: int = 50
    seed: int = 0
    histogram_bins: int = 20

    intension_template: str = DEFAULT_INTENSION_TEMPLATE
    extractor_endpoint: Optional[str] = None
    extractor_timeout_s: float = 30.0
    extractor_prompt: str = DEFAULT_EXTRACTOR_PROMPT

    vocab_path: Optional[str] = None
    code_length: int = 4

    predictions_path: Optional[str] = None
    bm25_aliases: bool = False

    review_port: int = 8731

    def validate(self) -> None:
        for name in ("kb_path", "tasks_path", "manifest_path"):
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"{name} is required")
            if not Path(value).exists():
                raise ConfigError(f"{name} does not exist: {value}")
        if not self.detection_paths:
            raise ConfigError("at least one detection shard is required")
        for shard in self.detection_paths:
            if not Path(shard).exists():
                raise ConfigError(f"detection shard does not exist: {shard}")
        for opt in ("vocab_path", "predictions_path"):
            value = getattr(self, opt)
            if value and not Path(value).exists():
                raise ConfigError(f"{opt} does not exist: {value}")


def _filter_config(section: dict[str, Any]) -> FilterConfig:
    kwargs: dict[str, Any] = {}
    mapping = {
        "iou_agreement": "iou_agreement_threshold",
        "location_confidence": "location_confidence_threshold",
        "dense_components": "dense_component_threshold",
        "dense_coverage": "dense_coverage_fraction",
        "morphology_radius": "morphology_radius",
        "excluded_categories": "excluded_categories",
        "excluded_interrogatives": "excluded_interrogatives",
        "location_categories": "location_categories",
    }
    for key, attr in mapping.items():
        if key in section:
            value = section[key]
            if attr.startswith(("excluded", "location_categories")):
                value = frozenset(value)
            kwargs[attr] = value
    return FilterConfig(**kwargs)


def load_config(path: str | Path) -> PipelineConfig:
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    paths = raw.get("paths", {})
    thresholds = raw.get("thresholds", {})
    assembly = raw.get("assembly", {})
    codes = raw.get("codes", {})
    extractor = raw.get("extractor", {})
    templates = raw.get("templates", {})
    evaluate = raw.get("eval", {})
    review = raw.get("review", {})
    detections = paths.get("detections", [])
    if isinstance(detections, str):
        detections = [detections]
    return PipelineConfig(
        kb_path=paths.get("kb", ""),
        tasks_path=paths.get("tasks", ""),
        detection_paths=tuple(detections),
        manifest_path=paths.get("manifest", ""),
        out_dir=paths.get("out", "out"),
        images_dir=paths.get("images", ""),
        box_threshold=float(thresholds.get("box", DEFAULT_BOX_THRESHOLD)),
        text_threshold=float(thresholds.get("text", DEFAULT_TEXT_THRESHOLD)),
        filter=_filter_config(raw.get("filter", {})),
        cap=int(assembly.get("cap", 50)),
        seed=int(assembly.get("seed", 0)),
        histogram_bins=int(assembly.get("bins", 20)),
        intension_template=templates.get("intension", DEFAULT_INTENSION_TEMPLATE),
        extractor_endpoint=extractor.get("endpoint") or None,
        extractor_timeout_s=float(extractor.get("timeout_s", 30.0)),
        extractor_prompt=extractor.get("prompt", DEFAULT_EXTRACTOR_PROMPT),
        vocab_path=codes.get("vocab") or None,
        code_length=int(codes.get("length", 4)),
        predictions_path=evaluate.get("predictions") or None,
        bm25_aliases=bool(evaluate.get("aliases", False)),
        review_port=int(review.get("port", 8731)),
    )


def resolve_config(path: Optional[str], **overrides: Any) -> PipelineConfig:
    """Load from --config, then FORGE_CONFIG, then defaults; apply overrides."""
    chosen = path or os.environ.get(ENV_CONFIG)
    config = load_config(chosen) if chosen else PipelineConfig()
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        config = replace(config, **overrides)
    return config
