"""Staged pipeline: references -> ingest -> filter -> assemble -> stats ->
codes -> optional eval.

Every stage persists line-delimited or canonical-JSON intermediates under the
output directory and is skipped when its outputs already exist, so a run can
resume after deleting any single stage's files. Fixed config and inputs give
byte-identical outputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .assembly import (
    SplitManifest,
    SplitSummary,
    area_ratio_histogram,
    assemble,
    cap_per_entity,
    category_distribution,
    read_coco_records,
    write_coco_files,
)
from .codes import Vocab, build_codebook
from .config import PipelineConfig
from .evaluation import accuracy_report, build_index, load_predictions, resolve_all
from .filtering import run_filters, write_verdict_log, read_verdict_log
from .ingest import DetectionSet, ingest_end_to_end_output, ingest_pipeline_output
from .references import (
    ChainedExtractor,
    KnowledgeBase,
    RemoteExtractor,
    RuleBasedExtractor,
    build_references,
    load_kb,
    load_tasks,
)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, detail: str):
        super().__init__(f"stage {stage!r}: {detail}")
        self.stage = stage


@dataclass
class Stage:
    name: str
    outputs: list[Path]
    run: Callable[[], None]

    def complete(self) -> bool:
        return all(path.exists() for path in self.outputs)


def _canonical_write(path: Path, obj) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _detect_shard_model(path: str | Path) -> str:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                return str(json.loads(line).get("model", ""))
    return ""


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out_dir)
        self._kb: KnowledgeBase | None = None

    # lazy shared inputs

    @property
    def kb(self) -> KnowledgeBase:
        if self._kb is None:
            self._kb = load_kb(self.config.kb_path)
        return self._kb

    @property
    def tasks(self):
        return load_tasks(self.config.tasks_path)

    # stage outputs

    @property
    def references_path(self) -> Path:
        return self.out / "references.jsonl"

    @property
    def detections_path(self) -> Path:
        return self.out / "detections.jsonl"

    @property
    def ingest_stats_path(self) -> Path:
        return self.out / "ingest_stats.json"

    @property
    def verdicts_path(self) -> Path:
        return self.out / "verdicts.jsonl"

    @property
    def coco_dir(self) -> Path:
        return self.out / "coco"

    @property
    def stats_path(self) -> Path:
        return self.out / "stats.json"

    @property
    def codes_dir(self) -> Path:
        return self.out / "codes"

    @property
    def eval_dir(self) -> Path:
        return self.out / "eval"

    # stages

    def stage_references(self) -> None:
        extractors = []
        if self.config.extractor_endpoint:
            extractors.append(
                RemoteExtractor(
                    self.config.extractor_endpoint,
                    self.config.extractor_prompt,
                    self.config.extractor_timeout_s,
                )
            )
        extractors.append(RuleBasedExtractor())
        chain = ChainedExtractor(*extractors)
        lines = []
        for task in sorted(self.tasks, key=lambda t: t.mention_id):
            entity = self.kb.get(task.entity_id)
            if entity is None:
                raise StageError("references", f"task {task.mention_id} names unknown entity")
            for ref in build_references(task, entity, self.config.intension_template, chain):
                lines.append(
                    json.dumps(
                        {"mention_id": ref.mention_id, "kind": ref.kind, "text": ref.text},
                        sort_keys=True,
                    )
                )
        self.references_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    def stage_ingest(self) -> None:
        merged: dict[tuple[str, str, str], DetectionSet] = {}
        totals = {"records": 0, "kept": 0, "dropped": 0, "skipped": 0}
        for shard in self.config.detection_paths:
            model = _detect_shard_model(shard)
            if model == "pipeline":
                sets, stats = ingest_pipeline_output(shard, self.config.box_threshold)
            elif model == "end_to_end":
                sets, stats = ingest_end_to_end_output(shard, self.config.text_threshold)
            elif model == "":
                continue  # empty shard
            else:
                raise StageError("ingest", f"shard {shard} has unknown model {model!r}")
            totals["records"] += stats.records
            totals["kept"] += stats.kept
            totals["dropped"] += stats.dropped
            totals["skipped"] += stats.skipped
            for ds in sets:
                for det in ds.detections:
                    key = (ds.mention_id, det.reference_kind, det.source_model)
                    bucket = merged.setdefault(
                        key, DetectionSet(ds.mention_id, ds.height, ds.width, [])
                    )
                    bucket.detections.append(det)
        lines = []
        for (mention_id, kind, model) in sorted(merged):
            ds = merged[(mention_id, kind, model)]
            ds.detections.sort(key=lambda d: -d.confidence)
            lines.append(
                json.dumps(
                    {
                        "mention_id": mention_id,
                        "image_size": [ds.height, ds.width],
                        "model": model,
                        "reference_kind": kind,
                        "detections": [
                            {
                                "box": [d.box.x, d.box.y, d.box.w, d.box.h] if d.box else None,
                                "score": d.confidence,
                                "rle": d.mask.to_json(),
                            }
                            for d in ds.detections
                        ],
                    },
                    sort_keys=True,
                )
            )
        self.detections_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        _canonical_write(self.ingest_stats_path, totals)

    def _load_normalized_detections(self) -> dict[str, list[DetectionSet]]:
        from .masks import RleMask
        from .ingest import Detection
        from .masks import BBox

        per_mention: dict[str, list[DetectionSet]] = {}
        with open(self.detections_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                dets = [
                    Detection(
                        mask=RleMask.from_json(entry["rle"]),
                        confidence=float(entry["score"]),
                        reference_kind=obj["reference_kind"],
                        source_model=obj["model"],
                        box=BBox(*entry["box"]) if entry.get("box") else None,
                    )
                    for entry in obj["detections"]
                ]
                h, w = obj["image_size"]
                per_mention.setdefault(obj["mention_id"], []).append(
                    DetectionSet(obj["mention_id"], h, w, dets)
                )
        return per_mention

    def stage_filter(self) -> None:
        per_mention = self._load_normalized_detections()
        verdicts = []
        for task in sorted(self.tasks, key=lambda t: t.mention_id):
            entity = self.kb.get(task.entity_id)
            if entity is None:
                raise StageError("filter", f"task {task.mention_id} names unknown entity")
            sets = per_mention.get(task.mention_id, [])
            if not sets:
                sets = [DetectionSet(task.mention_id, 1, 1, [])]
            verdicts.append(run_filters(task, entity, sets, self.config.filter))
        write_verdict_log(verdicts, self.verdicts_path)

    def stage_assemble(self) -> None:
        verdicts = read_verdict_log(self.verdicts_path)
        tasks = {t.mention_id: t for t in self.tasks}
        manifest = SplitManifest.load(self.config.manifest_path)
        records, _ = assemble(verdicts, tasks, self.kb, manifest)
        capped = {
            split: cap_per_entity(recs, self.config.cap, self.config.seed)
            for split, recs in records.items()
        }
        summary = SplitSummary.tally([r for recs in capped.values() for r in recs])
        write_coco_files(capped, self.kb, summary, self.coco_dir)

    def _assembled_records(self):
        records = []
        for path in sorted(self.coco_dir.glob("*.json")):
            if path.name == "summary.json":
                continue
            records.extend(read_coco_records(path))
        return records

    def stage_stats(self) -> None:
        records = self._assembled_records()
        stats = {
            "area_ratio_histogram": {
                "bins": self.config.histogram_bins,
                "counts": area_ratio_histogram(records, self.config.histogram_bins),
            },
            "category_distribution": category_distribution(records, self.kb),
            "records": len(records),
        }
        _canonical_write(self.stats_path, stats)

    def stage_codes(self) -> None:
        self.codes_dir.mkdir(parents=True, exist_ok=True)
        if self.config.vocab_path:
            vocab = Vocab.from_file(self.config.vocab_path)
        else:
            vocab = Vocab.from_kb_names(self.kb)
        book = build_codebook(self.kb, vocab, self.config.code_length)
        vocab.to_file(self.codes_dir / "vocab.txt")
        book.write_jsonl(self.codes_dir / "codebook.jsonl")
        book.write_collision_report(self.codes_dir / "collisions.json")

    def stage_eval(self) -> None:
        assert self.config.predictions_path
        self.eval_dir.mkdir(parents=True, exist_ok=True)
        vocab = Vocab.from_file(self.codes_dir / "vocab.txt")
        book = build_codebook(self.kb, vocab, self.config.code_length)
        index = build_index(self.kb, include_aliases=self.config.bm25_aliases)
        predictions = load_predictions(self.config.predictions_path)
        resolve_all(predictions, book, index, vocab)
        report = accuracy_report(predictions)
        _canonical_write(self.eval_dir / "report.json", report.to_json())
        (self.eval_dir / "report.txt").write_text(report.render_table(), encoding="utf-8")

    def stages(self) -> list[Stage]:
        split_files = [self.coco_dir / "summary.json", self.coco_dir / "summary.txt"]
        stages = [
            Stage("references", [self.references_path], self.stage_references),
            Stage("ingest", [self.detections_path, self.ingest_stats_path], self.stage_ingest),
            Stage("filter", [self.verdicts_path], self.stage_filter),
            Stage("assemble", split_files, self.stage_assemble),
            Stage("stats", [self.stats_path], self.stage_stats),
            Stage(
                "codes",
                [
                    self.codes_dir / "vocab.txt",
                    self.codes_dir / "codebook.jsonl",
                    self.codes_dir / "collisions.json",
                ],
                self.stage_codes,
            ),
        ]
        if self.config.predictions_path:
            stages.append(
                Stage("eval", [self.eval_dir / "report.json", self.eval_dir / "report.txt"],
                      self.stage_eval)
            )
        return stages

    def run(self, force: bool = False, only: str | None = None) -> list[str]:
        """Execute stages in order, skipping completed ones. Returns the names
        of stages that actually ran."""
        self.config.validate()
        self.out.mkdir(parents=True, exist_ok=True)
        ran = []
        for stage in self.stages():
            if only is not None and stage.name != only:
                continue
            if not force and stage.complete():
                log.info("stage %s: outputs present, skipping", stage.name)
                continue
            log.info("stage %s: running", stage.name)
            try:
                stage.run()
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage.name, str(exc)) from exc
            ran.append(stage.name)
        return ran


def cmd_run(config: PipelineConfig, force: bool = False) -> list[str]:
    return Pipeline(config).run(force=force)
