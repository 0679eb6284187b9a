#!/usr/bin/env python3
"""Generate the bundled 50-mention fixture used by the test suite and demos.

Writes, under tests/fixtures/:
  kb.jsonl             knowledge-base snapshot
  tasks.jsonl          mention tasks (45 plain + 1 empty + 4 failure archetypes)
  shard_pipeline.jsonl, shard_end_to_end.jsonl   detection shards
  manifest.json        seen/unseen entity lists per split
  config.toml          pipeline config wired to these files
  images/*.png         one tiny image per mention
  rle_vectors.json     200 RLE decode vectors shared with the frontend tests

Deterministic: fixed seeds, sorted emission. Rerunning must not change bytes.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

from maskforge.masks import BinaryMask, rle_encode  # noqa: E402
from filter_scenarios import (  # noqa: E402
    dense_inversion_scenario,
    incomplete_location_scenario,
    non_visual_scenario,
    pipeline_error_scenario,
)

FIXTURES = ROOT / "tests" / "fixtures"
SPLIT_CYCLE = ["entity", "query", "wiki", "human"]
KIND_CYCLE = ["label", "query", "intension", "extension"]
CATEGORY_CYCLE = ["food", "animal", "plant", "vehicle", "person", "sports", "organization", "goods"]

NORMAL_MENTIONS = 45
NORMAL_ENTITIES = 30
IMAGE_SIDE = 16


def normal_entities():
    entities = []
    for i in range(NORMAL_ENTITIES):
        category = CATEGORY_CYCLE[i % len(CATEGORY_CYCLE)]
        entities.append(
            {
                "id": f"NE{i + 1:02d}",
                "label": f"{category.capitalize()} specimen {i + 1}",
                "p31": [f"{category} kind"],
                "p279": [],
                "category": category,
                "aliases": [f"specimen {i + 1}"],
                "has_image": True,
            }
        )
    return entities


def archetype_entities():
    rows = []
    for scenario in (non_visual_scenario, pipeline_error_scenario,
                     incomplete_location_scenario, dense_inversion_scenario):
        produced = scenario()
        entity = produced[1]
        rows.append(
            {
                "id": entity.entity_id,
                "label": entity.label,
                "p31": list(entity.hypernyms),
                "p279": [],
                "category": entity.category,
                "aliases": [],
                "has_image": False,
            }
        )
    rows.append(
        {
            "id": "E_EMPTY",
            "label": "Elusive specimen",
            "p31": ["cryptid"],
            "p279": [],
            "category": "animal",
            "aliases": [],
            "has_image": False,
        }
    )
    return rows


def rect_mask_bits(rng: random.Random, side: int) -> np.ndarray:
    h = rng.randint(4, side - 2)
    w = rng.randint(4, side - 2)
    y = rng.randint(0, side - h)
    x = rng.randint(0, side - w)
    bits = np.zeros((side, side), dtype=bool)
    bits[y : y + h, x : x + w] = True
    return bits, (x, y, w, h)


def detection_entry(mask: BinaryMask, score: float, box=None) -> dict:
    rle = rle_encode(mask)
    return {
        "box": list(box) if box else None,
        "score": score,
        "rle": {"size": [rle.height, rle.width], "counts": list(rle.counts)},
    }


def shard_record(mention_id, size, model, kind, detections):
    return {
        "mention_id": mention_id,
        "image_size": list(size),
        "model": model,
        "reference_kind": kind,
        "detections": detections,
    }


def detection_set_to_records(sets):
    """Regroup a scenario's DetectionSets into homogeneous shard records."""
    grouped: dict[tuple[str, str, str], list] = {}
    size = {}
    for ds in sets:
        for det in ds.detections:
            key = (ds.mention_id, det.reference_kind, det.source_model)
            size[key] = (ds.height, ds.width)
            grouped.setdefault(key, []).append(
                {
                    "box": [det.box.x, det.box.y, det.box.w, det.box.h] if det.box else None,
                    "score": det.confidence,
                    "rle": det.mask.to_json(),
                }
            )
    return [
        shard_record(mention_id, size[(mention_id, kind, model)], model, kind, dets)
        for (mention_id, kind, model), dets in sorted(grouped.items())
    ]


def build():
    rng = random.Random(20240501)
    kb_rows = normal_entities() + archetype_entities()

    tasks = []
    pipeline_records = []
    e2e_records = []
    image_specs = {}  # image_ref -> side

    # plain agreeing mentions
    for i in range(NORMAL_MENTIONS):
        mention_id = f"m{i + 1:03d}"
        entity = kb_rows[i % NORMAL_ENTITIES]
        split = SPLIT_CYCLE[i % 4]
        kind = KIND_CYCLE[i % 4]
        if split == "wiki":
            query = f"reference image for {entity['label']}"
        else:
            query = f"What is the {entity['category']} near the {CATEGORY_CYCLE[(i + 3) % 8]}?"
        tasks.append(
            {
                "mention_id": mention_id,
                "image": f"{mention_id}.png",
                "entity_id": entity["id"],
                "query": query,
                "split": split,
            }
        )
        image_specs[f"{mention_id}.png"] = IMAGE_SIDE
        bits, box = rect_mask_bits(rng, IMAGE_SIDE)
        mask = BinaryMask(IMAGE_SIDE, IMAGE_SIDE, bits)
        pipe_score = round(rng.uniform(0.55, 0.95), 2)
        e2e_score = round(rng.uniform(0.45, 0.9), 2)
        pipe_dets = [detection_entry(mask, pipe_score, box)]
        if i == 7:  # sub-threshold box, dropped at ingest
            pipe_dets.append(detection_entry(mask, 0.1, box))
        if i == 11:  # malformed counts, skipped at ingest
            bad = detection_entry(mask, 0.8, box)
            bad["rle"]["counts"] = [0, 1, IMAGE_SIDE * IMAGE_SIDE]
            pipe_dets.append(bad)
        pipeline_records.append(
            shard_record(mention_id, (IMAGE_SIDE, IMAGE_SIDE), "pipeline", kind, pipe_dets)
        )
        e2e_records.append(
            shard_record(
                mention_id, (IMAGE_SIDE, IMAGE_SIDE), "end_to_end", kind,
                [detection_entry(mask, e2e_score)],
            )
        )

    # a mention every segmenter missed
    tasks.append(
        {
            "mention_id": "m046",
            "image": "m046.png",
            "entity_id": "E_EMPTY",
            "query": "What animal is hiding in the bushes?",
            "split": "human",
        }
    )
    image_specs["m046.png"] = IMAGE_SIDE
    pipeline_records.append(shard_record("m046", (IMAGE_SIDE, IMAGE_SIDE), "pipeline", "label", []))
    e2e_records.append(shard_record("m046", (IMAGE_SIDE, IMAGE_SIDE), "end_to_end", "label", []))

    # the four failure archetypes
    for scenario in (non_visual_scenario, pipeline_error_scenario,
                     incomplete_location_scenario, dense_inversion_scenario):
        produced = scenario()
        task, sets = produced[0], produced[2]
        tasks.append(
            {
                "mention_id": task.mention_id,
                "image": f"{task.mention_id}.png",
                "entity_id": task.entity_id,
                "query": task.raw_query,
                "split": task.split,
            }
        )
        image_specs[f"{task.mention_id}.png"] = sets[0].height
        for record in detection_set_to_records(sets):
            if record["model"] == "pipeline":
                pipeline_records.append(record)
            else:
                e2e_records.append(record)

    # the incomplete-location detection must survive ingest (>= 0.3) while
    # staying under the location-confidence threshold (0.5)
    for record in pipeline_records:
        if record["mention_id"] == "il1":
            for det in record["detections"]:
                det["score"] = 0.35

    assert len(tasks) == 50, len(tasks)

    # seen/unseen manifest: first half of each split's entities are seen
    split_entities: dict[str, list[str]] = {}
    for task in tasks:
        split_entities.setdefault(task["split"], [])
        if task["entity_id"] not in split_entities[task["split"]]:
            split_entities[task["split"]].append(task["entity_id"])
    manifest = {}
    for split, entities in sorted(split_entities.items()):
        ordered = sorted(entities)
        half = (len(ordered) + 1) // 2
        manifest[split] = {"seen": ordered[:half], "unseen": ordered[half:]}

    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "kb.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in kb_rows), encoding="utf-8"
    )
    (FIXTURES / "tasks.jsonl").write_text(
        "".join(json.dumps(t, sort_keys=True) + "\n" for t in tasks), encoding="utf-8"
    )
    (FIXTURES / "shard_pipeline.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in pipeline_records), encoding="utf-8"
    )
    (FIXTURES / "shard_end_to_end.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in e2e_records), encoding="utf-8"
    )
    (FIXTURES / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    (FIXTURES / "config.toml").write_text(
        """# fixture pipeline config; paths are relative to the repo root
[paths]
kb = "tests/fixtures/kb.jsonl"
tasks = "tests/fixtures/tasks.jsonl"
detections = ["tests/fixtures/shard_pipeline.jsonl", "tests/fixtures/shard_end_to_end.jsonl"]
manifest = "tests/fixtures/manifest.json"
images = "tests/fixtures/images"
out = "out/fixture"

[thresholds]
box = 0.3
text = 0.25

[assembly]
cap = 50
seed = 7
bins = 20

[codes]
length = 4
""",
        encoding="utf-8",
    )

    write_images(image_specs)
    write_rle_vectors()
    print(f"fixture written under {FIXTURES}")


def write_images(image_specs: dict[str, int]) -> None:
    from PIL import Image

    images_dir = FIXTURES / "images"
    images_dir.mkdir(exist_ok=True)
    rng = random.Random(7)
    for name in sorted(image_specs):
        side = image_specs[name]
        pixels = np.zeros((side, side, 3), dtype=np.uint8)
        base = (rng.randrange(40, 200), rng.randrange(40, 200), rng.randrange(40, 200))
        for c in range(3):
            pixels[:, :, c] = base[c]
        pixels[:: 4, :, 0] = 255 - base[0]
        Image.fromarray(pixels, "RGB").save(images_dir / name)


def write_rle_vectors() -> None:
    rng = np.random.default_rng(424242)
    vectors = []
    for _ in range(200):
        h = int(rng.integers(1, 17))
        w = int(rng.integers(1, 17))
        bits = rng.random((h, w)) < rng.uniform(0.0, 1.0)
        mask = BinaryMask(h, w, bits)
        rle = rle_encode(mask)
        vectors.append(
            {
                "size": [h, w],
                "counts": list(rle.counts),
                "bits": "".join("1" if b else "0" for b in bits.reshape(-1)),
            }
        )
    (FIXTURES / "rle_vectors.json").write_text(
        json.dumps(vectors, separators=(",", ":")) + "\n", encoding="utf-8"
    )


if __name__ == "__main__":
    build()
