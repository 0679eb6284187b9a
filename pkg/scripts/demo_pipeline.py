#!/usr/bin/env python3
"""Run the full pipeline on the bundled fixture and print what came out.

Usage: python3 scripts/demo_pipeline.py [out_dir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from maskforge.config import load_config  # noqa: E402
from maskforge.filtering import read_verdict_log  # noqa: E402
from maskforge.pipeline import Pipeline  # noqa: E402
from maskforge.references import load_kb  # noqa: E402
from maskforge.review import sample_review_queue  # noqa: E402

from dataclasses import replace  # noqa: E402


def main() -> None:
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "out/demo"
    config = replace(load_config(ROOT / "tests" / "fixtures" / "config.toml"), out_dir=out_dir)
    pipeline = Pipeline(config)
    ran = pipeline.run()
    print(f"stages run: {', '.join(ran) if ran else 'none (resumed)'}")

    verdicts = read_verdict_log(pipeline.verdicts_path)
    outcomes: dict[str, int] = {}
    rules: dict[str, int] = {}
    for verdict in verdicts:
        outcomes[verdict.outcome] = outcomes.get(verdict.outcome, 0) + 1
        if verdict.rule_fired != "none":
            rules[verdict.rule_fired] = rules.get(verdict.rule_fired, 0) + 1
    print(f"\nverdicts over {len(verdicts)} mentions: {outcomes}")
    print(f"rules fired: {rules}")

    print("\nsplit summary:")
    print((pipeline.coco_dir / "summary.txt").read_text())

    stats = json.loads(pipeline.stats_path.read_text())
    hist = stats["area_ratio_histogram"]["counts"]
    print(f"area-ratio histogram ({len(hist)} bins): {hist}")
    print(f"category distribution: {stats['category_distribution']}")

    collisions = json.loads((pipeline.codes_dir / "collisions.json").read_text())
    print(f"\nentity codes: {sum(1 for _ in open(pipeline.codes_dir / 'codebook.jsonl'))} "
          f"({collisions['collision_codes']} colliding codes)")

    kb = load_kb(config.kb_path)
    queue = sample_review_queue(pipeline._assembled_records(), kb, {"entity": 3, "query": 3}, seed=config.seed)
    print("\nsample review items:")
    for item in queue:
        print(f"  #{item.annotation_id} {item.entity_label!r} "
              f"[{item.reference_kind}/{item.source_model}, {item.split}]")


if __name__ == "__main__":
    main()
