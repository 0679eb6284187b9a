import json

import pytest

from maskforge.assembly import (
    AnnotationRecord,
    SplitManifest,
    UnknownEntity,
    area_ratio_histogram,
    assemble,
    cap_per_entity,
    category_distribution,
    coco_document,
    read_coco_records,
    write_coco_files,
)
from maskforge.filtering import FilterVerdict
from maskforge.masks import BinaryMask, rle_encode
from maskforge.references import EntityRecord, KnowledgeBase, MentionTask


def make_kb(*entities):
    return KnowledgeBase({e.entity_id: e for e in entities})


def full_mask_rle(h=4, w=4):
    return rle_encode(BinaryMask.ones(h, w))


def half_mask_rle(h=4, w=4):
    import numpy as np

    bits = np.zeros((h, w), dtype=bool)
    bits[: h // 2] = True
    return rle_encode(BinaryMask(h, w, bits))


def verdict(mention_id, outcome="accepted", rle=None, rule="none"):
    return FilterVerdict(
        mention_id=mention_id,
        outcome=outcome,
        rule_fired=rule,
        final_mask=rle if outcome != "dropped" else None,
        agreement_iou=1.0 if outcome != "dropped" else 0.0,
        source_kind="label",
        source_model="pipeline",
    )


def record(annotation_id, entity_id="Q1", split="entity", seen="seen", rle=None):
    rle = rle or full_mask_rle()
    return AnnotationRecord(
        annotation_id=annotation_id,
        mention_id=f"m{annotation_id}",
        image_ref=f"img/{annotation_id}.png",
        height=rle.height,
        width=rle.width,
        entity_id=entity_id,
        rle=rle,
        query="what is this?",
        split=split,
        seen=seen,
    )


@pytest.fixture
def small_world(tmp_path):
    kb = make_kb(
        EntityRecord("Q1", "Broccoli", category="food"),
        EntityRecord("Q2", "Museum", category="building"),
        EntityRecord("Q3", "Oak", category="plant"),
    )
    tasks = {
        "m1": MentionTask("m1", "img/a.png", "Q1", "what is on the plate?", "entity"),
        "m2": MentionTask("m2", "img/b.png", "Q2", "what building is this?", "entity"),
        "m3": MentionTask("m3", "img/c.png", "Q3", "what tree is that?", "query"),
        "m4": MentionTask("m4", "img/d.png", "Q1", "what vegetable?", "entity"),
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(
        json.dumps({"entity": {"seen": ["Q1", "Q2"], "unseen": []}, "query": {"seen": [], "unseen": ["Q3"]}})
    )
    return kb, tasks, SplitManifest.load(manifest_path)


def test_assemble_counts_conserved(small_world):
    kb, tasks, manifest = small_world
    verdicts = [
        verdict("m1", rle=full_mask_rle()),
        verdict("m2", "corrected", full_mask_rle(), "incomplete_location"),
        verdict("m3", rle=half_mask_rle()),
        verdict("m4", "dropped", rule="non_visual"),
    ]
    records, summary = assemble(verdicts, tasks, kb, manifest)
    total = sum(len(v) for v in records.values())
    assert total == 3
    assert summary.total_examples == 3


def test_assemble_seen_unseen_tally(small_world):
    kb, tasks, manifest = small_world
    verdicts = [
        verdict("m1", rle=full_mask_rle()),
        verdict("m2", rle=full_mask_rle()),
        verdict("m3", rle=half_mask_rle()),
    ]
    _, summary = assemble(verdicts, tasks, kb, manifest)
    assert summary.entities["entity"]["seen"] == 2
    assert summary.examples["entity"]["seen"] == 2
    assert summary.entities["query"]["unseen"] == 1
    assert summary.examples["query"]["unseen"] == 1


def test_assemble_unknown_entity(small_world):
    kb, tasks, manifest = small_world
    tasks["m9"] = MentionTask("m9", "img/z.png", "Q999", "what?", "entity")
    with pytest.raises(UnknownEntity):
        assemble([verdict("m9", rle=full_mask_rle())], tasks, kb, manifest)


def test_assemble_provenance_carried(small_world):
    kb, tasks, manifest = small_world
    records, _ = assemble(
        [verdict("m2", "corrected", full_mask_rle(), "incomplete_location")], tasks, kb, manifest
    )
    rec = records["entity"][0]
    assert rec.provenance.rule_fired == "incomplete_location"
    assert rec.provenance.source_model == "pipeline"
    assert rec.provenance.reference_kind == "label"


def test_summary_table_shape(small_world):
    kb, tasks, manifest = small_world
    _, summary = assemble([verdict("m1", rle=full_mask_rle())], tasks, kb, manifest)
    table = summary.render_table()
    for row in ("# SEEN entities", "# SEEN examples", "# UNSEEN entities",
                "# UNSEEN examples", "# Total examples"):
        assert row in table
    assert "Entity" in table and "Wiki" in table


# --- cap_per_entity ---


def test_cap_reduces_to_cap():
    records = [record(i, entity_id="Q1") for i in range(1, 121)]
    capped = cap_per_entity(records, cap=50, seed=7)
    assert len(capped) == 50


def test_cap_keeps_small_entities():
    records = [record(i, entity_id="Q1") for i in range(1, 4)]
    assert len(cap_per_entity(records, cap=50, seed=7)) == 3


def test_cap_deterministic():
    records = [record(i, entity_id="Q1") for i in range(1, 200)]
    a = cap_per_entity(records, cap=50, seed=7)
    b = cap_per_entity(records, cap=50, seed=7)
    assert [r.annotation_id for r in a] == [r.annotation_id for r in b]


def test_cap_order_insensitive():
    records = [record(i, entity_id="Q1") for i in range(1, 200)]
    a = {r.annotation_id for r in cap_per_entity(records, cap=50, seed=7)}
    b = {r.annotation_id for r in cap_per_entity(list(reversed(records)), cap=50, seed=7)}
    assert a == b


def test_cap_different_seed_differs():
    records = [record(i, entity_id="Q1") for i in range(1, 200)]
    a = {r.annotation_id for r in cap_per_entity(records, cap=50, seed=7)}
    b = {r.annotation_id for r in cap_per_entity(records, cap=50, seed=8)}
    assert a != b


# --- area_ratio_histogram ---


def test_full_image_in_last_bin():
    hist = area_ratio_histogram([record(1, rle=full_mask_rle())], bins=20)
    assert hist[19] == 1
    assert sum(hist) == 1


def test_half_image_ratio():
    rec = record(1, rle=half_mask_rle())
    assert rec.area_ratio == 0.5
    hist = area_ratio_histogram([rec], bins=20)
    assert hist[10] == 1


def test_histogram_matches_recount(rng):
    import numpy as np
    from conftest import random_mask

    records = []
    for i in range(100):
        m = random_mask(rng, 12, 12)
        records.append(record(i + 1, rle=rle_encode(m)))
    hist = area_ratio_histogram(records, bins=20)
    # independent recount straight from the pixel grids
    expect = [0] * 20
    for rec in records:
        from maskforge.masks import rle_decode

        bits = rle_decode(rec.rle).bits
        ratio = bits.sum() / bits.size
        expect[min(int(ratio * 20), 19)] += 1
    assert hist == expect
    assert sum(hist) == 100


def test_histogram_rle_round_trip_invariant(rng):
    from conftest import random_mask
    from maskforge.masks import rle_decode

    records = [record(i + 1, rle=rle_encode(random_mask(rng, 10, 10))) for i in range(50)]
    rebuilt = [
        AnnotationRecord(
            annotation_id=r.annotation_id,
            mention_id=r.mention_id,
            image_ref=r.image_ref,
            height=r.height,
            width=r.width,
            entity_id=r.entity_id,
            rle=rle_encode(rle_decode(r.rle)),
            query=r.query,
            split=r.split,
            seen=r.seen,
        )
        for r in records
    ]
    assert area_ratio_histogram(records) == area_ratio_histogram(rebuilt)


# --- category_distribution ---


def test_category_counts():
    kb = make_kb(
        EntityRecord("Q1", "A", category="food"),
        EntityRecord("Q2", "B", category="building"),
    )
    records = [record(1, "Q1"), record(2, "Q1"), record(3, "Q1"), record(4, "Q2"), record(5, "Q2")]
    assert category_distribution(records, kb) == {"building": 2, "food": 3}


def test_unlisted_category_grouped_as_others():
    kb = make_kb(
        EntityRecord("Q1", "A", category="food"),
        EntityRecord("Q2", "B", category="obscure-subtype"),
    )
    records = [record(1, "Q1"), record(2, "Q2")]
    dist = category_distribution(records, kb, primary_categories={"food"})
    assert dist == {"food": 1, "others": 1}


def test_category_distribution_empty():
    assert category_distribution([], make_kb()) == {}


def test_top_k_grouping():
    kb = make_kb(*[EntityRecord(f"Q{i}", f"E{i}", category=f"cat{i}") for i in range(5)])
    records = []
    next_id = 1
    for i in range(5):
        for _ in range(5 - i):  # cat0 most frequent
            records.append(record(next_id, f"Q{i}"))
            next_id += 1
    dist = category_distribution(records, kb, max_categories=2)
    assert dist == {"cat0": 5, "cat1": 4, "others": 6}


# --- COCO emission ---


def test_coco_round_trip_byte_identical(small_world, tmp_path):
    kb, tasks, manifest = small_world
    verdicts = [verdict("m1", rle=full_mask_rle()), verdict("m3", rle=half_mask_rle())]
    records, summary = assemble(verdicts, tasks, kb, manifest)
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    write_coco_files(records, kb, summary, out1)
    write_coco_files(records, kb, summary, out2)
    for name in ("entity.json", "query.json", "summary.json", "summary.txt"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_coco_reread_and_reemit_identical(small_world, tmp_path):
    kb, tasks, manifest = small_world
    verdicts = [verdict("m1", rle=full_mask_rle()), verdict("m4", rle=half_mask_rle())]
    records, summary = assemble(verdicts, tasks, kb, manifest)
    out = tmp_path / "out"
    write_coco_files(records, kb, summary, out)
    reread = read_coco_records(out / "entity.json")
    doc_before = coco_document(records["entity"], kb, "entity")
    doc_after = coco_document(reread, kb, "entity")
    assert json.dumps(doc_before, sort_keys=True) == json.dumps(doc_after, sort_keys=True)


def test_coco_segmentation_is_rle_json(small_world, tmp_path):
    kb, tasks, manifest = small_world
    records, summary = assemble([verdict("m1", rle=full_mask_rle())], tasks, kb, manifest)
    doc = coco_document(records["entity"], kb, "entity")
    seg = doc["annotations"][0]["segmentation"]
    assert seg == {"size": [4, 4], "counts": [0, 16]}
