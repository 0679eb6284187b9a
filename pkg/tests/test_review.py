import pytest

from maskforge.assembly import AnnotationRecord, Provenance
from maskforge.masks import BinaryMask, rle_encode
from maskforge.references import EntityRecord, KnowledgeBase
from maskforge.review import (
    InsufficientEntities,
    ReviewStore,
    VerdictConflict,
    read_queue,
    sample_review_queue,
    write_queue,
)


def make_records(split_plan: dict[str, int], per_entity: int = 2):
    """split_plan: split -> number of distinct entities."""
    records = []
    kb_entities = {}
    annotation_id = 1
    for split, count in split_plan.items():
        for e in range(count):
            entity_id = f"{split[:2].upper()}{e:05d}"
            kb_entities[entity_id] = EntityRecord(
                entity_id, f"{split} thing {e}", category="food", hypernyms=("thing",)
            )
            for _ in range(per_entity):
                records.append(
                    AnnotationRecord(
                        annotation_id=annotation_id,
                        mention_id=f"m{annotation_id}",
                        image_ref=f"{annotation_id}.png",
                        height=4,
                        width=4,
                        entity_id=entity_id,
                        rle=rle_encode(BinaryMask.ones(4, 4)),
                        query="what is this?",
                        split=split,
                        seen="seen",
                        provenance=Provenance("none", "pipeline", "label"),
                    )
                )
                annotation_id += 1
    return records, KnowledgeBase(kb_entities)


def test_sample_counts_and_distinct_entities():
    records, kb = make_records({"entity": 30, "query": 10, "wiki": 5})
    queue = sample_review_queue(records, kb, {"entity": 20, "query": 5, "wiki": 5}, seed=3)
    assert len(queue) == 30
    assert len({item.entity_id for item in queue}) == 30
    by_split = {}
    for item in queue:
        by_split[item.split] = by_split.get(item.split, 0) + 1
    assert by_split == {"entity": 20, "query": 5, "wiki": 5}


def test_sample_deterministic():
    records, kb = make_records({"entity": 30})
    a = sample_review_queue(records, kb, {"entity": 10}, seed=5)
    b = sample_review_queue(records, kb, {"entity": 10}, seed=5)
    assert [i.annotation_id for i in a] == [i.annotation_id for i in b]


def test_sample_insufficient_entities():
    records, kb = make_records({"entity": 10})
    with pytest.raises(InsufficientEntities) as err:
        sample_review_queue(records, kb, {"entity": 20}, seed=1)
    assert err.value.deficit == 10


def test_sample_carries_entity_context():
    records, kb = make_records({"entity": 3})
    queue = sample_review_queue(records, kb, {"entity": 3}, seed=1)
    assert all(item.entity_label for item in queue)
    assert all(item.hypernyms == ("thing",) for item in queue)
    assert all(item.reference_kind == "label" for item in queue)


def test_queue_file_round_trip(tmp_path):
    records, kb = make_records({"entity": 4})
    queue = sample_review_queue(records, kb, {"entity": 4}, seed=1)
    path = tmp_path / "queue.jsonl"
    write_queue(queue, path)
    assert read_queue(path) == queue


# --- store ---


@pytest.fixture
def store(tmp_path):
    records, kb = make_records({"entity": 5})
    queue = sample_review_queue(records, kb, {"entity": 5}, seed=1)
    return ReviewStore(queue, tmp_path / "store")


def test_verdict_transition(store):
    first = store.order[0]
    item = store.record_verdict(first, "correct", "looks right")
    assert item.verdict == "correct"
    assert store.get(first).note == "looks right"


def test_verdict_conflict_without_force(store):
    first = store.order[0]
    store.record_verdict(first, "correct")
    with pytest.raises(VerdictConflict):
        store.record_verdict(first, "incorrect")


def test_force_overwrite_keeps_audit(store):
    first = store.order[0]
    store.record_verdict(first, "correct")
    store.record_verdict(first, "incorrect", "second look", force=True)
    assert store.get(first).verdict == "incorrect"
    assert len(store.history) == 2
    assert store.history[1].prior_verdict == "correct"


def test_store_reload_replays_log(tmp_path):
    records, kb = make_records({"entity": 5})
    queue = sample_review_queue(records, kb, {"entity": 5}, seed=1)
    store_dir = tmp_path / "store"
    store = ReviewStore(queue, store_dir)
    store.record_verdict(store.order[0], "correct")
    store.record_verdict(store.order[1], "incorrect")
    reloaded = ReviewStore(queue, store_dir)
    assert reloaded.get(store.order[0]).verdict == "correct"
    assert reloaded.get(store.order[1]).verdict == "incorrect"
    assert len(reloaded.history) == 2


def test_report_cells_and_overall(store):
    ids = store.order
    store.record_verdict(ids[0], "correct")
    store.record_verdict(ids[1], "correct")
    store.record_verdict(ids[2], "incorrect")
    report = store.report()
    cell = report["cells"]["label"]["pipeline"]
    assert cell["reviewed"] == 3
    assert cell["correct"] == 2
    assert report["overall"]["percent"] == 66.7
    assert report["pending"] == 2


def test_report_empty(store):
    report = store.report()
    assert report["overall"] is None
    assert report["cells"] == {}


def test_report_948_of_1000(tmp_path):
    records, kb = make_records({"entity": 1000}, per_entity=1)
    queue = sample_review_queue(records, kb, {"entity": 1000}, seed=1)
    store = ReviewStore(queue, tmp_path / "store")
    for i, annotation_id in enumerate(store.order):
        store.record_verdict(annotation_id, "correct" if i < 948 else "incorrect")
    store.flush()
    report = store.report()
    assert report["overall"]["percent"] == 94.8
    assert report["overall"]["reviewed"] == 1000
    reloaded = ReviewStore(queue, tmp_path / "store")
    assert reloaded.report()["overall"]["percent"] == 94.8
