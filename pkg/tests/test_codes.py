import random

import numpy as np
import pytest

from maskforge.codes import (
    EmptyName,
    Vocab,
    build_ald,
    build_codebook,
    region_token_order,
    term_frequencies,
)
from maskforge.masks import BinaryMask, DimensionMismatch
from maskforge.references import EntityRecord, KnowledgeBase

from oracles import ald_naive


def make_kb(names):
    return KnowledgeBase(
        {f"Q{i}": EntityRecord(f"Q{i}", name) for i, name in enumerate(names)}
    )


def word_vocab(names):
    words = sorted({w for n in names for w in n.lower().split()})
    return Vocab(words)


CITY_NAMES = ["new york city", "new delhi", "paris"]


# --- vocab ---


def test_vocab_bijection():
    v = Vocab(["alpha", "beta"])
    assert v.token(v.token_id("alpha")) == "alpha"
    assert v.token_id("beta") == 1
    assert len(v) == 2


def test_vocab_greedy_longest_match():
    v = Vocab(["foo", "foobar", "bar"])
    assert v.tokenize("foobar") == ["foobar"]
    assert v.tokenize("foobarbar") == ["foobar", "bar"]


def test_vocab_unknown_char_fallback():
    v = Vocab(["ab"])
    assert v.tokenize("abx") == ["ab", "x"]
    assert "x" in v


def test_vocab_lowercases():
    v = Vocab(["paris"])
    assert v.tokenize("Paris") == ["paris"]


def test_vocab_file_round_trip(tmp_path):
    v = Vocab(["alpha", "beta", "x"])
    path = tmp_path / "vocab.txt"
    v.to_file(path)
    again = Vocab.from_file(path)
    assert again.token_id("beta") == 1
    assert len(again) == 3


# --- term_frequencies ---


def test_term_frequencies_hand_count():
    kb = make_kb(CITY_NAMES)
    vocab = word_vocab(CITY_NAMES)
    freqs = term_frequencies(kb, vocab)
    by_string = {vocab.token(t): f for t, f in freqs.items()}
    assert by_string == {"new": 2, "york": 1, "city": 1, "delhi": 1, "paris": 1}


def test_term_frequencies_empty_kb():
    assert term_frequencies(KnowledgeBase(), Vocab(["a"])) == {}


def test_term_frequencies_match_naive_recount():
    rng = random.Random(11)
    pool = [f"w{i}" for i in range(40)]
    names = [" ".join(rng.choices(pool, k=rng.randint(1, 4))) for _ in range(1000)]
    kb = make_kb(names)
    vocab = word_vocab(names)
    freqs = term_frequencies(kb, vocab)
    expected: dict[str, int] = {}
    for name in names:
        for w in name.split():
            expected[w] = expected.get(w, 0) + 1
    assert {vocab.token(t): f for t, f in freqs.items()} == expected


# --- build_ald ---


def test_ald_rare_first_with_occurrence_ties():
    kb = make_kb(CITY_NAMES)
    vocab = word_vocab(CITY_NAMES)
    freqs = term_frequencies(kb, vocab)
    code = build_ald(kb["Q0"], freqs, vocab, 4)
    assert code.tokens == ("york", "city", "new")


def test_ald_single_token():
    kb = make_kb(CITY_NAMES)
    vocab = word_vocab(CITY_NAMES)
    freqs = term_frequencies(kb, vocab)
    assert build_ald(kb["Q2"], freqs, vocab, 4).tokens == ("paris",)


def test_ald_truncates_to_length():
    names = ["a b c d e f"]
    kb = make_kb(names)
    vocab = word_vocab(names)
    freqs = term_frequencies(kb, vocab)
    assert len(build_ald(kb["Q0"], freqs, vocab, 4).token_ids) == 4


def test_ald_dedups_tokens():
    names = ["duck duck goose"]
    kb = make_kb(names)
    vocab = word_vocab(names)
    freqs = term_frequencies(kb, vocab)
    assert build_ald(kb["Q0"], freqs, vocab, 4).tokens == ("goose", "duck")


def test_ald_empty_name():
    vocab = Vocab(["a"])
    entity = EntityRecord("Q1", " ")
    with pytest.raises(EmptyName):
        build_ald(entity, {}, vocab, 4)


def test_ald_matches_oracle_on_random_corpus():
    rng = random.Random(99)
    pool = [f"tok{i}" for i in range(60)]
    names = [" ".join(rng.choices(pool, k=rng.randint(1, 5))) for _ in range(300)]
    kb = make_kb(names)
    vocab = word_vocab(names)
    freqs = term_frequencies(kb, vocab)
    for entity_id in list(kb.entities)[:100]:
        entity = kb[entity_id]
        got = build_ald(entity, freqs, vocab, 4)
        assert list(got.tokens) == ald_naive(entity.label, names, 4)


def test_ald_frequency_ascending():
    rng = random.Random(5)
    pool = [f"t{i}" for i in range(30)]
    names = [" ".join(rng.choices(pool, k=3)) for _ in range(200)]
    kb = make_kb(names)
    vocab = word_vocab(names)
    freqs = term_frequencies(kb, vocab)
    for entity in kb:
        code = build_ald(entity, freqs, vocab, 4)
        values = [freqs[t] for t in code.token_ids]
        assert values == sorted(values)


# --- codebook ---


def test_codebook_no_collisions_on_distinct_names():
    kb = make_kb(CITY_NAMES)
    book = build_codebook(kb, word_vocab(CITY_NAMES), 4)
    assert len(book.codes) == 3
    assert book.collisions() == {}


def test_codebook_forced_collision():
    kb = KnowledgeBase(
        {
            "Q1": EntityRecord("Q1", "Mercury"),
            "Q2": EntityRecord("Q2", "Mercury"),
        }
    )
    book = build_codebook(kb, Vocab(["mercury"]), 4)
    collisions = book.collisions()
    assert len(collisions) == 1
    assert list(collisions.values())[0] == ["Q1", "Q2"]


def test_codebook_self_lookup():
    names = ["red fox", "arctic fox", "red panda"]
    kb = make_kb(names)
    book = build_codebook(kb, word_vocab(names), 4)
    for entity_id, code in book.codes.items():
        assert entity_id in book.lookup(code.token_ids)


def test_codebook_files_deterministic(tmp_path):
    rng = random.Random(3)
    pool = [f"n{i}" for i in range(50)]
    names = [" ".join(rng.choices(pool, k=2)) for _ in range(100)]
    kb = make_kb(names)
    vocab_tokens = sorted({w for n in names for w in n.split()})
    outputs = []
    for run in range(3):
        book = build_codebook(kb, Vocab(vocab_tokens), 4)
        path = tmp_path / f"book{run}.jsonl"
        book.write_jsonl(path)
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


# --- region token ordering ---


def block_mask(h, w, r0, c0, size):
    bits = np.zeros((h, w), dtype=bool)
    bits[r0 : r0 + size, c0 : c0 + size] = True
    return BinaryMask(h, w, bits)


def test_region_order_descending_area():
    # areas 5, 9, 7 -> order [1, 2, 0]
    a = BinaryMask(4, 4, np.array([[1, 1, 1, 1], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=bool))
    b = BinaryMask(4, 4, np.array([[1, 1, 1, 1], [1, 1, 1, 1], [1, 0, 0, 0], [0, 0, 0, 0]], dtype=bool))
    c = BinaryMask(4, 4, np.array([[1, 1, 1, 1], [1, 1, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=bool))
    out = region_token_order([a, b, c])
    assert out.order == (1, 2, 0)
    assert out.areas == (9, 7, 5)


def test_region_order_tie_break_column_major():
    # two 3-px regions; the one whose first column-major pixel comes earlier wins
    left = BinaryMask(4, 4, np.array([[0, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0]], dtype=bool))
    top = BinaryMask(4, 4, np.array([[0, 1, 1, 1], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=bool))
    out = region_token_order([top, left])
    # left's first set pixel is (1,0) = column-major index 1; top's is (0,1) = index 4
    assert out.order == (1, 0)


def test_region_order_single_mask():
    out = region_token_order([block_mask(4, 4, 0, 0, 2)])
    assert out.order == (0,)


def test_region_order_is_permutation():
    rng = np.random.default_rng(8)
    masks = [BinaryMask(8, 8, rng.random((8, 8)) < 0.4) for _ in range(12)]
    out = region_token_order(masks)
    assert sorted(out.order) == list(range(12))
    assert all(out.areas[i] >= out.areas[i + 1] for i in range(len(out.areas) - 1))


def test_region_order_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        region_token_order([block_mask(4, 4, 0, 0, 2), block_mask(5, 4, 0, 0, 2)])


def test_region_order_patch_offset_positions():
    out = region_token_order([block_mask(4, 4, 0, 0, 2), block_mask(4, 4, 0, 0, 1)], patch_offset=3)
    assert out.positions() == [3, 4]
