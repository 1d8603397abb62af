import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gramloss.errors import InvalidInputError
from gramloss.linalg import softmax
from gramloss.ngrams import argmax_seq, build_ref_table, extract_ngrams

token_seqs = st.lists(st.integers(0, 7), max_size=12)


def test_extract_bigrams():
    assert extract_ngrams([5, 6, 5], 2) == [(0, (5, 6)), (1, (6, 5))]


def test_extract_too_short():
    assert extract_ngrams([5, 6, 5], 4) == []


def test_extract_repeated_key():
    out = extract_ngrams([5, 6, 5, 6], 2)
    assert len(out) == 3
    assert [s for s, key in out if key == (5, 6)] == [0, 2]


def test_extract_rejects_zero_order():
    with pytest.raises(InvalidInputError):
        extract_ngrams([1, 2], 0)


@given(token_seqs, st.integers(1, 5))
@settings(max_examples=100, deadline=None)
def test_extract_count(seq, n):
    assert len(extract_ngrams(seq, n)) == max(0, len(seq) - n + 1)


def test_ref_table_counts():
    table = build_ref_table([5, 6, 5, 6], 2)
    assert {k: e.ref_count for k, e in table.entries.items()} == {(5, 6): 2, (6, 5): 1}
    assert all(e.matched_probs == [] for e in table.entries.values())


def test_ref_table_empty():
    assert build_ref_table([], 3).entries == {}


def test_ref_table_unigrams():
    table = build_ref_table([1, 2, 3], 1)
    assert {k: e.ref_count for k, e in table.entries.items()} == {(1,): 1, (2,): 1, (3,): 1}


@given(token_seqs, st.integers(1, 5))
@settings(max_examples=100, deadline=None)
def test_ref_table_total_count(seq, n):
    table = build_ref_table(seq, n)
    total = sum(e.ref_count for e in table.entries.values())
    assert total == max(0, len(seq) - n + 1)
    assert len(table.entries) <= max(0, len(seq) - n + 1)


def test_argmax_tie_breaks_low():
    tokens, probs, margins = argmax_seq(np.array([[0.5, 0.5]]))
    assert tokens.tolist() == [0]
    assert margins.tolist() == [0.0]


def test_argmax_one_hot():
    probs = np.zeros((3, 5))
    for t, tok in enumerate([3, 1, 4]):
        probs[t, tok] = 1.0
    tokens, max_probs, _ = argmax_seq(probs)
    assert tokens.tolist() == [3, 1, 4]
    assert max_probs.tolist() == [1.0, 1.0, 1.0]


def test_argmax_margin():
    tokens, max_probs, margins = argmax_seq(np.array([[0.2, 0.7, 0.1]]))
    assert tokens.tolist() == [1]
    assert max_probs.tolist() == [0.7]
    assert np.allclose(margins, [0.5])


def test_argmax_shift_invariant(rng):
    logits = rng.normal(size=(6, 8))
    shifted = logits + rng.normal(size=(6, 1))
    a, _, _ = argmax_seq(softmax(logits))
    b, _, _ = argmax_seq(softmax(shifted))
    assert np.array_equal(a, b)
