import math

import numpy as np
import pytest
from conftest import peaked_logits, probs_to_logits, row_with_max

from gramloss.errors import InvalidInputError, ProbeRejectedError
from gramloss.linalg import softmax
from gramloss.ngrams import extract_ngrams
from gramloss.objectives import (
    LossOutput,
    ObjectiveSpec,
    _bon_core,
    _overlap_core,
    batch_loss,
    bon,
    composite,
    cross_entropy,
    gradcheck,
    ngram_matches,
    ngram_rewards,
    pp2,
    term_values,
)


def distinct_gram_count(ref, n):
    return len({key for _, key in extract_ngrams(ref, n)})


# ---------------------------------------------------------------- cross entropy


def test_ce_uniform_binary():
    out = cross_entropy(np.zeros((1, 2)), [0])
    assert out.value == pytest.approx(math.log(2.0), abs=1e-12)
    assert np.allclose(out.grad, [[-0.5, 0.5]], atol=1e-12)


def test_ce_confident_correct():
    assert cross_entropy(np.array([[20.0, -20.0]]), [0]).value < 1e-8


def test_ce_confident_wrong():
    assert cross_entropy(np.array([[20.0, -20.0]]), [1]).value == pytest.approx(40.0, abs=1e-6)


def test_ce_length_mismatch():
    with pytest.raises(InvalidInputError):
        cross_entropy(np.zeros((2, 3)), [0])


def test_ce_token_out_of_vocab():
    with pytest.raises(InvalidInputError):
        cross_entropy(np.zeros((1, 3)), [3])


# ---------------------------------------------------------------- rewards


def test_rewards_worked_example():
    # argmax equal to the reference with max probabilities 0.9, 0.8, 0.7.
    ref = [5, 6, 5]
    rows = [row_with_max(tok, p, 8) for tok, p in zip(ref, [0.9, 0.8, 0.7])]
    out = ngram_rewards(probs_to_logits(rows), ref, 2)
    expected = 1.0 - (0.5 * 0.9 * 0.8 + 0.5 * 0.8 * 0.7)
    assert out.value == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.36, abs=1e-12)


def test_rewards_perfect_distinct():
    out = ngram_rewards(peaked_logits([1, 2, 3], 6), [1, 2, 3], 2)
    assert out.value == 0.0


def test_rewards_perfect_repeated():
    out = ngram_rewards(peaked_logits([5, 6, 5, 6], 8), [5, 6, 5, 6], 2)
    assert out.value == pytest.approx(1.0 - 2.0 / 3.0, abs=1e-15)


def test_rewards_no_match():
    ref = [1, 2, 3]
    out = ngram_rewards(peaked_logits([4, 5, 4], 6), ref, 2)
    assert out.value == 1.0
    assert np.array_equal(out.grad, np.zeros_like(out.grad))


def test_rewards_rejects_unigram():
    with pytest.raises(InvalidInputError):
        ngram_rewards(np.zeros((3, 4)), [1, 2, 3], 1)


def test_rewards_length_mismatch():
    with pytest.raises(InvalidInputError):
        ngram_rewards(np.zeros((3, 4)), [1, 2], 2)


def test_rewards_short_sequence_degenerate():
    out = ngram_rewards(np.zeros((2, 4)), [1, 2], 3)
    assert out.value == 0.0
    assert np.array_equal(out.grad, np.zeros((2, 4)))


# ---------------------------------------------------------------- matches


def test_matches_position_shift_counts():
    ref = [5, 6, 7]
    rows = [row_with_max(tok, 0.9, 9) for tok in [6, 7, 5]]
    out = ngram_matches(probs_to_logits(rows), ref, 2)
    assert out.value == pytest.approx(1.0 - 0.5 * 0.81, abs=1e-12)
    assert out.value == pytest.approx(0.595, abs=1e-12)


def test_rewards_contrast_same_input():
    ref = [5, 6, 7]
    rows = [row_with_max(tok, 0.9, 9) for tok in [6, 7, 5]]
    out = ngram_rewards(probs_to_logits(rows), ref, 2)
    assert out.value == 1.0


def test_matches_unigram_accepted():
    ref = [3, 4]
    rows = [row_with_max(4, 0.6, 6), row_with_max(3, 0.8, 6)]
    out = ngram_matches(probs_to_logits(rows), ref, 1)
    assert out.value == pytest.approx(0.3, abs=1e-12)


def test_matches_length_mismatch():
    with pytest.raises(InvalidInputError):
        ngram_matches(np.zeros((2, 4)), [1], 1)


# ---------------------------------------------------------------- pp2


def test_pp2_worked_example():
    ref = [1, 2, 4]
    rows = [row_with_max(tok, 0.9, 6) for tok in [1, 2, 3]]
    out = pp2(probs_to_logits(rows), ref, 2)
    assert out.value == pytest.approx(-0.5, abs=1e-12)


def test_pp2_perfect():
    assert pp2(peaked_logits([1, 2, 3], 6), [1, 2, 3], 2).value == -1.0


def test_pp2_disjoint():
    out = pp2(peaked_logits([4, 5, 4], 6), [1, 2, 3], 2)
    assert out.value == 0.0
    assert np.array_equal(out.grad, np.zeros_like(out.grad))


# ---------------------------------------------------------------- bon


def test_bon_worked_example():
    rows = [row_with_max(1, 0.6, 4), row_with_max(2, 0.7, 4)]
    out = bon(probs_to_logits(rows), [1, 2], 2)
    assert out.value == pytest.approx((2.0 - 0.42) / 2.0, abs=1e-12)
    assert out.value == pytest.approx(0.79, abs=1e-12)


def test_bon_perfect_is_half():
    for ref, n in ([[1, 2, 3], 2], [[5, 6, 5, 6], 2], [[3, 4], 1]):
        assert bon(peaked_logits(ref, 8), ref, n).value == 0.5


def test_bon_zero_mass_is_one():
    probs = np.zeros((2, 4))
    probs[:, 3] = 1.0  # all mass away from the reference tokens
    value, d_probs = _bon_core(probs, [1, 2], 2)
    assert value == 1.0


def test_bon_short_sequence_degenerate():
    out = bon(np.zeros((1, 4)), [1], 2)
    assert out.value == 1.0
    assert np.array_equal(out.grad, np.zeros((1, 4)))


# ---------------------------------------------------------------- composite, batch


def test_composite_ce_only_identical():
    logits = np.array([[1.0, -1.0, 0.3], [0.2, 0.1, -0.5]])
    ref = [0, 2]
    a = composite(logits, ref, ObjectiveSpec(use_ce=True))
    b = cross_entropy(logits, ref)
    assert a.value == b.value
    assert np.array_equal(a.grad, b.grad)


def test_composite_full_rewards_setting(rng):
    # CE plus orders 2..4 of the position-related objective.
    spec = ObjectiveSpec(use_ce=True, rewards_orders=(2, 3, 4))
    logits = rng.normal(size=(6, 8))
    ref = [int(x) for x in rng.integers(0, 8, size=6)]
    out = composite(logits, ref, spec)
    expected = cross_entropy(logits, ref).value + sum(
        ngram_rewards(logits, ref, n).value for n in (2, 3, 4)
    )
    assert out.value == pytest.approx(expected, abs=1e-12)


def test_composite_additivity():
    logits = np.array([[1.0, -1.0, 0.3], [0.2, 0.1, -0.5]])
    ref = [0, 2]
    both = composite(logits, ref, ObjectiveSpec(use_ce=True, matches_orders=(2,)))
    parts = cross_entropy(logits, ref).value + ngram_matches(logits, ref, 2).value
    assert both.value == pytest.approx(parts, abs=1e-12)


def test_spec_rejects_empty():
    with pytest.raises(InvalidInputError):
        ObjectiveSpec(use_ce=False)


def test_spec_rejects_unigram_rewards():
    with pytest.raises(InvalidInputError):
        ObjectiveSpec(use_ce=True, rewards_orders=(1, 2))


def test_batch_loss_single_equals_composite(rng):
    spec = ObjectiveSpec(use_ce=True, matches_orders=(2,))
    logits = rng.normal(size=(4, 6))
    ref = [1, 2, 3, 2]
    value, grads = batch_loss([(logits, ref, 4)], spec)
    out = composite(logits, ref, spec)
    assert value == out.value
    assert np.allclose(grads[0], out.grad, atol=1e-15)


def test_batch_loss_mean_invariance(rng):
    spec = ObjectiveSpec(use_ce=True)
    logits = rng.normal(size=(3, 5))
    ref = [1, 2, 3]
    once, _ = batch_loss([(logits, ref, 3)], spec)
    twice, grads = batch_loss([(logits, ref, 3), (logits, ref, 3)], spec)
    assert twice == pytest.approx(once, abs=1e-12)
    assert np.allclose(grads[0] * 2, composite(logits, ref, spec).grad, atol=1e-15)


def test_batch_loss_arithmetic_mean():
    spec = ObjectiveSpec(use_ce=True)
    # Two sequences with clearly different CE values; the batch value is the mean.
    a = np.array([[5.0, 0.0]])
    b = np.array([[0.0, 0.0]])
    va = cross_entropy(a, [0]).value
    vb = cross_entropy(b, [0]).value
    value, _ = batch_loss([(a, [0], 1), (b, [0], 1)], spec)
    assert value == pytest.approx((va + vb) / 2, abs=1e-12)


def test_batch_loss_empty():
    with pytest.raises(InvalidInputError):
        batch_loss([], ObjectiveSpec(use_ce=True))


def test_padding_transparency(rng):
    spec = ObjectiveSpec(use_ce=True, rewards_orders=(2,), matches_orders=(1, 2), bon_orders=(2,), pp2_orders=(2,))
    logits = rng.normal(size=(6, 7))
    ref = [1, 2, 3, 2]
    padded_ref = ref + [0, 0]
    value_padded, grads_padded = batch_loss([(logits, padded_ref, 4)], spec)
    value_plain, grads_plain = batch_loss([(logits[:4], ref, 4)], spec)
    assert value_padded == value_plain
    assert np.array_equal(grads_padded[0][:4], grads_plain[0])
    assert np.array_equal(grads_padded[0][4:], np.zeros((2, 7)))


def test_term_values_sum_to_composite(rng):
    spec = ObjectiveSpec(use_ce=True, rewards_orders=(2, 3), matches_orders=(1,), bon_orders=(2,), pp2_orders=(2,))
    logits = rng.normal(size=(5, 6))
    ref = [1, 2, 1, 2, 3]
    terms = term_values(logits, ref, spec)
    assert set(terms) == set(spec.term_names())
    assert sum(terms.values()) == pytest.approx(composite(logits, ref, spec).value, abs=1e-12)


# ---------------------------------------------------------------- properties


ALL_OBJECTIVES = [
    ("ce", lambda lo, r: cross_entropy(lo, r)),
    ("rewards2", lambda lo, r: ngram_rewards(lo, r, 2)),
    ("matches2", lambda lo, r: ngram_matches(lo, r, 2)),
    ("pp2", lambda lo, r: pp2(lo, r, 2)),
    ("bon2", lambda lo, r: bon(lo, r, 2)),
]


@pytest.mark.parametrize("name,fn", ALL_OBJECTIVES)
def test_row_shift_invariance(name, fn, rng):
    for _ in range(10):
        logits = rng.normal(size=(4, 6))
        ref = [int(x) for x in rng.integers(0, 6, size=4)]
        shifted = logits + rng.normal(size=(4, 1))
        assert fn(shifted, ref).value == pytest.approx(fn(logits, ref).value, abs=1e-9)


@pytest.mark.parametrize("name,fn", ALL_OBJECTIVES)
def test_grad_rows_sum_to_zero(name, fn, rng):
    for _ in range(20):
        logits = rng.normal(size=(5, 7))
        ref = [int(x) for x in rng.integers(0, 7, size=5)]
        grad = fn(logits, ref).grad
        assert np.all(np.abs(grad.sum(axis=1)) < 1e-9)


def test_value_ranges(rng):
    for _ in range(300):
        t = int(rng.integers(1, 9))
        d = int(rng.integers(4, 9))
        n = int(rng.integers(1, 5))
        logits = rng.normal(0, 3, size=(t, d))
        ref = [int(x) for x in rng.integers(0, d, size=t)]
        span = t - n + 1
        u = distinct_gram_count(ref, n)
        if n >= 2:
            v = ngram_rewards(logits, ref, n).value
            if span >= 1:
                assert 1.0 - u / span - 1e-12 <= v <= 1.0 + 1e-12
        v = ngram_matches(logits, ref, n).value
        if span >= 1:
            assert 1.0 - u / span - 1e-12 <= v <= 1.0 + 1e-12
        assert -1.0 - 1e-12 <= pp2(logits, ref, n).value <= 1e-12
        assert 0.5 - 1e-12 <= bon(logits, ref, n).value <= 1.0 + 1e-12
        assert cross_entropy(logits, ref).value >= 0.0


def test_matched_probability_gradient_is_nonpositive(rng):
    # Raising a matched argmax token's probability never increases the loss.
    for _ in range(50):
        t, d = int(rng.integers(2, 8)), int(rng.integers(4, 9))
        probs = softmax(rng.normal(0, 2, size=(t, d)))
        ref = [int(x) for x in rng.integers(0, d, size=t)]
        for positional in (True, False):
            _, d_probs = _overlap_core(probs, ref, 2, positional)
            assert np.all(d_probs <= 0.0)


def test_local_smoothness_under_small_perturbation(rng):
    for _ in range(20):
        logits = rng.normal(0, 3, size=(4, 6))
        probs = softmax(logits)
        from gramloss.ngrams import argmax_seq

        cand, _, margins = argmax_seq(probs)
        if margins.min() < 0.05:
            continue
        delta = rng.normal(size=(4, 6)) * 1e-6
        ref = [int(x) for x in rng.integers(0, 6, size=4)]
        for _, fn in ALL_OBJECTIVES:
            a = fn(logits, ref).value
            b = fn(logits + delta, ref).value
            assert abs(a - b) < 1e-4


# ---------------------------------------------------------------- gradcheck


def stable_probe(rng, t, d, floor=0.05):
    while True:
        logits = rng.normal(0, 2.5, size=(t, d))
        from gramloss.ngrams import argmax_seq

        _, _, margins = argmax_seq(softmax(logits))
        if margins.min() >= floor:
            return logits


def test_gradcheck_ce(rng):
    logits = stable_probe(rng, 4, 6)
    ref = [1, 2, 3, 4]
    report = gradcheck(lambda lo: cross_entropy(lo, ref), logits, ref, h=1e-5)
    assert report.max_rel_error < 1e-6


def test_gradcheck_rewards(rng):
    for _ in range(5):
        logits = stable_probe(rng, 5, 6)
        probs = softmax(logits)
        ref = [int(t) for t in probs.argmax(axis=1)]  # force matches to exist
        report = gradcheck(lambda lo: ngram_rewards(lo, ref, 2), logits, ref, h=1e-5)
        assert report.max_rel_error < 1e-4


def test_gradcheck_rejects_tie():
    logits = np.zeros((2, 4))  # every row is an exact argmax tie
    with pytest.raises(ProbeRejectedError):
        gradcheck(lambda lo: cross_entropy(lo, [0, 1]), logits, [0, 1])


def test_gradcheck_catches_corruption(rng):
    logits = stable_probe(rng, 3, 5)
    ref = [1, 2, 3]

    def corrupted(lo):
        out = cross_entropy(lo, ref)
        return LossOutput(out.value, out.grad + 0.01)

    report = gradcheck(corrupted, logits, ref, h=1e-5)
    assert report.max_rel_error > 1e-4
