"""Optimized objective values vs the definition-literal brute-force route."""

import numpy as np
import pytest

from gramloss import bon, cross_entropy, ngram_matches, ngram_rewards, pp2
from gramloss.oracles import (
    bon_value,
    cross_entropy_value,
    lcs_length_enumerate,
    lcs_length_recursive,
    ngram_matches_value,
    ngram_rewards_value,
    pp2_value,
)

PAIRS = [
    (lambda lo, r, n: cross_entropy(lo, r).value, lambda lo, r, n: cross_entropy_value(lo, r), 1),
    (lambda lo, r, n: ngram_rewards(lo, r, n).value, ngram_rewards_value, 2),
    (lambda lo, r, n: ngram_matches(lo, r, n).value, ngram_matches_value, 1),
    (lambda lo, r, n: pp2(lo, r, n).value, pp2_value, 1),
    (lambda lo, r, n: bon(lo, r, n).value, bon_value, 1),
]


@pytest.mark.parametrize("fast,slow,min_n", PAIRS)
def test_brute_force_agreement(fast, slow, min_n, rng):
    for _ in range(200):
        t = int(rng.integers(1, 11))
        d = int(rng.integers(4, 9))
        n = int(rng.integers(min_n, 5))
        logits = rng.normal(0, 2, size=(t, d))
        ref = [int(x) for x in rng.integers(0, d, size=t)]
        assert fast(logits, ref, n) == pytest.approx(slow(logits.tolist(), ref, n), abs=1e-12)


def test_lcs_oracles_agree(rng):
    for _ in range(200):
        a = [int(x) for x in rng.integers(0, 3, size=int(rng.integers(0, 8)))]
        b = [int(x) for x in rng.integers(0, 3, size=int(rng.integers(0, 8)))]
        assert lcs_length_recursive(a, b) == lcs_length_enumerate(a, b)
