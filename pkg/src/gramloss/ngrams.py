"""N-gram extraction, reference tables, and the argmax candidate sequence.

N-gram keys are plain tuples of token ids; no detokenization happens anywhere.
Argmax ties break to the lowest token index so that match structure is
deterministic and testable.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass
class NGramEntry:
    """Occurrence record for one n-gram key."""

    ref_count: int = 0
    matched_probs: list = field(default_factory=list)


@dataclass
class NGramTable:
    """Associative table from an n-gram key (tuple of ids) to its record."""

    n: int
    entries: dict = field(default_factory=dict)


def extract_ngrams(seq, n):
    """Return the ordered list of (start, key) for every n-gram of ``seq``.

    A sequence shorter than ``n`` yields the empty list rather than an
    error; short references are legal inputs to every objective.
    """
    if n < 1:
        raise InvalidInputError(f"n-gram order must be >= 1, got {n}")
    seq = [int(t) for t in seq]
    return [(s, tuple(seq[s : s + n])) for s in range(len(seq) - n + 1)]


def build_ref_table(ref, n):
    """Count every distinct n-gram of a reference sequence."""
    table = NGramTable(n=n)
    for _, key in extract_ngrams(ref, n):
        entry = table.entries.setdefault(key, NGramEntry())
        entry.ref_count += 1
    return table


def argmax_seq(probs):
    """Greedy candidate sequence from a probability matrix.

    Returns (tokens, max_probs, margins); margin is max minus second max per
    row, so it is 0 exactly at a tie.  Ties resolve to the lowest index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise InvalidInputError(f"expected a T x D matrix with D >= 2, got shape {probs.shape}")
    tokens = probs.argmax(axis=1)
    rows = np.arange(probs.shape[0])
    max_probs = probs[rows, tokens]
    masked = probs.copy()
    masked[rows, tokens] = -np.inf
    margins = max_probs - masked.max(axis=1)
    return tokens, max_probs, margins
