import numpy as np
import pytest


def probs_to_logits(rows):
    """Logits whose softmax reproduces the given probability rows (~1e-16)."""
    p = np.asarray(rows, dtype=np.float64)
    return np.log(np.maximum(p, 1e-300))


def peaked_logits(tokens, vocab, gap=50.0):
    """Logits whose softmax is one-hot on ``tokens`` to double precision."""
    logits = np.zeros((len(tokens), vocab))
    for t, tok in enumerate(tokens):
        logits[t, tok] = gap
    return logits


def row_with_max(token, max_prob, vocab):
    """A probability row with ``max_prob`` on ``token``, the rest uniform."""
    row = np.full(vocab, (1.0 - max_prob) / (vocab - 1))
    row[token] = max_prob
    return row


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
