"""Dense double-precision kernels underpinning every objective and the model.

Everything here is a pure function of its inputs; randomness is isolated in an
explicit generator object (numpy's PCG64) so that every corpus, initialization
and training run is reproducible bit-for-bit given a seed.
"""

import numpy as np

from .errors import InvalidInputError


def make_rng(seed):
    """Return a deterministic generator (PCG64) for the given 64-bit seed.

    PCG64 produces the identical stream for the identical seed on every
    platform numpy supports, which is the reproducibility contract the rest
    of the package relies on.
    """
    return np.random.Generator(np.random.PCG64(seed))


def seeded_uniform(rng, lo, hi, shape):
    """Draw an array of i.i.d. uniforms in [lo, hi) from ``rng``."""
    if not lo < hi:
        raise InvalidInputError(f"uniform bounds must satisfy lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, size=shape)


def softmax(logits):
    """Row-wise softmax with per-row max subtraction for overflow safety."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("softmax requires finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    """Row-wise log-softmax, avoiding the log(softmax(x)) cancellation."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise InvalidInputError("log_softmax requires finite logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_backward(probs, upstream):
    """Chain an upstream gradient w.r.t. softmax outputs back to the logits.

    Per row: g_j = p_j * (u_j - sum_k u_k p_k).  Rows of the result sum to
    zero because the softmax Jacobian annihilates constants.
    """
    probs = np.asarray(probs, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if probs.shape != upstream.shape:
        raise InvalidInputError(
            f"shape mismatch: probs {probs.shape} vs upstream {upstream.shape}"
        )
    inner = (probs * upstream).sum(axis=-1, keepdims=True)
    return probs * (upstream - inner)
