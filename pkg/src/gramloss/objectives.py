"""Sequence-level objectives with exact analytic gradients w.r.t. logits.

Five families are implemented:

* ``cross_entropy``   -- token-level negative log-likelihood;
* ``ngram_rewards``   -- position-related n-gram overlap (n >= 2): a gram
  counts only when the candidate argmax tokens equal the reference at the
  same positions;
* ``ngram_matches``   -- position-unrelated n-gram overlap (n >= 1): a
  candidate argmax gram counts if it occurs anywhere in the reference;
* ``pp2``             -- probabilistic n-gram count precision, which clips
  each gram's probabilistic count at its reference count;
* ``bon``             -- bag-of-n-grams mass matching over full softmax
  probabilities (no argmax).

The overlap families are piecewise smooth: argmax decisions, table
membership and min branches are frozen at the probe point during
differentiation, which is the only coherent gradient for these piecewise
definitions.  ``gradcheck`` verifies every analytic gradient against central
finite differences at argmax-stable points.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ProbeRejectedError
from .linalg import log_softmax, softmax, softmax_backward
from .ngrams import argmax_seq, extract_ngrams

__all__ = [
    "LossOutput",
    "ObjectiveSpec",
    "GradCheckReport",
    "cross_entropy",
    "ngram_rewards",
    "ngram_matches",
    "pp2",
    "bon",
    "composite",
    "term_values",
    "batch_loss",
    "gradcheck",
]


@dataclass
class LossOutput:
    """Objective value plus its gradient w.r.t. the logits of one example."""

    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which terms a composite objective contains.

    ``rewards_orders`` excludes order 1 by construction: a unigram reward
    would only re-weight exact positional token matches, which cross-entropy
    already optimizes.
    """

    use_ce: bool = True
    rewards_orders: tuple = ()
    matches_orders: tuple = ()
    pp2_orders: tuple = ()
    bon_orders: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rewards_orders", tuple(sorted(set(self.rewards_orders))))
        object.__setattr__(self, "matches_orders", tuple(sorted(set(self.matches_orders))))
        object.__setattr__(self, "pp2_orders", tuple(sorted(set(self.pp2_orders))))
        object.__setattr__(self, "bon_orders", tuple(sorted(set(self.bon_orders))))
        for n in self.rewards_orders:
            if n < 2:
                raise InvalidInputError("rewards orders must be >= 2")
        for name in ("matches_orders", "pp2_orders", "bon_orders"):
            for n in getattr(self, name):
                if n < 1:
                    raise InvalidInputError(f"{name} must contain orders >= 1")
        if not (
            self.use_ce
            or self.rewards_orders
            or self.matches_orders
            or self.pp2_orders
            or self.bon_orders
        ):
            raise InvalidInputError("objective spec enables no terms")

    def term_names(self):
        names = []
        if self.use_ce:
            names.append("ce")
        names += [f"rewards{n}" for n in self.rewards_orders]
        names += [f"matches{n}" for n in self.matches_orders]
        names += [f"pp2_{n}" for n in self.pp2_orders]
        names += [f"bon{n}" for n in self.bon_orders]
        return names


def _check_pair(logits, ref):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise InvalidInputError(f"logits must be T x D, got shape {logits.shape}")
    ref = [int(t) for t in ref]
    if len(ref) != logits.shape[0]:
        raise InvalidInputError(
            f"reference length {len(ref)} does not match logit rows {logits.shape[0]}"
        )
    if any(t < 0 or t >= logits.shape[1] for t in ref):
        raise InvalidInputError("reference token out of vocabulary")
    return logits, ref


def cross_entropy(logits, ref):
    """Negative log-likelihood of the reference under row-softmax."""
    logits, ref = _check_pair(logits, ref)
    ls = log_softmax(logits)
    rows = np.arange(len(ref))
    value = float(-ls[rows, ref].sum())
    grad = np.exp(ls)
    grad[rows, ref] -= 1.0
    return LossOutput(value=value, grad=grad)


def _overlap_core(probs, ref, n, positional):
    """Shared value/gradient core of the rewards and matches objectives.

    Builds the per-key lists of matched probability products, then forms

        value = 1 - sum_keys sum_{P in list} (1/span) * (1/len(list)) * P

    with span = T - n + 1.  The returned gradient is w.r.t. the probability
    matrix and is nonzero only at argmax entries of matched occurrences.
    """
    T = len(ref)
    span = T - n + 1
    d_probs = np.zeros_like(probs)
    if span <= 0:
        return 0.0, d_probs

    cand, max_probs, _ = argmax_seq(probs)
    matched = {}  # key -> list of start positions
    if positional:
        for s in range(span):
            if all(cand[s + i] == ref[s + i] for i in range(n)):
                matched.setdefault(tuple(ref[s : s + n]), []).append(s)
    else:
        ref_keys = {key for _, key in extract_ngrams(ref, n)}
        for s in range(span):
            key = tuple(int(cand[s + i]) for i in range(n))
            if key in ref_keys:
                matched.setdefault(key, []).append(s)

    # Group the sum per key as (sum of products) / len(list) so that a
    # perfect one-hot prediction contributes exactly 1.0 per distinct key
    # and the total collapses to 1 - U/span with no rounding residue.
    total = 0.0
    per_position = 1.0 / span
    for starts in matched.values():
        weight = per_position / len(starts)
        key_sum = 0.0
        for s in starts:
            window = max_probs[s : s + n]
            key_sum += float(window.prod())
            for i in range(n):
                others = float(np.prod(np.delete(window, i)))
                d_probs[s + i, cand[s + i]] -= weight * others
        total += key_sum / len(starts)
    return 1.0 - total / span, d_probs


def ngram_rewards(logits, ref, n):
    """Position-related overlap objective; candidate grams must sit at the
    reference gram's own positions to count."""
    if n < 2:
        raise InvalidInputError("rewards order must be >= 2 (unigram rewards are redundant with CE)")
    logits, ref = _check_pair(logits, ref)
    probs = softmax(logits)
    value, d_probs = _overlap_core(probs, ref, n, positional=True)
    return LossOutput(value=value, grad=softmax_backward(probs, d_probs))


def ngram_matches(logits, ref, n):
    """Position-unrelated overlap objective; a candidate argmax gram counts
    wherever it occurs in the reference."""
    if n < 1:
        raise InvalidInputError("matches order must be >= 1")
    logits, ref = _check_pair(logits, ref)
    probs = softmax(logits)
    value, d_probs = _overlap_core(probs, ref, n, positional=False)
    return LossOutput(value=value, grad=softmax_backward(probs, d_probs))


def _pp2_core(probs, ref, n):
    T = len(ref)
    span = T - n + 1
    d_probs = np.zeros_like(probs)
    if span < 1:
        return 0.0, d_probs

    cand, max_probs, _ = argmax_seq(probs)
    ref_counts = Counter(key for _, key in extract_ngrams(ref, n))

    occurrences = {}  # candidate key -> start positions
    for s in range(span):
        key = tuple(int(cand[s + i]) for i in range(n))
        occurrences.setdefault(key, []).append(s)

    prob_count = {
        key: sum(float(max_probs[s : s + n].prod()) for s in starts)
        for key, starts in occurrences.items()
    }
    denom = sum(prob_count.values())
    matched = sum(min(c, float(ref_counts.get(key, 0))) for key, c in prob_count.items())
    value = -matched / denom if matched > 0 else 0.0

    # Quotient rule; the min-branch derivative follows the probabilistic
    # count when it is strictly below the reference count, else zero.
    for key, starts in occurrences.items():
        clipped = 1.0 if prob_count[key] < ref_counts.get(key, 0) else 0.0
        d_count = -(clipped * denom - matched) / denom**2
        for s in starts:
            window = max_probs[s : s + n]
            for i in range(n):
                others = float(np.prod(np.delete(window, i)))
                d_probs[s + i, cand[s + i]] += d_count * others
    return float(value), d_probs


def pp2(logits, ref, n):
    """Probabilistic n-gram count precision, negated so lower is better."""
    if n < 1:
        raise InvalidInputError("pp2 order must be >= 1")
    logits, ref = _check_pair(logits, ref)
    probs = softmax(logits)
    value, d_probs = _pp2_core(probs, ref, n)
    return LossOutput(value=value, grad=softmax_backward(probs, d_probs))


def _bon_core(probs, ref, n):
    T = len(ref)
    span = T - n + 1
    d_probs = np.zeros_like(probs)
    if span < 1:
        # No grams to match: the loss saturates at its upper bound.
        return 1.0, d_probs

    ref_counts = Counter(key for _, key in extract_ngrams(ref, n))
    denom = 2.0 * span
    total = 0.0
    for key, ref_count in ref_counts.items():
        cols = list(key)
        window_probs = np.array(
            [[probs[t + i, cols[i]] for i in range(n)] for t in range(span)]
        )
        mass = float(window_probs.prod(axis=1).sum())
        total += min(mass, float(ref_count))
        if mass < ref_count:
            for t in range(span):
                window = window_probs[t]
                for i in range(n):
                    others = float(np.prod(np.delete(window, i)))
                    d_probs[t + i, cols[i]] += -others / denom
    value = (denom - total) / denom
    return value, d_probs


def bon(logits, ref, n):
    """Bag-of-n-grams objective over full softmax probabilities.

    Grams absent from the reference have zero reference mass and contribute
    min(., 0) = 0, so only reference keys are visited; this is exact, not an
    approximation.
    """
    if n < 1:
        raise InvalidInputError("bon order must be >= 1")
    logits, ref = _check_pair(logits, ref)
    probs = softmax(logits)
    value, d_probs = _bon_core(probs, ref, n)
    return LossOutput(value=value, grad=softmax_backward(probs, d_probs))


def _iter_terms(spec):
    if spec.use_ce:
        yield "ce", lambda lo, r: cross_entropy(lo, r)
    for n in spec.rewards_orders:
        yield f"rewards{n}", lambda lo, r, n=n: ngram_rewards(lo, r, n)
    for n in spec.matches_orders:
        yield f"matches{n}", lambda lo, r, n=n: ngram_matches(lo, r, n)
    for n in spec.pp2_orders:
        yield f"pp2_{n}", lambda lo, r, n=n: pp2(lo, r, n)
    for n in spec.bon_orders:
        yield f"bon{n}", lambda lo, r, n=n: bon(lo, r, n)


def composite(logits, ref, spec):
    """Sum of every enabled term's value and gradient."""
    logits, ref = _check_pair(logits, ref)
    value = 0.0
    grad = np.zeros_like(logits)
    for _, fn in _iter_terms(spec):
        out = fn(logits, ref)
        value += out.value
        grad += out.grad
    return LossOutput(value=value, grad=grad)


def term_values(logits, ref, spec):
    """Per-term values of the composite, in spec order."""
    logits, ref = _check_pair(logits, ref)
    return {name: fn(logits, ref).value for name, fn in _iter_terms(spec)}


def batch_loss(items, spec):
    """Mean composite loss over a batch of (logits, padded_ref, true_length).

    Each reference (and its logit rows) is truncated to its true length
    before any objective sees it, so padding never influences values.
    Returns the scalar mean and per-example gradients scaled by 1/batch,
    each shaped like its example's full (padded) logit matrix.
    """
    items = list(items)
    if not items:
        raise InvalidInputError("empty batch")
    scale = 1.0 / len(items)
    total = 0.0
    grads = []
    for logits, ref, true_len in items:
        logits = np.asarray(logits, dtype=np.float64)
        true_len = int(true_len)
        out = composite(logits[:true_len], list(ref)[:true_len], spec)
        total += out.value
        grad = np.zeros_like(logits)
        grad[:true_len] = out.grad * scale
        grads.append(grad)
    return total * scale, grads


@dataclass
class GradCheckReport:
    """Entry-wise analytic vs central-difference comparison at one probe."""

    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_error: float
    min_margin: float


def gradcheck(objective, logits, ref, h=1e-5, margin_floor=0.05):
    """Compare an objective's analytic gradient against central differences.

    ``objective`` maps logits -> LossOutput for a fixed reference.  The probe
    is rejected (not failed) when any argmax margin falls below
    ``margin_floor``: the frozen match structure is only locally constant
    away from ties.  Relative error uses denominator max(1, |analytic|).
    """
    logits = np.asarray(logits, dtype=np.float64)
    _, _, margins = argmax_seq(softmax(logits))
    min_margin = float(margins.min())
    if min_margin < margin_floor:
        raise ProbeRejectedError(
            f"argmax margin {min_margin:.3g} below floor {margin_floor:.3g}"
        )
    analytic = objective(logits).grad
    numeric = np.zeros_like(logits)
    for idx in np.ndindex(*logits.shape):
        bumped = logits.copy()
        bumped[idx] += h
        plus = objective(bumped).value
        bumped[idx] -= 2 * h
        minus = objective(bumped).value
        numeric[idx] = (plus - minus) / (2 * h)
    denom = np.maximum(1.0, np.abs(analytic))
    max_rel_error = float((np.abs(analytic - numeric) / denom).max())
    return GradCheckReport(
        analytic=analytic, numeric=numeric, max_rel_error=max_rel_error, min_margin=min_margin
    )
