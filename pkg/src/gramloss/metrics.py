"""Evaluation-side n-gram overlap: ROUGE-N and LCS-based ROUGE-L.

Everything operates on token ids; there is no stemming, casing or other text
processing.  Corpus aggregation is the arithmetic mean of per-example scores
(sentence-level averaging).
"""

from collections import Counter
from dataclasses import dataclass

from .errors import InvalidInputError
from .ngrams import extract_ngrams


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _score(overlap, cand_total, ref_total):
    precision = overlap / cand_total if cand_total > 0 else 0.0
    recall = overlap / ref_total if ref_total > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(precision=precision, recall=recall, f1=f1)


def rouge_n(cand, ref, n):
    """Clipped n-gram overlap: each gram counts at most min(cand, ref) times."""
    if n < 1:
        raise InvalidInputError(f"rouge order must be >= 1, got {n}")
    cand_counts = Counter(key for _, key in extract_ngrams(cand, n))
    ref_counts = Counter(key for _, key in extract_ngrams(ref, n))
    overlap = sum(min(count, ref_counts[key]) for key, count in cand_counts.items())
    return _score(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def lcs_length(a, b):
    """Longest common subsequence length by bottom-up DP, O(|a|*|b|)."""
    a = list(a)
    b = list(b)
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        curr = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[len(b)]


def rouge_l(cand, ref):
    """Sentence-level LCS F1: P = LCS/|cand|, R = LCS/|ref|."""
    overlap = lcs_length(cand, ref)
    return _score(overlap, len(list(cand)), len(list(ref)))


@dataclass
class CorpusReport:
    """Per-example and mean ROUGE scores over a list of (cand, ref) pairs."""

    orders: tuple
    per_example: list  # list of dicts: {"rouge1": RougeScore, ..., "rougeL": ...}
    means: dict  # metric name -> RougeScore of means
    count: int


def corpus_eval(pairs, orders=(1, 2)):
    """Score every pair and aggregate by arithmetic mean, in input order."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidInputError("corpus_eval requires at least one pair")
    orders = tuple(orders)
    per_example = []
    for cand, ref in pairs:
        scores = {f"rouge{n}": rouge_n(cand, ref, n) for n in orders}
        scores["rougeL"] = rouge_l(cand, ref)
        per_example.append(scores)
    means = {}
    for name in per_example[0]:
        means[name] = RougeScore(
            precision=sum(s[name].precision for s in per_example) / len(pairs),
            recall=sum(s[name].recall for s in per_example) / len(pairs),
            f1=sum(s[name].f1 for s in per_example) / len(pairs),
        )
    return CorpusReport(orders=orders, per_example=per_example, means=means, count=len(pairs))
