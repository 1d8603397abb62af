"""Definition-literal reference implementations of every objective value.

These deliberately share nothing with the optimized module: plain loops,
plain dictionaries, naive softmax.  They exist so the optimized values can be
checked against an independent route, both in the test suite and via the
``oracle-check`` CLI command.  Only values are reproduced here; gradients are
validated separately by finite differences.
"""

import math


def naive_softmax(logits):
    """Row softmax by direct exp/sum; fine for the moderate logits the
    oracle harness generates."""
    out = []
    for row in logits:
        exps = [math.exp(v) for v in row]
        total = sum(exps)
        out.append([e / total for e in exps])
    return out


def _argmax_row(row):
    best = 0
    for j in range(1, len(row)):
        if row[j] > row[best]:
            best = j
    return best


def cross_entropy_value(logits, ref):
    probs = naive_softmax(logits)
    return -sum(math.log(probs[t][ref[t]]) for t in range(len(ref)))


def ngram_rewards_value(logits, ref, n):
    probs = naive_softmax(logits)
    T = len(ref)
    if T - n + 1 <= 0:
        return 0.0
    cand = [_argmax_row(row) for row in probs]
    max_probs = [probs[t][cand[t]] for t in range(T)]
    grams = {}
    for s in range(T - n + 1):
        key = "_".join(str(t) for t in ref[s : s + n])
        values = grams.get(key)
        if values is None:
            values = []
        if all(cand[s + i] == ref[s + i] for i in range(n)):
            product = 1.0
            for i in range(n):
                product *= max_probs[s + i]
            values.append(product)
        grams[key] = values
    loss = 1.0
    each_gram = 1.0 / (T - n + 1)
    for values in grams.values():
        for product in values:
            loss -= each_gram / len(values) * product
    return loss


def ngram_matches_value(logits, ref, n):
    probs = naive_softmax(logits)
    T = len(ref)
    if T - n + 1 <= 0:
        return 0.0
    cand = [_argmax_row(row) for row in probs]
    max_probs = [probs[t][cand[t]] for t in range(T)]
    grams = {}
    for s in range(T - n + 1):
        key = "_".join(str(t) for t in ref[s : s + n])
        grams[key] = []
    for s in range(T - n + 1):
        key = "_".join(str(cand[s + i]) for i in range(n))
        if key in grams:
            product = 1.0
            for i in range(n):
                product *= max_probs[s + i]
            grams[key].append(product)
    loss = 1.0
    each_gram = 1.0 / (T - n + 1)
    for values in grams.values():
        for product in values:
            loss -= each_gram / len(values) * product
    return loss


def pp2_value(logits, ref, n):
    probs = naive_softmax(logits)
    T = len(ref)
    if T - n + 1 < 1:
        return 0.0
    cand = [_argmax_row(row) for row in probs]

    def prob_count(gram):
        # Sum over candidate positions of the indicator-weighted product.
        total = 0.0
        for t in range(T - n + 1):
            product = 1.0
            for i in range(n):
                if cand[t + i] != gram[i]:
                    product = 0.0
                    break
                product *= probs[t + i][cand[t + i]]
            total += product
        return total

    def ref_count(gram):
        count = 0
        for t in range(T - n + 1):
            if tuple(ref[t : t + n]) == gram:
                count += 1
        return count

    distinct = []
    for t in range(T - n + 1):
        gram = tuple(cand[t : t + n])
        if gram not in distinct:
            distinct.append(gram)
    matched = sum(min(prob_count(g), float(ref_count(g))) for g in distinct)
    total = sum(prob_count(g) for g in distinct)
    if matched == 0.0:
        return 0.0
    return -matched / total


def bon_value(logits, ref, n):
    probs = naive_softmax(logits)
    T = len(ref)
    if T - n + 1 < 1:
        return 1.0

    distinct = []
    for t in range(T - n + 1):
        gram = tuple(ref[t : t + n])
        if gram not in distinct:
            distinct.append(gram)

    def ref_mass(gram):
        count = 0
        for t in range(T - n + 1):
            if tuple(ref[t : t + n]) == gram:
                count += 1
        return float(count)

    def model_mass(gram):
        total = 0.0
        for t in range(T - n + 1):
            product = 1.0
            for i in range(n):
                product *= probs[t + i][gram[i]]
            total += product
        return total

    overlap = sum(min(model_mass(g), ref_mass(g)) for g in distinct)
    return (2.0 * (T - n + 1) - overlap) / (2.0 * (T - n + 1))


def rouge_n_prf(cand, ref, n):
    """Clipped n-gram precision/recall/F1 by direct occurrence counting."""

    def grams(seq):
        return [tuple(seq[t : t + n]) for t in range(len(seq) - n + 1)]

    cand_grams, ref_grams = grams(cand), grams(ref)
    overlap = 0
    seen = []
    for g in cand_grams:
        if g in seen:
            continue
        seen.append(g)
        overlap += min(cand_grams.count(g), ref_grams.count(g))
    precision = overlap / len(cand_grams) if cand_grams else 0.0
    recall = overlap / len(ref_grams) if ref_grams else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def lcs_length_recursive(a, b):
    """Memoized-recursion LCS length, independent of the DP tabulation."""
    memo = {}

    def rec(i, j):
        if i == 0 or j == 0:
            return 0
        key = (i, j)
        if key not in memo:
            if a[i - 1] == b[j - 1]:
                memo[key] = 1 + rec(i - 1, j - 1)
            else:
                memo[key] = max(rec(i - 1, j), rec(i, j - 1))
        return memo[key]

    return rec(len(a), len(b))


def lcs_length_enumerate(a, b):
    """Exhaustive subsequence enumeration; exponential, for tiny inputs only."""
    from itertools import combinations

    subs_a = set()
    for k in range(len(a) + 1):
        for idx in combinations(range(len(a)), k):
            subs_a.add(tuple(a[i] for i in idx))
    best = 0
    for k in range(len(b), -1, -1):
        for idx in combinations(range(len(b)), k):
            if tuple(b[i] for i in idx) in subs_a:
                return k
    return best
