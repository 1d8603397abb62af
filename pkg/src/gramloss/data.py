"""Deterministic synthetic corpora and the line-delimited persistence format.

Token ids 0/1/2 are reserved for PAD/BOS/EOS; generated sequences never
contain them except the trailing EOS on targets.  The salient task keeps its
salient vocabulary small on purpose so that target bigrams repeat and the
repeated-gram regime of the overlap objectives gets exercised.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusFormatError, InvalidInputError
from .linalg import make_rng

PAD, BOS, EOS = 0, 1, 2
NUM_SPECIALS = 3

# Size of the designated salient token range [3, 3 + SALIENT_VOCAB).
SALIENT_VOCAB = 6


@dataclass
class Example:
    source: list
    target: list


@dataclass
class Corpus:
    examples: list
    config: dict = field(default_factory=dict)
    seed: int = 0


@dataclass
class Batch:
    sources: np.ndarray  # int array, B x max_src_len, PAD beyond true length
    targets: np.ndarray  # int array, B x max_tgt_len, PAD beyond true length
    source_lengths: list
    target_lengths: list


def _check_counts(count, length, vocab):
    if count < 1:
        raise InvalidInputError("corpus size must be >= 1")
    if length < 1:
        raise InvalidInputError("sequence length must be >= 1")
    if vocab <= NUM_SPECIALS + 1:
        raise InvalidInputError(f"vocab must exceed {NUM_SPECIALS + 1} to leave room for content tokens")


def gen_salient_task(vocab, source_len, n_salient, count, seed):
    """Desk-scale summarization proxy: target = the source's salient tokens.

    Each source carries exactly ``n_salient`` tokens from the salient range
    [3, 3 + SALIENT_VOCAB) at random positions, filler tokens elsewhere;
    the target is those salient tokens in source order plus EOS.
    """
    _check_counts(count, source_len, vocab)
    if n_salient < 1 or n_salient > source_len:
        raise InvalidInputError("n_salient must be in [1, source_len]")
    if vocab <= n_salient + NUM_SPECIALS:
        raise InvalidInputError("vocab too small for the requested salient count")
    filler_lo = NUM_SPECIALS + SALIENT_VOCAB
    if vocab <= filler_lo:
        raise InvalidInputError(f"vocab must exceed {filler_lo} to leave room for filler tokens")

    rng = make_rng(seed)
    examples = []
    for _ in range(count):
        positions = sorted(rng.choice(source_len, size=n_salient, replace=False).tolist())
        salient = rng.integers(NUM_SPECIALS, NUM_SPECIALS + SALIENT_VOCAB, size=n_salient).tolist()
        source = rng.integers(filler_lo, vocab, size=source_len).tolist()
        for pos, token in zip(positions, salient):
            source[pos] = token
        examples.append(Example(source=source, target=salient + [EOS]))
    config = {
        "task": "salient",
        "vocab_size": vocab,
        "source_len": source_len,
        "n_salient": n_salient,
        "count": count,
        "seed": seed,
    }
    return Corpus(examples=examples, config=config, seed=seed)


def _gen_mapped(vocab, length, count, seed, task, transform):
    _check_counts(count, length, vocab)
    rng = make_rng(seed)
    examples = []
    for _ in range(count):
        source = rng.integers(NUM_SPECIALS, vocab, size=length).tolist()
        examples.append(Example(source=source, target=transform(source) + [EOS]))
    config = {"task": task, "vocab_size": vocab, "length": length, "count": count, "seed": seed}
    return Corpus(examples=examples, config=config, seed=seed)


def gen_copy_task(vocab, length, count, seed):
    """target = source + EOS."""
    return _gen_mapped(vocab, length, count, seed, "copy", lambda s: list(s))


def gen_reverse_task(vocab, length, count, seed):
    """target = reversed source + EOS."""
    return _gen_mapped(vocab, length, count, seed, "reverse", lambda s: list(reversed(s)))


def write_corpus(corpus, path):
    """Newline-delimited UTF-8: a JSON header line, then one JSON object with
    "source" and "target" arrays per example."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "gramloss-corpus-v1", **corpus.config}) + "\n")
        for ex in corpus.examples:
            fh.write(json.dumps({"source": ex.source, "target": ex.target}) + "\n")


def read_corpus(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return Corpus(examples=[], config={}, seed=0)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"bad header: {exc}", line_number=1) from exc
    if not isinstance(header, dict) or header.get("format") != "gramloss-corpus-v1":
        raise CorpusFormatError("missing gramloss-corpus-v1 header", line_number=1)
    vocab = header.get("vocab_size")
    examples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"bad record: {exc}", line_number=lineno) from exc
        if not isinstance(record, dict) or "source" not in record or "target" not in record:
            raise CorpusFormatError("record needs 'source' and 'target' arrays", line_number=lineno)
        source, target = record["source"], record["target"]
        for name, seq in (("source", source), ("target", target)):
            if not isinstance(seq, list) or not all(isinstance(t, int) and t >= 0 for t in seq):
                raise CorpusFormatError(f"{name} must be an array of token ids", line_number=lineno)
            if vocab is not None and any(t >= vocab for t in seq):
                raise CorpusFormatError(f"{name} token out of vocabulary (>= {vocab})", line_number=lineno)
            if PAD in seq:
                raise CorpusFormatError(f"{name} contains PAD", line_number=lineno)
        examples.append(Example(source=source, target=target))
    config = {k: v for k, v in header.items() if k != "format"}
    return Corpus(examples=examples, config=config, seed=header.get("seed", 0))


def make_batches(corpus, batch_size, shuffle_seed):
    """Deterministic shuffle, then fixed-size groups padded to per-batch maxima."""
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    order = make_rng(shuffle_seed).permutation(len(corpus.examples))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [corpus.examples[i] for i in order[start : start + batch_size]]
        src_lens = [len(ex.source) for ex in chunk]
        tgt_lens = [len(ex.target) for ex in chunk]
        sources = np.full((len(chunk), max(src_lens)), PAD, dtype=np.int64)
        targets = np.full((len(chunk), max(tgt_lens)), PAD, dtype=np.int64)
        for i, ex in enumerate(chunk):
            sources[i, : src_lens[i]] = ex.source
            targets[i, : tgt_lens[i]] = ex.target
        batches.append(
            Batch(sources=sources, targets=targets, source_lengths=src_lens, target_lengths=tgt_lens)
        )
    return batches
