"""Desk-scale attention encoder-decoder with a hand-derived backward pass.

The architecture is deliberately small and non-recurrent so the whole
backward pass is verifiable against finite differences:

* encoder state per source position: ``h = tanh(W_enc (emb + pos_src) + b)``;
* decoder query at target position t: the embedding of the previous target
  token (BOS at t = 0) plus the target positional embedding, mapped through
  the query transform;
* scaled dot-product attention over the encoder states (key/value
  transforms), one head;
* output logits: ``[query ; context] W_out + b_out``.

Each logit row therefore depends only on the source and on target tokens
strictly before it, which is the causality the teacher-forced objectives
assume.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import BOS, EOS, PAD
from .errors import InvalidInputError, TrainingDivergedError
from .linalg import log_softmax, make_rng, seeded_uniform, softmax, softmax_backward
from .objectives import batch_loss, term_values

CHECKPOINT_MAGIC = b"GRAMLOSS"
CHECKPOINT_VERSION = 1

PARAM_NAMES = (
    "embed",
    "pos_src",
    "pos_tgt",
    "w_enc",
    "b_enc",
    "w_q",
    "w_k",
    "w_v",
    "w_out",
    "b_out",
)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 32
    max_source_len: int = 32
    max_target_len: int = 16
    init_scale: float = 0.1

    def __post_init__(self):
        if self.vocab_size < 4:
            raise InvalidInputError("vocab_size must be >= 4 (PAD/BOS/EOS plus content)")
        if self.embed_dim < 2:
            raise InvalidInputError("embed_dim must be >= 2")
        if self.max_source_len < 1 or self.max_target_len < 1:
            raise InvalidInputError("sequence length limits must be >= 1")
        if self.init_scale <= 0:
            raise InvalidInputError("init_scale must be positive")


@dataclass
class ModelParams:
    """All trainable arrays, keyed by the names in PARAM_NAMES."""

    arrays: dict

    def copy(self):
        return ModelParams(arrays={k: v.copy() for k, v in self.arrays.items()})

    def __getitem__(self, name):
        return self.arrays[name]


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 1
    length_penalty: float = 0.0
    min_len: int = 1
    max_len: int = 16

    def __post_init__(self):
        if self.beam_width < 1:
            raise InvalidInputError("beam_width must be >= 1")
        if self.length_penalty < 0:
            raise InvalidInputError("length_penalty must be >= 0")
        if self.min_len > self.max_len:
            raise InvalidInputError("min_len must be <= max_len")


def param_shapes(config):
    d, e = config.vocab_size, config.embed_dim
    return {
        "embed": (d, e),
        "pos_src": (config.max_source_len, e),
        "pos_tgt": (config.max_target_len, e),
        "w_enc": (e, e),
        "b_enc": (e,),
        "w_q": (e, e),
        "w_k": (e, e),
        "w_v": (e, e),
        "w_out": (2 * e, d),
        "b_out": (d,),
    }


def init_model(config, seed):
    """All parameters uniform in [-init_scale, init_scale), one shared stream."""
    rng = make_rng(seed)
    scale = config.init_scale
    arrays = {
        name: seeded_uniform(rng, -scale, scale, shape)
        for name, shape in param_shapes(config).items()
    }
    return ModelParams(arrays=arrays)


def _check_tokens(config, seq, limit, what):
    seq = [int(t) for t in seq]
    if len(seq) > limit:
        raise InvalidInputError(f"{what} length {len(seq)} exceeds limit {limit}")
    for t in seq:
        if t < 0 or t >= config.vocab_size:
            raise InvalidInputError(f"{what} token {t} out of vocabulary")
    return seq


def encode(params, config, source):
    """Per-position encoder states; returns (states, pre_activation_inputs)."""
    source = _check_tokens(config, source, config.max_source_len, "source")
    x = params["embed"][source] + params["pos_src"][: len(source)]
    h = np.tanh(x @ params["w_enc"] + params["b_enc"])
    return h, x


def _decode_rows(params, h, prev_tokens, positions):
    """Attention + output projection for a block of decoder positions."""
    q_raw = params["embed"][prev_tokens] + params["pos_tgt"][positions]
    q = q_raw @ params["w_q"]
    k = h @ params["w_k"]
    v = h @ params["w_v"]
    scale = 1.0 / np.sqrt(params["w_q"].shape[0])
    attn = softmax(q @ k.T * scale)
    context = attn @ v
    cat = np.concatenate([q, context], axis=1)
    logits = cat @ params["w_out"] + params["b_out"]
    return logits, {
        "q_raw": q_raw,
        "q": q,
        "k": k,
        "v": v,
        "attn": attn,
        "context": context,
        "cat": cat,
        "scale": scale,
    }


def forward_teacher_forced(params, config, source, target, with_cache=False):
    """Logit matrix (|target| x D) with gold previous tokens as decoder input."""
    target = _check_tokens(config, target, config.max_target_len, "target")
    h, x = encode(params, config, source)
    prev = np.array([BOS] + target[:-1], dtype=np.int64)
    positions = np.arange(len(target))
    logits, attn_cache = _decode_rows(params, h, prev, positions)
    if not with_cache:
        return logits
    cache = {
        "source": [int(t) for t in source],
        "target": target,
        "prev": prev,
        "positions": positions,
        "h": h,
        "x": x,
        **attn_cache,
    }
    return logits, cache


def backward(params, cache, d_logits):
    """Gradients of a scalar loss w.r.t. every parameter, given d loss/d logits."""
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays.items()}
    h, x = cache["h"], cache["x"]
    q, k, v, attn = cache["q"], cache["k"], cache["v"], cache["attn"]
    cat, scale = cache["cat"], cache["scale"]
    e = q.shape[1]

    grads["w_out"] += cat.T @ d_logits
    grads["b_out"] += d_logits.sum(axis=0)
    d_cat = d_logits @ params["w_out"].T
    d_q = d_cat[:, :e].copy()
    d_context = d_cat[:, e:]

    d_attn = d_context @ v.T
    d_v = attn.T @ d_context
    d_scores = softmax_backward(attn, d_attn)
    d_q += d_scores @ k * scale
    d_k = d_scores.T @ q * scale

    grads["w_q"] += cache["q_raw"].T @ d_q
    d_q_raw = d_q @ params["w_q"].T
    grads["w_k"] += h.T @ d_k
    grads["w_v"] += h.T @ d_v
    d_h = d_k @ params["w_k"].T + d_v @ params["w_v"].T

    d_z = d_h * (1.0 - h * h)
    grads["w_enc"] += x.T @ d_z
    grads["b_enc"] += d_z.sum(axis=0)
    d_x = d_z @ params["w_enc"].T

    np.add.at(grads["embed"], cache["prev"], d_q_raw)
    grads["pos_tgt"][cache["positions"]] += d_q_raw
    np.add.at(grads["embed"], cache["source"], d_x)
    grads["pos_src"][: len(cache["source"])] += d_x
    return grads


@dataclass
class OptimState:
    """Adam moments plus decoupled weight decay settings."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    @classmethod
    def for_params(cls, params, weight_decay=0.01):
        return cls(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
            weight_decay=weight_decay,
        )


def adam_update(params, optim, grads, lr):
    """Decoupled weight decay, then Adam with bias correction.  In place."""
    optim.step += 1
    b1, b2 = optim.beta1, optim.beta2
    correction1 = 1.0 - b1**optim.step
    correction2 = 1.0 - b2**optim.step
    for name, p in params.arrays.items():
        g = grads[name]
        p -= lr * optim.weight_decay * p
        optim.m[name] = b1 * optim.m[name] + (1 - b1) * g
        optim.v[name] = b2 * optim.v[name] + (1 - b2) * g * g
        m_hat = optim.m[name] / correction1
        v_hat = optim.v[name] / correction2
        p -= lr * m_hat / (np.sqrt(v_hat) + optim.eps)


def train_step(params, optim, config, batch, spec, lr):
    """One optimizer step on a padded batch; mutates params and optim.

    Returns stats: total loss, per-term means, and examples processed.
    """
    n = len(batch.target_lengths)
    if n == 0:
        raise InvalidInputError("empty batch")
    items = []
    caches = []
    for i in range(n):
        source = batch.sources[i, : batch.source_lengths[i]]
        target = batch.targets[i, : batch.target_lengths[i]].tolist()
        logits, cache = forward_teacher_forced(params, config, source, target, with_cache=True)
        items.append((logits, target, len(target)))
        caches.append(cache)

    value, grads_per_example = batch_loss(items, spec)
    if not np.isfinite(value):
        raise TrainingDivergedError(f"non-finite loss {value}")

    terms = {name: 0.0 for name in spec.term_names()}
    for logits, target, _ in items:
        for name, term_value in term_values(logits, target, spec).items():
            terms[name] += term_value / n

    total_grads = {name: np.zeros_like(arr) for name, arr in params.arrays.items()}
    for cache, d_logits in zip(caches, grads_per_example):
        for name, g in backward(params, cache, d_logits).items():
            total_grads[name] += g
    adam_update(params, optim, total_grads, lr)
    return {"loss": value, "terms": terms, "examples": n}


def _step_logits(params, config, h, prev_token, position):
    logits, _ = _decode_rows(
        params, h, np.array([prev_token], dtype=np.int64), np.array([position])
    )
    return logits[0]


def greedy_decode(params, config, source, decode_config):
    """Argmax decoding; EOS is suppressed before min_len and never emitted."""
    return beam_decode(
        params,
        config,
        source,
        DecodeConfig(
            beam_width=1,
            length_penalty=0.0,
            min_len=decode_config.min_len,
            max_len=decode_config.max_len,
        ),
    )


def beam_decode(params, config, source, decode_config):
    """Beam search over log-probabilities.

    Finished hypotheses score ``logprob / len(tokens)**alpha`` (tokens
    excluding EOS; length clamped to >= 1).  Falls back to the best
    unfinished hypothesis when nothing finished within max_len.
    """
    if decode_config.max_len == 0:
        return []
    h, _ = encode(params, config, source)
    width = decode_config.beam_width
    alpha = decode_config.length_penalty
    max_len = min(decode_config.max_len, config.max_target_len)

    def final_score(tokens, logprob):
        return logprob / max(1, len(tokens)) ** alpha

    beams = [((), 0.0)]  # (tokens, running logprob), BOS implicit
    finished = []
    for position in range(max_len):
        candidates = []
        for tokens, logprob in beams:
            prev = tokens[-1] if tokens else BOS
            row = _step_logits(params, config, h, prev, position).copy()
            row[PAD] = -np.inf
            row[BOS] = -np.inf
            if len(tokens) < decode_config.min_len:
                row[EOS] = -np.inf
            # Renormalize over the allowed tokens only.
            log_probs = log_softmax(np.where(np.isfinite(row), row, -1e30)[None, :])[0]
            log_probs = np.where(np.isfinite(row), log_probs, -np.inf)
            for token in np.argsort(-log_probs, kind="stable")[: width + 2]:
                lp = log_probs[token]
                if not np.isfinite(lp):
                    continue
                if token == EOS:
                    finished.append((tokens, logprob + lp))
                else:
                    candidates.append((tokens + (int(token),), logprob + lp))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beams = candidates[:width]
    if finished:
        best = max(finished, key=lambda c: final_score(*c))
        return list(best[0])
    best = max(beams, key=lambda c: final_score(*c))
    return list(best[0])


def save_checkpoint(path, config, params, optim):
    """Versioned binary: magic, u32 header length, JSON header, then raw
    little-endian float64 arrays in header order."""
    header = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "vocab_size": config.vocab_size,
            "embed_dim": config.embed_dim,
            "max_source_len": config.max_source_len,
            "max_target_len": config.max_target_len,
            "init_scale": config.init_scale,
        },
        "optim": {
            "step": optim.step,
            "beta1": optim.beta1,
            "beta2": optim.beta2,
            "eps": optim.eps,
            "weight_decay": optim.weight_decay,
        },
        "arrays": [],
    }
    blobs = []
    for group, source in (("params", params.arrays), ("m", optim.m), ("v", optim.v)):
        for name in PARAM_NAMES:
            arr = np.ascontiguousarray(source[name], dtype="<f8")
            header["arrays"].append({"group": group, "name": name, "shape": list(arr.shape)})
            blobs.append(arr.tobytes())
    encoded = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise InvalidInputError("not a gramloss checkpoint")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {header.get('version')}")
        groups = {"params": {}, "m": {}, "v": {}}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            groups[entry["group"]][entry["name"]] = data.astype(np.float64).copy()
    config = ModelConfig(**header["config"])
    params = ModelParams(arrays=groups["params"])
    optim = OptimState(
        m=groups["m"],
        v=groups["v"],
        step=header["optim"]["step"],
        beta1=header["optim"]["beta1"],
        beta2=header["optim"]["beta2"],
        eps=header["optim"]["eps"],
        weight_decay=header["optim"]["weight_decay"],
    )
    return config, params, optim
