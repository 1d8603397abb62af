"""Seeded training loop with periodic evaluation and best-checkpoint tracking.

The learning-rate schedule warms up linearly from 0 over ``warmup_steps``
and then decays linearly to 0 at the final step.  Checkpoint selection uses
the full composite evaluation loss.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .data import make_batches
from .metrics import corpus_eval
from .model import (
    DecodeConfig,
    ModelConfig,
    OptimState,
    beam_decode,
    forward_teacher_forced,
    init_model,
    train_step,
)
from .objectives import composite, term_values


@dataclass
class TrainSettings:
    lr: float = 3e-3
    warmup_steps: int = 100
    weight_decay: float = 0.01
    epochs: int = 5
    batch_size: int = 16
    eval_every: int = 50
    seed: int = 0


@dataclass
class TrainResult:
    params: object  # best-by-eval-loss parameters
    final_params: object
    optim: object
    history: list = field(default_factory=list)  # {"step", "train_loss", "terms"}
    eval_history: list = field(default_factory=list)  # {"step", "eval_loss", "terms", "ce_per_token"}
    best_eval_loss: float = float("inf")
    wall_time: float = 0.0
    examples_per_second: float = 0.0


def lr_at(step, total_steps, base_lr, warmup_steps):
    """Linear warmup to base_lr, then linear decay to 0 at total_steps."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    if total_steps <= warmup_steps:
        return base_lr
    remaining = total_steps - warmup_steps
    return base_lr * max(0.0, (total_steps - step)) / remaining


def evaluate_loss(params, config, corpus, spec):
    """Mean composite loss per example, per-term means, and CE nats/token."""
    total = 0.0
    terms = None
    ce_total = 0.0
    token_total = 0
    for ex in corpus.examples:
        logits = forward_teacher_forced(params, config, ex.source, ex.target)
        out = composite(logits, ex.target, spec)
        total += out.value
        tv = term_values(logits, ex.target, spec)
        if terms is None:
            terms = {k: 0.0 for k in tv}
        for k, v in tv.items():
            terms[k] += v
        if "ce" in tv:
            ce_total += tv["ce"]
            token_total += len(ex.target)
    n = len(corpus.examples)
    result = {
        "total": total / n,
        "terms": {k: v / n for k, v in terms.items()},
    }
    if token_total:
        result["ce_per_token"] = ce_total / token_total
    return result


def run_training(model_config, spec, train_corpus, eval_corpus, settings, max_steps=None,
                 init_params=None):
    """Train the model and return best/final params plus logged curves.

    Starts from a fresh seeded initialization unless ``init_params`` is given,
    in which case training continues from a copy of those parameters
    (fine-tuning with a fresh optimizer state).
    """
    if init_params is None:
        params = init_model(model_config, settings.seed)
    else:
        params = init_params.copy()
    optim = OptimState.for_params(params, weight_decay=settings.weight_decay)

    batches_per_epoch = max(1, (len(train_corpus.examples) + settings.batch_size - 1) // settings.batch_size)
    total_steps = settings.epochs * batches_per_epoch
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    result = TrainResult(params=None, final_params=None, optim=optim)
    start = time.perf_counter()
    examples_seen = 0
    step = 0
    done = False
    for epoch in range(settings.epochs):
        if done:
            break
        for batch in make_batches(train_corpus, settings.batch_size, settings.seed + epoch):
            lr = lr_at(step, total_steps, settings.lr, settings.warmup_steps)
            stats = train_step(params, optim, model_config, batch, spec, lr)
            examples_seen += stats["examples"]
            step += 1
            result.history.append({"step": step, "train_loss": stats["loss"], "terms": stats["terms"]})
            if step % settings.eval_every == 0 or step == total_steps:
                ev = evaluate_loss(params, model_config, eval_corpus, spec)
                record = {"step": step, "eval_loss": ev["total"], "terms": ev["terms"]}
                if "ce_per_token" in ev:
                    record["ce_per_token"] = ev["ce_per_token"]
                result.eval_history.append(record)
                if ev["total"] < result.best_eval_loss:
                    result.best_eval_loss = ev["total"]
                    result.params = params.copy()
            if step >= total_steps:
                done = True
                break
    result.wall_time = time.perf_counter() - start
    result.examples_per_second = examples_seen / result.wall_time if result.wall_time > 0 else 0.0
    result.final_params = params
    if result.params is None:
        result.params = params.copy()
        ev = evaluate_loss(params, model_config, eval_corpus, spec)
        result.best_eval_loss = ev["total"]
    return result


def decode_corpus(params, config, corpus, decode_config):
    """Decode every source; returns list of (candidate, reference)."""
    pairs = []
    for ex in corpus.examples:
        cand = beam_decode(params, config, ex.source, decode_config)
        ref = [t for t in ex.target if t != 2]  # strip trailing EOS for scoring
        pairs.append((cand, ref))
    return pairs


def rouge_table(params, config, corpus, decode_config, orders=(1, 2)):
    pairs = decode_corpus(params, config, corpus, decode_config)
    return corpus_eval(pairs, orders=orders), pairs
