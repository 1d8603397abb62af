"""Command-line surface: gen-data / train / eval / gradcheck / oracle-check / bench.

Exit codes: 0 success, 1 validation error, 2 check failure, 3 divergence.
Every command is deterministic per (config, seed) except wall-time and
throughput fields.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import data, oracles
from .errors import GramlossError, InvalidInputError, ProbeRejectedError, TrainingDivergedError
from .linalg import make_rng
from .metrics import lcs_length, rouge_n
from .model import DecodeConfig, ModelConfig, load_checkpoint, save_checkpoint
from .objectives import (
    LossOutput,
    ObjectiveSpec,
    bon,
    cross_entropy,
    gradcheck,
    ngram_matches,
    ngram_rewards,
    pp2,
)
from .train import TrainSettings, rouge_table, run_training

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CHECK_FAILED = 2
EXIT_DIVERGED = 3

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["name", "seed"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "eval_every": {"type": "integer", "minimum": 1},
        "max_steps": {"type": "integer", "minimum": 1},
        "task": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["salient", "copy", "reverse"]},
                "vocab_size": {"type": "integer", "minimum": 5},
                "source_len": {"type": "integer", "minimum": 1},
                "length": {"type": "integer", "minimum": 1},
                "n_salient": {"type": "integer", "minimum": 1},
                "train_count": {"type": "integer", "minimum": 1},
                "eval_count": {"type": "integer", "minimum": 1},
            },
        },
        "corpus": {
            "type": "object",
            "required": ["train", "eval"],
            "additionalProperties": False,
            "properties": {"train": {"type": "string"}, "eval": {"type": "string"}},
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "embed_dim": {"type": "integer", "minimum": 2},
                "max_source_len": {"type": "integer", "minimum": 1},
                "max_target_len": {"type": "integer", "minimum": 1},
                "init_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "objective": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "use_ce": {"type": "boolean"},
                "rewards_orders": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                "matches_orders": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "pp2_orders": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "bon_orders": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "optim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "warmup_steps": {"type": "integer", "minimum": 0},
                "weight_decay": {"type": "number", "minimum": 0},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
            },
        },
        "decode": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beam_width": {"type": "integer", "minimum": 1},
                "length_penalty": {"type": "number", "minimum": 0},
                "min_len": {"type": "integer", "minimum": 0},
                "max_len": {"type": "integer", "minimum": 0},
            },
        },
    },
}


def _load_run_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    jsonschema.validate(config, RUN_CONFIG_SCHEMA)
    if "task" not in config and "corpus" not in config:
        raise InvalidInputError("run config needs either 'task' or 'corpus'")
    return config


def _make_corpora(config):
    seed = config["seed"]
    if "corpus" in config:
        return data.read_corpus(config["corpus"]["train"]), data.read_corpus(config["corpus"]["eval"])
    task = config["task"]
    kind = task["kind"]
    if kind == "salient":
        train = data.gen_salient_task(
            task.get("vocab_size", 50),
            task.get("source_len", 20),
            task.get("n_salient", 3),
            task.get("train_count", 2000),
            seed,
        )
        eval_ = data.gen_salient_task(
            task.get("vocab_size", 50),
            task.get("source_len", 20),
            task.get("n_salient", 3),
            task.get("eval_count", 200),
            seed + 10_000,
        )
    else:
        gen = data.gen_copy_task if kind == "copy" else data.gen_reverse_task
        train = gen(task.get("vocab_size", 20), task.get("length", 5), task.get("train_count", 2000), seed)
        eval_ = gen(task.get("vocab_size", 20), task.get("length", 5), task.get("eval_count", 200), seed + 10_000)
    return train, eval_


def _objective_spec(config):
    obj = config.get("objective", {})
    return ObjectiveSpec(
        use_ce=obj.get("use_ce", True),
        rewards_orders=tuple(obj.get("rewards_orders", ())),
        matches_orders=tuple(obj.get("matches_orders", ())),
        pp2_orders=tuple(obj.get("pp2_orders", ())),
        bon_orders=tuple(obj.get("bon_orders", ())),
    )


def _model_config(config, train_corpus):
    model = config.get("model", {})
    vocab = train_corpus.config.get("vocab_size")
    if vocab is None:
        vocab = 1 + max(max(ex.source + ex.target) for ex in train_corpus.examples)
    max_src = max(len(ex.source) for ex in train_corpus.examples)
    max_tgt = max(len(ex.target) for ex in train_corpus.examples)
    return ModelConfig(
        vocab_size=vocab,
        embed_dim=model.get("embed_dim", 32),
        max_source_len=model.get("max_source_len", max_src),
        max_target_len=model.get("max_target_len", max_tgt),
        init_scale=model.get("init_scale", 0.1),
    )


def _decode_config(config, model_config):
    decode = config.get("decode", {})
    return DecodeConfig(
        beam_width=decode.get("beam_width", 1),
        length_penalty=decode.get("length_penalty", 0.0),
        min_len=decode.get("min_len", 1),
        max_len=decode.get("max_len", model_config.max_target_len),
    )


def cmd_gen_data(args):
    kind = args.task
    if kind == "salient":
        corpus = data.gen_salient_task(args.vocab_size, args.source_len, args.n_salient, args.count, args.seed)
    elif kind == "copy":
        corpus = data.gen_copy_task(args.vocab_size, args.length, args.count, args.seed)
    elif kind == "reverse":
        corpus = data.gen_reverse_task(args.vocab_size, args.length, args.count, args.seed)
    else:  # argparse choices guard this
        raise InvalidInputError(f"unknown task {kind}")
    data.write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.examples)} examples to {args.out}")
    return EXIT_OK


def cmd_train(args):
    config = _load_run_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    out_root = Path(args.out_dir or config.get("out_dir", "runs"))
    run_dir = out_root / config["name"]
    if run_dir.exists():
        raise InvalidInputError(f"run directory {run_dir} already exists; refusing to overwrite")

    train_corpus, eval_corpus = _make_corpora(config)
    spec = _objective_spec(config)
    model_config = _model_config(config, train_corpus)
    optim_cfg = config.get("optim", {})
    settings = TrainSettings(
        lr=optim_cfg.get("lr", 3e-3),
        warmup_steps=optim_cfg.get("warmup_steps", 100),
        weight_decay=optim_cfg.get("weight_decay", 0.01),
        epochs=optim_cfg.get("epochs", 5),
        batch_size=optim_cfg.get("batch_size", 16),
        eval_every=config.get("eval_every", 50),
        seed=config["seed"],
    )

    try:
        result = run_training(
            model_config, spec, train_corpus, eval_corpus, settings, max_steps=config.get("max_steps")
        )
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED

    decode_config = _decode_config(config, model_config)
    report_table, pairs = rouge_table(result.params, model_config, eval_corpus, decode_config)

    run_dir.mkdir(parents=True)
    term_names = spec.term_names()
    with open(run_dir / "curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "total"] + term_names)
        for row in result.history:
            writer.writerow([row["step"], row["train_loss"]] + [row["terms"][t] for t in term_names])

    report = {
        "config": config,
        "eval_history": result.eval_history,
        "best_eval_loss": result.best_eval_loss,
        "rouge": {
            name: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
            for name, s in report_table.means.items()
        },
        "decode_samples": [
            {"candidate": cand, "reference": ref} for cand, ref in pairs[:5]
        ],
        "wall_time_seconds": result.wall_time,
        "examples_per_second": result.examples_per_second,
    }
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    save_checkpoint(run_dir / "checkpoint.bin", model_config, result.params, result.optim)
    print(f"run complete: best eval loss {result.best_eval_loss:.6f}, outputs in {run_dir}")
    return EXIT_OK


def cmd_eval(args):
    config, params, _ = load_checkpoint(args.checkpoint)
    corpus = data.read_corpus(args.corpus)
    decode_config = DecodeConfig(
        beam_width=args.beam_width,
        length_penalty=args.length_penalty,
        min_len=args.min_len,
        max_len=args.max_len if args.max_len is not None else config.max_target_len,
    )
    report, pairs = rouge_table(params, config, corpus, decode_config)
    out_prefix = Path(args.out) if args.out else None
    rows = []
    for i, scores in enumerate(report.per_example):
        rows.append(
            [i]
            + [getattr(scores[name], f) for name in ("rouge1", "rouge2", "rougeL") for f in ("precision", "recall", "f1")]
        )
    if out_prefix:
        with open(str(out_prefix) + ".csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["example"]
                + [f"{name}_{f}" for name in ("rouge1", "rouge2", "rougeL") for f in ("precision", "recall", "f1")]
            )
            writer.writerows(rows)
    summary = {
        name: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
        for name, s in report.means.items()
    }
    payload = json.dumps({"means": summary, "count": report.count}, indent=2)
    if out_prefix:
        with open(str(out_prefix) + ".json", "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    print(payload)
    return EXIT_OK


GRADCHECK_FAMILIES = [
    ("ce", lambda lo, r: cross_entropy(lo, r)),
    ("rewards2", lambda lo, r: ngram_rewards(lo, r, 2)),
    ("rewards3", lambda lo, r: ngram_rewards(lo, r, 3)),
    ("rewards4", lambda lo, r: ngram_rewards(lo, r, 4)),
    ("matches1", lambda lo, r: ngram_matches(lo, r, 1)),
    ("matches2", lambda lo, r: ngram_matches(lo, r, 2)),
    ("matches3", lambda lo, r: ngram_matches(lo, r, 3)),
    ("matches4", lambda lo, r: ngram_matches(lo, r, 4)),
    ("pp2_2", lambda lo, r: pp2(lo, r, 2)),
    ("bon2", lambda lo, r: bon(lo, r, 2)),
    ("bon3", lambda lo, r: bon(lo, r, 3)),
    ("bon4", lambda lo, r: bon(lo, r, 4)),
]


def random_stable_probe(rng, margin_floor=0.05, max_t=8, max_d=12):
    """Random (logits, ref) whose argmax margins all clear the floor."""
    while True:
        t = int(rng.integers(2, max_t + 1))
        d = int(rng.integers(4, max_d + 1))
        logits = rng.normal(0.0, 2.5, size=(t, d))
        from .linalg import softmax as _softmax
        from .ngrams import argmax_seq as _argmax_seq

        probs = _softmax(logits)
        _, _, margins = _argmax_seq(probs)
        if margins.min() >= margin_floor:
            # Half the probes copy argmax runs into the reference so that the
            # matched branches of the overlap objectives are exercised.
            cand = probs.argmax(axis=1)
            ref = [int(x) for x in rng.integers(0, d, size=t)]
            if rng.random() < 0.5:
                lo = int(rng.integers(0, t))
                hi = int(rng.integers(lo, t)) + 1
                ref[lo:hi] = [int(c) for c in cand[lo:hi]]
            return logits, ref


def run_gradcheck_suite(trials, tol, seed, h=1e-5, margin_floor=0.05, corrupt=False):
    """Per-family max relative errors over ``trials`` argmax-stable probes."""
    results = {}
    for name, fn in GRADCHECK_FAMILIES:
        rng = make_rng(seed)
        worst = 0.0
        done = 0
        while done < trials:
            logits, ref = random_stable_probe(rng, margin_floor=margin_floor)
            objective = (lambda lo, fn=fn, ref=ref: fn(lo, ref))
            if corrupt:
                clean = objective
                objective = lambda lo, clean=clean: LossOutput(clean(lo).value, clean(lo).grad + 0.01)
            try:
                report = gradcheck(objective, logits, ref, h=h, margin_floor=margin_floor)
            except ProbeRejectedError:
                continue
            worst = max(worst, report.max_rel_error)
            done += 1
        results[name] = worst
    return results, all(v < tol for v in results.values())


def cmd_gradcheck(args):
    results, passed = run_gradcheck_suite(
        args.trials, args.tolerance, args.seed, corrupt=args.inject_error
    )
    for name, err in results.items():
        status = "ok" if err < args.tolerance else "FAIL"
        print(f"{name:10s} max_rel_error={err:.3e} [{status}]")
    if not passed:
        print(f"gradcheck failed at tolerance {args.tolerance}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


ORACLE_PAIRS = [
    ("ce", lambda lo, r, n: cross_entropy(lo, r).value, lambda lo, r, n: oracles.cross_entropy_value(lo, r)),
    ("rewards", lambda lo, r, n: ngram_rewards(lo, r, max(2, n)).value, lambda lo, r, n: oracles.ngram_rewards_value(lo, r, max(2, n))),
    ("matches", lambda lo, r, n: ngram_matches(lo, r, n).value, lambda lo, r, n: oracles.ngram_matches_value(lo, r, n)),
    ("pp2", lambda lo, r, n: pp2(lo, r, n).value, lambda lo, r, n: oracles.pp2_value(lo, r, n)),
    ("bon", lambda lo, r, n: bon(lo, r, n).value, lambda lo, r, n: oracles.bon_value(lo, r, n)),
]


def run_oracle_suite(trials, seed, tol=1e-12, corrupt=False):
    """Optimized values vs definition-literal values on random instances,
    plus LCS DP vs memoized recursion and ROUGE vs direct counting."""
    if trials < 1:
        raise InvalidInputError("oracle check needs at least 1 trial")
    rng = make_rng(seed)
    failures = []
    worst = {name: 0.0 for name, _, _ in ORACLE_PAIRS}
    for trial in range(trials):
        t = int(rng.integers(1, 11))
        d = int(rng.integers(4, 9))
        n = int(rng.integers(1, 5))
        logits = rng.normal(0.0, 2.0, size=(t, d))
        ref = [int(x) for x in rng.integers(0, d, size=t)]
        logits_list = logits.tolist()
        for name, fast, slow in ORACLE_PAIRS:
            a = fast(logits, ref, n)
            b = slow(logits_list, ref, n)
            if corrupt and trial == 0:
                a += 1e-6
            diff = abs(a - b)
            worst[name] = max(worst[name], diff)
            if diff > tol:
                failures.append(f"{name}: |{a} - {b}| = {diff:.3e} at trial {trial}")
    # LCS / ROUGE side checks on small random sequences.
    lcs_worst = 0
    for trial in range(min(trials, 300)):
        a = [int(x) for x in rng.integers(0, 3, size=int(rng.integers(0, 9)))]
        b = [int(x) for x in rng.integers(0, 3, size=int(rng.integers(0, 9)))]
        dp = lcs_length(a, b)
        if dp != oracles.lcs_length_recursive(a, b) or dp != oracles.lcs_length_enumerate(a, b):
            failures.append(f"lcs mismatch on {a} vs {b}")
        cand = [int(x) for x in rng.integers(0, 4, size=int(rng.integers(1, 9)))]
        ref = [int(x) for x in rng.integers(0, 4, size=int(rng.integers(1, 9)))]
        n = int(rng.integers(1, 4))
        score = rouge_n(cand, ref, n)
        p, r, f = oracles.rouge_n_prf(cand, ref, n)
        if max(abs(score.precision - p), abs(score.recall - r), abs(score.f1 - f)) > tol:
            failures.append(f"rouge mismatch on {cand} vs {ref} n={n}")
    return worst, failures


def cmd_oracle_check(args):
    worst, failures = run_oracle_suite(args.trials, args.seed, corrupt=args.inject_error)
    for name, diff in worst.items():
        print(f"{name:10s} max_abs_diff={diff:.3e}")
    if failures:
        for line in failures[:20]:
            print(f"MISMATCH {line}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("oracle check passed")
    return EXIT_OK


BENCH_SWEEP = [
    ("ce", ObjectiveSpec(use_ce=True)),
    ("ce+bon2", ObjectiveSpec(use_ce=True, bon_orders=(2,))),
    ("ce+pp2", ObjectiveSpec(use_ce=True, pp2_orders=(2,))),
    ("ce+rewards2", ObjectiveSpec(use_ce=True, rewards_orders=(2,))),
    ("ce+matches2", ObjectiveSpec(use_ce=True, matches_orders=(2,))),
    ("ce+rewards234", ObjectiveSpec(use_ce=True, rewards_orders=(2, 3, 4))),
    ("ce+matches234", ObjectiveSpec(use_ce=True, matches_orders=(2, 3, 4))),
]


def run_bench(steps, batch_size, seed, repeats=3):
    """Examples/second per objective set on identical synthetic batches.

    Each objective gets one untimed warm-up step, then ``repeats`` timed
    passes; the best pass is reported to damp scheduler noise.
    """
    from .model import OptimState, init_model, train_step

    corpus = data.gen_salient_task(50, 20, 3, batch_size * steps, seed)
    model_config = ModelConfig(vocab_size=50, embed_dim=32, max_source_len=20, max_target_len=8)
    rows = []
    base = None
    for name, spec in BENCH_SWEEP:
        batches = data.make_batches(corpus, batch_size, seed)[:steps]
        throughput = 0.0
        for rep in range(repeats):
            params = init_model(model_config, seed)
            optim = OptimState.for_params(params)
            train_step(params, optim, model_config, batches[0], spec, lr=1e-3)
            start = time.perf_counter()
            examples = 0
            for batch in batches:
                stats = train_step(params, optim, model_config, batch, spec, lr=1e-3)
                examples += stats["examples"]
            elapsed = time.perf_counter() - start
            throughput = max(throughput, examples / elapsed)
        if base is None:
            base = throughput
        rows.append({"objective": name, "examples_per_second": throughput, "relative": throughput / base})
    return rows


def cmd_bench(args):
    rows = run_bench(args.steps, args.batch_size, args.seed)
    writer = csv.writer(sys.stdout)
    writer.writerow(["objective", "examples_per_second", "relative_to_ce"])
    for row in rows:
        writer.writerow([row["objective"], f"{row['examples_per_second']:.2f}", f"{row['relative']:.2f}"])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["objective", "examples_per_second", "relative_to_ce"])
            for row in rows:
                w.writerow([row["objective"], row["examples_per_second"], row["relative"]])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gramloss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus file")
    p.add_argument("--task", choices=["salient", "copy", "reverse"], required=True)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--source-len", type=int, default=20, help="salient task source length")
    p.add_argument("--n-salient", type=int, default=3)
    p.add_argument("--length", type=int, default=5, help="copy/reverse sequence length")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run a training experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="decode a corpus with a checkpoint and report ROUGE")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--beam-width", type=int, default=1)
    p.add_argument("--length-penalty", type=float, default=0.0)
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--out", default=None, help="prefix for .csv/.json outputs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle-check", help="optimized values vs brute-force definitions")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("bench", help="training throughput per objective set")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, jsonschema.ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except GramlossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
