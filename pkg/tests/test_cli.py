"""End-to-end CLI tests: every subcommand, exit codes, and artifact contents."""

import csv
import json

import numpy as np
import pytest

from gramloss.cli import main
from gramloss.data import BOS, EOS, Corpus, Example, read_corpus, write_corpus
from gramloss.model import ModelConfig, ModelParams, OptimState, param_shapes, save_checkpoint


def run_cli(*argv):
    return main(list(argv))


class TestGenData:
    def test_copy_roundtrip(self, tmp_path):
        out = tmp_path / "copy.jsonl"
        assert run_cli("gen-data", "--task", "copy", "--vocab-size", "12",
                       "--length", "4", "--count", "20", "--seed", "7",
                       "--out", str(out)) == 0
        corpus = read_corpus(out)
        assert len(corpus.examples) == 20
        for ex in corpus.examples:
            assert ex.target == ex.source + [EOS]

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            run_cli("gen-data", "--task", "salient", "--count", "30",
                    "--seed", "3", "--out", str(out))
        assert a.read_bytes() == b.read_bytes()

    def test_infeasible_task_exits_1(self, tmp_path):
        # n_salient > source_len cannot be generated.
        code = run_cli("gen-data", "--task", "salient", "--source-len", "2",
                       "--n-salient", "5", "--count", "5", "--seed", "0",
                       "--out", str(tmp_path / "x.jsonl"))
        assert code == 1


@pytest.fixture
def run_config(tmp_path):
    config = {
        "name": "smoke",
        "seed": 0,
        "eval_every": 10,
        "max_steps": 30,
        "task": {"kind": "copy", "vocab_size": 12, "length": 4,
                 "train_count": 100, "eval_count": 20},
        "model": {"embed_dim": 8},
        "objective": {"use_ce": True, "matches_orders": [2]},
        "optim": {"lr": 0.01, "warmup_steps": 10, "epochs": 5, "batch_size": 16},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path


class TestTrain:
    def test_artifacts_and_curve(self, tmp_path, run_config):
        out_dir = tmp_path / "runs"
        assert run_cli("train", "--config", str(run_config), "--out-dir", str(out_dir)) == 0
        run_dir = out_dir / "smoke"
        assert (run_dir / "checkpoint.bin").exists()
        report = json.loads((run_dir / "report.json").read_text())
        assert report["best_eval_loss"] == pytest.approx(
            min(r["eval_loss"] for r in report["eval_history"]))
        assert set(report["rouge"]) == {"rouge1", "rouge2", "rougeL"}
        with open(run_dir / "curve.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 30
        for row in rows:
            # Column sanity: total is the sum of the per-term columns.
            total = float(row["total"])
            parts = float(row["ce"]) + float(row["matches2"])
            assert total == pytest.approx(parts, rel=1e-9)

    def test_rerun_same_seed_identical_curve(self, tmp_path, run_config):
        curves = []
        for name in ("r1", "r2"):
            out_dir = tmp_path / name
            assert run_cli("train", "--config", str(run_config), "--out-dir", str(out_dir)) == 0
            curves.append((out_dir / "smoke" / "curve.csv").read_bytes())
        assert curves[0] == curves[1]

    def test_refuses_existing_run_dir(self, tmp_path, run_config):
        out_dir = tmp_path / "runs"
        (out_dir / "smoke").mkdir(parents=True)
        assert run_cli("train", "--config", str(run_config), "--out-dir", str(out_dir)) == 1

    def test_bad_config_exits_1(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"name": "x", "seed": 0, "bogus_key": 1}))
        assert run_cli("train", "--config", str(path)) == 1

    def test_missing_config_file_exits_1(self, tmp_path):
        assert run_cli("train", "--config", str(tmp_path / "nope.json")) == 1


class TestEval:
    def test_rigged_checkpoint_scores_perfectly(self, tmp_path):
        # A zeroed model wired to always emit [7] then EOS; references are [7].
        config = ModelConfig(vocab_size=10, embed_dim=4, max_source_len=4, max_target_len=3)
        arrays = {name: np.zeros(shape) for name, shape in param_shapes(config).items()}
        arrays["embed"][BOS, 0] = 1.0
        arrays["embed"][7, 1] = 1.0
        arrays["w_q"][:] = np.eye(config.embed_dim)
        arrays["w_out"][0, 7] = 10.0
        arrays["w_out"][1, EOS] = 10.0
        params = ModelParams(arrays=arrays)
        ckpt = tmp_path / "ckpt.bin"
        save_checkpoint(ckpt, config, params, OptimState.for_params(params))

        corpus = Corpus(
            examples=[Example(source=[3, 4], target=[7, EOS]),
                      Example(source=[5, 6, 8], target=[7, EOS])],
            config={"task": "rigged", "vocab_size": 10},
            seed=0,
        )
        corpus_path = tmp_path / "eval.jsonl"
        write_corpus(corpus, corpus_path)

        out_prefix = tmp_path / "scores"
        assert run_cli("eval", "--checkpoint", str(ckpt), "--corpus", str(corpus_path),
                       "--out", str(out_prefix)) == 0
        summary = json.loads((tmp_path / "scores.json").read_text())
        assert summary["count"] == 2
        assert summary["means"]["rouge1"]["f1"] == pytest.approx(1.0)
        assert summary["means"]["rougeL"]["f1"] == pytest.approx(1.0)
        with open(tmp_path / "scores.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert all(float(r["rouge1_f1"]) == 1.0 for r in rows)

    def test_missing_checkpoint_exits_1(self, tmp_path):
        assert run_cli("eval", "--checkpoint", str(tmp_path / "no.bin"),
                       "--corpus", str(tmp_path / "no.jsonl")) == 1


class TestGradcheck:
    def test_passes(self):
        assert run_cli("gradcheck", "--trials", "5", "--seed", "0") == 0

    def test_injected_error_detected(self):
        assert run_cli("gradcheck", "--trials", "5", "--seed", "0", "--inject-error") == 2


class TestOracleCheck:
    def test_passes(self):
        assert run_cli("oracle-check", "--trials", "50", "--seed", "0") == 0

    def test_zero_trials_exits_1(self):
        assert run_cli("oracle-check", "--trials", "0") == 1

    def test_injected_error_detected(self):
        assert run_cli("oracle-check", "--trials", "50", "--inject-error") == 2


class TestBench:
    def test_reports_all_objectives_with_ce_baseline(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert run_cli("bench", "--steps", "2", "--batch-size", "4",
                       "--out", str(out)) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["objective"] for r in rows][0] == "ce"
        assert float(rows[0]["relative_to_ce"]) == pytest.approx(1.0)
        assert len(rows) == 7
