import json
import os

import pytest

from gedkit.cli import main

M2_TRAIN = """S I has a dog
A 1 2|||R:VERB|||have|||REQUIRED|||-NONE-|||0

S the cat sit on mat
A 2 3|||R:VERB|||sits|||REQUIRED|||-NONE-|||0

S all fine here

S she going home
A 1 1|||M:VERB|||is|||REQUIRED|||-NONE-|||0
"""

M2_TWO_ANN = """S I has a dog
A 1 2|||R:VERB|||have|||REQUIRED|||-NONE-|||0
A 3 4|||R:NOUN|||cat|||REQUIRED|||-NONE-|||1
"""


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "train.m2").write_text(M2_TRAIN)
    (tmp_path / "dev.m2").write_text(M2_TRAIN)
    (tmp_path / "test.m2").write_text(M2_TWO_ANN)
    (tmp_path / "orig.txt").write_text("I has a dog\nall fine here\n")
    (tmp_path / "corr.txt").write_text("I have a dog\nall fine here\n")
    cfg = {
        "seed": 7,
        "paths": {
            "train": {"m2": str(tmp_path / "train.m2")},
            "dev": {"m2": str(tmp_path / "dev.m2")},
            "tests": [{"name": "toy", "m2": str(tmp_path / "test.m2")}],
            "out_dir": str(tmp_path / "run"),
        },
        "train": {"batch_size": 4, "max_epochs": 2, "patience": 3},
        "model": {
            "word_dim": 8,
            "char_dim": 4,
            "word_hidden": 8,
            "char_hidden": 4,
            "proj_dim": 4,
        },
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    return tmp_path, cfg_path, cfg


class TestPrepare:
    def test_happy_path(self, workspace):
        tmp, cfg_path, _ = workspace
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        out = tmp / "run"
        for name in ("train.jsonl", "dev.jsonl", "test_toy.jsonl", "vocab.json",
                     "manifest.json", "corpus.sids.txt"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["inputs"]) == 3

    def test_parallel_format(self, workspace):
        tmp, cfg_path, cfg = workspace
        cfg["paths"]["train"] = {"orig": str(tmp / "orig.txt"), "corr": str(tmp / "corr.txt")}
        cfg_path.write_text(json.dumps(cfg))
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        recs = (tmp / "run" / "train.jsonl").read_text().strip().split("\n")
        assert len(recs) == 2

    def test_missing_file_exit_2_no_partial_outputs(self, workspace):
        tmp, cfg_path, cfg = workspace
        cfg["paths"]["train"] = {"m2": str(tmp / "nope.m2")}
        cfg_path.write_text(json.dumps(cfg))
        assert main(["prepare", "--config", str(cfg_path)]) == 2
        assert not (tmp / "run" / "vocab.json").exists()

    def test_pseudo_store_emitted(self, workspace):
        tmp, cfg_path, _ = workspace
        rc = main(["prepare", "--config", str(cfg_path), "--pseudo-store",
                   "--pseudo-layers", "3", "--pseudo-dim", "6"])
        assert rc == 0
        assert (tmp / "run" / "pseudo.ctx").exists()

    def test_idempotent_outputs(self, workspace):
        tmp, cfg_path, _ = workspace
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        first = {f: (tmp / "run" / f).read_bytes()
                 for f in ("train.jsonl", "vocab.json", "corpus.sids.txt")}
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        for f, blob in first.items():
            assert (tmp / "run" / f).read_bytes() == blob


class TestTrainEvaluate:
    def run_pipeline(self, workspace, extra_train=()):
        tmp, cfg_path, _ = workspace
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        assert main(["train", "--config", str(cfg_path), *extra_train]) == 0
        return tmp, cfg_path

    def test_train_writes_checkpoint_and_history(self, workspace):
        tmp, _ = self.run_pipeline(workspace)[0], None
        assert (tmp / "run" / "model.ckpt").exists()
        history = (tmp / "run" / "history.tsv").read_text().strip().split("\n")
        assert history[0].startswith("epoch\t")
        assert len(history) >= 2

    def test_integration_without_store_exit_3(self, workspace):
        tmp, cfg_path, _ = workspace
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        rc = main(["train", "--config", str(cfg_path), "--integration", "input"])
        assert rc == 3

    def test_train_with_pseudo_store_integration(self, workspace):
        tmp, cfg_path, cfg = workspace
        assert main(["prepare", "--config", str(cfg_path), "--pseudo-store",
                     "--pseudo-dim", "6"]) == 0
        store = str(tmp / "run" / "pseudo.ctx")
        rc = main(["train", "--config", str(cfg_path), "--integration", "input",
                   "--store", store])
        assert rc == 0

    def test_evaluate_reports_two_annotator_rows(self, workspace, capsys):
        tmp, cfg_path = self.run_pipeline(workspace)
        capsys.readouterr()  # drain prepare/train logs
        assert main(["evaluate", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        lines = [l for l in out.strip().split("\n") if l]
        assert lines[0] == "dataset\tP\tR\tF0.5"
        names = [l.split("\t")[0] for l in lines[1:]]
        assert names == ["toy:a0", "toy:a1"]

    def test_evaluate_matches_library_f_beta(self, workspace, capsys):
        from gedkit import evaluation

        tmp, cfg_path = self.run_pipeline(workspace)
        capsys.readouterr()
        assert main(["evaluate", "--config", str(cfg_path)]) == 0
        rows = capsys.readouterr().out.strip().split("\n")[1:]
        for row in rows:
            _, p, r, f = row.split("\t")
            assert float(f) == pytest.approx(
                evaluation.f_score(float(p), float(r), 0.5), abs=0.005 + 1e-9
            )

    def test_predict_output(self, workspace, capsys):
        tmp, cfg_path = self.run_pipeline(workspace)
        out_file = tmp / "preds.tsv"
        assert main(["predict", "--config", str(cfg_path), "--output", str(out_file)]) == 0
        lines = out_file.read_text().strip().split("\n")
        assert lines[0] == "sid\tindex\ttoken\tp_incorrect\tlabel"
        assert len(lines) == 1 + 4  # the two-annotator test sentence has 4 tokens

    def test_analyze_typed_report(self, workspace, capsys):
        tmp, cfg_path = self.run_pipeline(workspace)
        assert main(["analyze", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "# overall (micro-average)" in out
        assert "type\tdetected\ttotal\trecall\tfrequency" in out

    def test_missing_checkpoint_exit_4(self, workspace):
        tmp, cfg_path, _ = workspace
        assert main(["prepare", "--config", str(cfg_path)]) == 0
        rc = main(["evaluate", "--config", str(cfg_path),
                   "--checkpoint", str(tmp / "missing.ckpt")])
        assert rc == 4


class TestConfigPrecedence:
    def test_cli_flag_overrides_config(self, workspace):
        tmp, cfg_path, cfg = workspace
        cfg["seed"] = 1
        cfg_path.write_text(json.dumps(cfg))
        assert main(["prepare", "--config", str(cfg_path), "--seed", "99"]) == 0
        manifest = json.loads((tmp / "run" / "manifest.json").read_text())
        assert manifest["seed"] == 99

    def test_bad_config_json_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        assert main(["prepare", "--config", str(bad)]) == 2
