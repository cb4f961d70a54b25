import numpy as np
import pytest

from gedkit import corpus, model, training
from gedkit.errors import CheckpointError, NumericError, ValidationError
from gedkit.model import ModelConfig, predict
from gedkit.training import (
    AdaDeltaState,
    TrainConfig,
    adadelta_step,
    load_checkpoint,
    make_batches,
    save_checkpoint,
    train,
)

from conftest import synthetic_corpus, tiny_model
from oracles import adadelta_scalar_trace


class TestAdaDelta:
    def test_zero_gradient_is_fixed_point(self):
        params, batch, _, _, _ = tiny_model()
        state = AdaDeltaState.fresh(params)
        before = {k: v.copy() for k, v in params.arrays().items()}
        zero = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        adadelta_step(state, zero, params)
        for k, v in params.arrays().items():
            assert np.array_equal(v, before[k])

    def test_first_step_hand_value(self):
        # g=1, rho=0.95, eps=1e-6, lr=1: Eg=0.05, dx=-sqrt(1e-6)/sqrt(0.050001)
        params, _, _, _, _ = tiny_model()
        state = AdaDeltaState.fresh(params)
        arrays = params.arrays()
        x0 = arrays["detect.b"].copy()
        grads = {k: np.zeros_like(v) for k, v in arrays.items()}
        grads["detect.b"][:] = 1.0
        adadelta_step(state, grads, params, lr=1.0, rho=0.95, epsilon=1e-6)
        delta = arrays["detect.b"] - x0
        assert np.allclose(delta, -0.0044721, atol=1e-7)
        assert np.allclose(state.sq_grad["detect.b"], 0.05, atol=1e-12)

    def test_100_step_trace_matches_scalar_simulation(self):
        params, _, _, _, _ = tiny_model()
        arrays = params.arrays()
        name = "detect.b"
        arrays[name][:] = 0.0
        state = AdaDeltaState.fresh(params)
        grads = {k: np.zeros_like(v) for k, v in arrays.items()}
        trace = []
        for _ in range(100):
            grads[name][:] = 1.0
            adadelta_step(state, grads, params, lr=1.0, rho=0.95, epsilon=1e-6)
            trace.append(float(arrays[name][0]))
        expected = adadelta_scalar_trace([1.0] * 100)
        assert np.allclose(trace, expected, atol=1e-12)

    def test_first_step_magnitude_bound(self, rng):
        params, _, _, _, _ = tiny_model()
        state = AdaDeltaState.fresh(params)
        arrays = params.arrays()
        before = {k: v.copy() for k, v in arrays.items()}
        grads = {k: rng.normal(size=v.shape) for k, v in arrays.items()}
        lr, eps = 1.0, 1e-6
        adadelta_step(state, grads, params, lr=lr, epsilon=eps)
        for k, v in arrays.items():
            bound = lr * np.sqrt((state.sq_delta[k] + eps) / eps) + 1e-12
            assert np.all(np.abs(v - before[k]) <= bound)

    def test_nonfinite_gradient_names_parameter(self):
        params, _, _, _, _ = tiny_model()
        state = AdaDeltaState.fresh(params)
        grads = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        grads["hidden.w"][0, 0] = np.nan
        with pytest.raises(NumericError) as exc:
            adadelta_step(state, grads, params)
        assert "hidden.w" in str(exc.value)


class TestBatches:
    def encoded(self, n=70):
        anns = [corpus.make_annotated(f"s{i}", ["w"] * (1 + i % 5), []) for i in range(n)]
        vocab = corpus.build_vocab([a.sentence for a in anns])
        return [corpus.encode(a.sentence, vocab) for a in anns]

    def test_batch_sizes(self):
        batches = make_batches(self.encoded(70), 32, seed=0)
        assert [b.size for b in batches] == [32, 32, 6]

    def test_fixed_seed_reproducible(self):
        enc = self.encoded(20)
        a = make_batches(enc, 8, seed=3)
        b = make_batches(enc, 8, seed=3)
        assert [x.sids for x in a] == [y.sids for y in b]
        c = make_batches(enc, 8, seed=4)
        assert [x.sids for x in a] != [y.sids for y in c]

    def test_padding_and_mask(self):
        anns = [
            corpus.make_annotated("a", ["x"] * 3, []),
            corpus.make_annotated("b", ["x"] * 5, []),
        ]
        vocab = corpus.build_vocab([a.sentence for a in anns])
        enc = [corpus.encode(a.sentence, vocab) for a in anns]
        (batch,) = make_batches(enc, 2, seed=0)
        assert batch.max_len == 5
        assert sorted(batch.mask.sum(axis=1).tolist()) == [3.0, 5.0]

    def test_empty_corpus(self):
        with pytest.raises(ValidationError):
            make_batches([], 4, seed=0)


class TestTrainLoop:
    def small_setup(self, n=12):
        anns = synthetic_corpus(n)
        vocab = corpus.build_vocab([a.sentence for a in anns])
        enc = [corpus.encode(a.sentence, vocab) for a in anns]
        cfg = TrainConfig(
            model=ModelConfig(word_dim=8, char_dim=4, word_hidden=8, char_hidden=4, proj_dim=4),
            batch_size=8,
            max_epochs=3,
            seed=5,
        )
        return enc, vocab, cfg

    def test_deterministic_loss_trajectory(self):
        enc, vocab, cfg = self.small_setup()
        _, h1 = train(enc, enc, cfg, vocab=vocab)
        _, h2 = train(enc, enc, cfg, vocab=vocab)
        t1 = [e.train_loss for e in h1.epochs]
        t2 = [e.train_loss for e in h2.epochs]
        assert t1 == t2  # bitwise-identical floats

    def test_early_stopping_trace(self, monkeypatch):
        # Dev F0.5 trace 0.30, 0.31, then flat 0.31: patience 7 stops after
        # epoch 9 and returns the epoch-2 parameters.
        enc, vocab, cfg = self.small_setup()
        cfg = TrainConfig(model=cfg.model, batch_size=8, max_epochs=50, patience=7, seed=5)
        fake = iter([0.30, 0.31] + [0.31] * 48)
        snapshots = {}

        def fake_eval(sentences, params, store=None, batch_size=64):
            return training.evaluation.EvalCounts()

        def fake_fbeta(counts, beta=0.5):
            f = next(fake)
            return f, f, f

        monkeypatch.setattr(training, "evaluate_corpus", fake_eval)
        monkeypatch.setattr(training.evaluation, "f_beta", fake_fbeta)
        params, history = train(enc, enc, cfg, vocab=vocab)
        assert len(history.epochs) == 9
        assert history.best_epoch == 2

    def test_patience_zero_stops_at_first_non_improvement(self, monkeypatch):
        enc, vocab, cfg = self.small_setup()
        cfg = TrainConfig(model=cfg.model, batch_size=8, max_epochs=50, patience=0, seed=5)
        fake = iter([0.5, 0.6, 0.6, 0.7, 0.7])
        monkeypatch.setattr(training, "evaluate_corpus",
                            lambda *a, **k: training.evaluation.EvalCounts())
        monkeypatch.setattr(training.evaluation, "f_beta",
                            lambda counts, beta=0.5: (lambda f: (f, f, f))(next(fake)))
        params, history = train(enc, enc, cfg, vocab=vocab)
        assert len(history.epochs) == 3
        assert history.best_epoch == 2

    def test_best_epoch_params_returned(self):
        # The returned params must reproduce the best recorded dev F0.5.
        enc, vocab, cfg = self.small_setup()
        cfg = TrainConfig(model=cfg.model, batch_size=8, max_epochs=4, patience=10, seed=5)
        params, history = train(enc, enc, cfg, vocab=vocab)
        counts = training.evaluate_corpus(enc, params)
        _, _, f05 = training.evaluation.f_beta(counts)
        best = max(e.dev_f05 for e in history.epochs)
        assert f05 == pytest.approx(best, abs=1e-12)

    def test_integration_without_store_fails_fast(self):
        enc, vocab, cfg = self.small_setup()
        mcfg = ModelConfig(word_dim=8, char_dim=4, word_hidden=8, char_hidden=4,
                           proj_dim=4, integration="input", context_dim=4)
        cfg = TrainConfig(model=mcfg, batch_size=8, max_epochs=2, seed=5)
        with pytest.raises(ValidationError):
            train(enc, enc, cfg, vocab=vocab)

    def test_store_coverage_gap_fails_before_training(self):
        from gedkit.embeddings import ContextualVectorStore, build_pseudo_store

        enc, vocab, cfg = self.small_setup()
        mcfg = ModelConfig(word_dim=8, char_dim=4, word_hidden=8, char_hidden=4,
                           proj_dim=4, integration="input", context_dim=4)
        cfg = TrainConfig(model=mcfg, batch_size=8, max_epochs=2, seed=5)
        full = build_pseudo_store(enc, 1, 4, seed=0)
        partial = ContextualVectorStore(
            "Pseudo", 1, 4, {k: v for k, v in full.vectors.items() if k[0] != enc[0].sid}
        )
        with pytest.raises(ValidationError) as exc:
            train(enc, enc, cfg, store=partial, vocab=vocab)
        assert "missing" in str(exc.value)

    def test_history_tsv_schema(self):
        enc, vocab, cfg = self.small_setup()
        _, history = train(enc, enc, cfg, vocab=vocab)
        lines = history.to_tsv().strip().split("\n")
        assert lines[0] == "epoch\ttrain_loss\tdev_P\tdev_R\tdev_F05\tseconds"
        assert len(lines) == len(history.epochs) + 1
        assert all(len(l.split("\t")) == 6 for l in lines[1:])

    def test_pad_rows_stay_zero_through_training(self):
        enc, vocab, cfg = self.small_setup()
        params, _ = train(enc, enc, cfg, vocab=vocab)
        assert np.all(params.word_table.matrix[corpus.PAD] == 0.0)
        assert np.all(params.char_table.matrix[corpus.PAD] == 0.0)


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        params, batch, store, vocab, enc = tiny_model("output", 3, 5)
        cfg = TrainConfig(model=params.config, seed=9)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(params, cfg, vocab, path)
        blob1 = open(path, "rb").read()
        loaded, cfg2, vocab2 = load_checkpoint(path)
        for k, v in params.arrays().items():
            assert np.array_equal(loaded.arrays()[k], v)
        assert cfg2.to_dict() == cfg.to_dict()
        assert vocab2.word_to_id == vocab.word_to_id
        save_checkpoint(loaded, cfg2, vocab2, path)
        blob2 = open(path, "rb").read()
        assert blob1 == blob2

    def test_predictions_identical_after_roundtrip(self, tmp_path):
        params, batch, store, vocab, enc = tiny_model("input", 1, 6)
        cfg = TrainConfig(model=params.config, seed=9)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(params, cfg, vocab, path)
        loaded, _, _ = load_checkpoint(path)
        for sent in enc:
            assert predict(sent, params, store) == predict(sent, loaded, store)

    def test_truncated_file_rejected(self, tmp_path):
        params, _, _, vocab, _ = tiny_model()
        cfg = TrainConfig(model=params.config)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(params, cfg, vocab, path)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[: len(blob) - 9])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"hello world")
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_integration_checkpoint_without_store_fails_fast(self, tmp_path):
        params, batch, store, vocab, enc = tiny_model("input", 1, 6)
        cfg = TrainConfig(model=params.config)
        path = str(tmp_path / "m.ckpt")
        save_checkpoint(params, cfg, vocab, path)
        loaded, _, _ = load_checkpoint(path)
        with pytest.raises(ValidationError):
            predict(enc[0], loaded, store=None)
