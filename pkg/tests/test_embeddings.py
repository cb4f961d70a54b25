import numpy as np
import pytest

from gedkit import corpus, embeddings
from gedkit.corpus import PAD
from gedkit.embeddings import (
    ContextualVectorStore,
    LayerMixParams,
    build_pseudo_store,
    get_context_vector,
    load_static_vectors,
    mix_layers,
    pseudo_context,
    pseudo_vector,
    read_store,
    write_store,
)
from gedkit.errors import ParseError, StoreLookupError, ValidationError


def small_vocab():
    ann = corpus.make_annotated("v", ["the", "cat", "sat"], [])
    return corpus.build_vocab([ann.sentence])


class TestStaticVectors:
    def test_direct_read(self, tmp_path):
        vocab = small_vocab()
        path = tmp_path / "vec.txt"
        path.write_text("the 0.1 0.2\n")
        table = load_static_vectors(str(path), vocab, 2)
        assert np.allclose(table.matrix[vocab.word_to_id["the"]], [0.1, 0.2])

    def test_fallback_is_seeded_uniform(self, tmp_path):
        vocab = small_vocab()
        path = tmp_path / "vec.txt"
        path.write_text("the 0.1 0.2\n")
        t1 = load_static_vectors(str(path), vocab, 2, seed=9)
        t2 = load_static_vectors(str(path), vocab, 2, seed=9)
        cat = vocab.word_to_id["cat"]
        assert np.array_equal(t1.matrix[cat], t2.matrix[cat])
        assert np.all(np.abs(t1.matrix[cat]) <= 0.1)

    def test_wrong_width_is_format_error(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("a 0.1\n")
        with pytest.raises(ParseError) as exc:
            load_static_vectors(str(path), small_vocab(), 2)
        assert exc.value.line == 1

    def test_header_accepted(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("2 2\nthe 1.0 2.0\ncat 3.0 4.0\n")
        vocab = small_vocab()
        table = load_static_vectors(str(path), vocab, 2)
        assert np.allclose(table.matrix[vocab.word_to_id["cat"]], [3.0, 4.0])

    def test_pad_row_zero(self, tmp_path):
        path = tmp_path / "vec.txt"
        path.write_text("the 1.0 1.0\n")
        table = load_static_vectors(str(path), small_vocab(), 2)
        assert np.all(table.matrix[PAD] == 0.0)


class TestMixLayers:
    def test_uniform_average(self):
        mix = LayerMixParams(np.zeros(3), np.ones(1))
        layers = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        assert np.allclose(mix_layers(layers, mix), [2.0, 2.0])

    def test_linear_in_scale(self):
        mix = LayerMixParams(np.zeros(3), np.array([2.0]))
        layers = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        assert np.allclose(mix_layers(layers, mix), [4.0, 4.0])

    def test_peaked_softmax_value(self):
        # softmax(10, 0, 0) ~ (0.999909, 4.54e-5, 4.54e-5)
        mix = LayerMixParams(np.array([10.0, 0.0, 0.0]), np.ones(1))
        layers = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        got = mix_layers(layers, mix)
        w = np.exp(np.array([10.0, 0.0, 0.0]) - 10.0)
        w /= w.sum()
        expected = (w[:, None] * layers).sum(axis=0)
        assert np.allclose(got, expected, atol=1e-12)
        assert got[0] == pytest.approx(1.00014, abs=1e-4)

    def test_weights_sum_to_one_and_shift_invariance(self, rng):
        for _ in range(50):
            s = rng.normal(size=4)
            layers = rng.normal(size=(4, 7))
            mix_a = LayerMixParams(s, np.array([1.3]))
            mix_b = LayerMixParams(s + 17.5, np.array([1.3]))
            assert embeddings.softmax_weights(s).sum() == pytest.approx(1.0, abs=1e-9)
            assert np.allclose(mix_layers(layers, mix_a), mix_layers(layers, mix_b), atol=1e-9)

    def test_linear_in_each_layer(self, rng):
        s = rng.normal(size=3)
        layers = rng.normal(size=(3, 5))
        bump = np.zeros((3, 5))
        bump[1] = rng.normal(size=5)
        mix = LayerMixParams(s, np.ones(1))
        lhs = mix_layers(layers + bump, mix)
        rhs = mix_layers(layers, mix) + mix_layers(bump, mix)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_layer_count_mismatch(self):
        mix = LayerMixParams(np.zeros(2), np.ones(1))
        with pytest.raises(ValidationError):
            mix_layers(np.zeros((3, 4)), mix)


class TestStore:
    def entries(self, L=2, d=3, n=4):
        rng = np.random.default_rng(0)
        return [(f"s{i:03d}", j, rng.normal(size=(L, d)).astype(np.float32))
                for i in range(n) for j in range(2)]

    def test_roundtrip_exact(self, tmp_path):
        path = str(tmp_path / "x.ctx")
        entries = self.entries()
        write_store(path, "Pseudo", 2, 3, entries)
        store = read_store(path)
        assert store.provider_kind == "Pseudo"
        assert (store.layer_count, store.dim) == (2, 3)
        assert len(store) == len(entries)
        for sid, idx, arr in entries:
            assert np.array_equal(store.get(sid, idx), arr)

    def test_missing_key_names_sid_and_index(self, tmp_path):
        path = str(tmp_path / "x.ctx")
        write_store(path, "Pseudo", 1, 2, [("a", 0, np.zeros((1, 2), np.float32))])
        store = read_store(path)
        with pytest.raises(StoreLookupError) as exc:
            store.get("b", 7)
        assert "b" in str(exc.value) and "7" in str(exc.value)

    def test_checksum_detects_corruption(self, tmp_path):
        path = str(tmp_path / "x.ctx")
        write_store(path, "Pseudo", 1, 2, [("a", 0, np.zeros((1, 2), np.float32))])
        blob = bytearray(open(path, "rb").read())
        blob[len(blob) // 2] ^= 0xFF
        open(path, "wb").write(bytes(blob))
        with pytest.raises(ParseError):
            read_store(path)

    def test_truncation_detected(self, tmp_path):
        path = str(tmp_path / "x.ctx")
        write_store(path, "Pseudo", 1, 2, self.entries(1, 2))
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[: len(blob) - 5])
        with pytest.raises(ParseError):
            read_store(path)

    def test_store_immutable(self, tmp_path):
        path = str(tmp_path / "x.ctx")
        write_store(path, "Pseudo", 1, 2, [("a", 0, np.ones((1, 2), np.float32))])
        store = read_store(path)
        arr = store.get("a", 0)
        with pytest.raises(ValueError):
            arr[0, 0] = 5.0
        assert np.array_equal(store.get("a", 0), np.ones((1, 2), np.float32))

    def test_wrong_shape_entry_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            write_store(str(tmp_path / "x.ctx"), "Pseudo", 2, 3,
                        [("a", 0, np.zeros((1, 3), np.float32))])


class TestGetContextVector:
    def test_single_layer_passthrough(self):
        v = np.arange(4, dtype=np.float32).reshape(1, 4)
        store = ContextualVectorStore("Pseudo", 1, 4, {("s", 0): v})
        out = get_context_vector(store, None, "s", 0)
        assert np.allclose(out, v[0])

    def test_multi_layer_uniform_mix(self):
        stack = np.stack([np.full(4, 1.0), np.full(4, 3.0)]).astype(np.float32)
        store = ContextualVectorStore("Pseudo", 2, 4, {("s", 0): stack})
        out = get_context_vector(store, LayerMixParams(np.zeros(2), np.ones(1)), "s", 0)
        assert np.allclose(out, 2.0)

    def test_absent_key_raises(self):
        store = ContextualVectorStore("Pseudo", 1, 4, {})
        with pytest.raises(StoreLookupError):
            get_context_vector(store, None, "s", 0)


class TestPseudo:
    def test_deterministic(self):
        a = pseudo_vector("word", 3, 1, 16, seed=5)
        b = pseudo_vector("word", 3, 1, 16, seed=5)
        assert np.array_equal(a, b)
        assert np.all(np.abs(a) <= 1.0)

    def test_position_dependence(self):
        a = pseudo_vector("word", 0, 0, 16, seed=5)
        b = pseudo_vector("word", 1, 0, 16, seed=5)
        assert not np.array_equal(a, b)

    def test_seed_separation_exhaustive(self):
        # 64 tokens, two seeds: no vector collides across or within seeds.
        surfaces = [f"tok{i}" for i in range(64)]
        vecs = {}
        for seed in (1, 2):
            for i, surf in enumerate(surfaces):
                (_, stack), = pseudo_context([surf], 1, 8, seed)[0:1]
                vecs[(seed, i)] = stack[0]
        keys = list(vecs)
        for i, k1 in enumerate(keys):
            for k2 in keys[i + 1 :]:
                assert not np.array_equal(vecs[k1], vecs[k2]), (k1, k2)

    def test_build_store_covers_corpus(self):
        anns = [corpus.make_annotated(f"s{i}", ["a", "b", "c"], []) for i in range(2)]
        store = build_pseudo_store([a.sentence for a in anns], 3, 8, seed=0)
        assert len(store) == 6
        assert store.missing_for([a.sentence for a in anns]) == []
        assert store.get("s0", 2).shape == (3, 8)
