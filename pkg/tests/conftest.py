import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gedkit import corpus, edits, model
from gedkit.embeddings import build_pseudo_store


def tiny_annotated(n=3):
    texts = [
        ["the", "cat", "sits"],
        ["a", "dog", "runs", "fast"],
        ["birds", "fly"],
        ["we", "saw", "a", "red", "mat"],
        ["it", "is", "big"],
    ][:n]
    out = []
    for i, t in enumerate(texts):
        eds = [edits.Edit(0, 1, ("x",), "R:DET")] if i % 2 == 0 else []
        out.append(corpus.make_annotated(f"s{i}", t, eds))
    return out


def tiny_model(integration="none", context_layers=1, context_dim=0, n_sents=3, seed=1):
    """A small encoded batch plus freshly initialized parameters (and store)."""
    anns = tiny_annotated(n_sents)
    vocab = corpus.build_vocab([a.sentence for a in anns])
    enc = [corpus.encode(a.sentence, vocab) for a in anns]
    cfg = model.ModelConfig(
        word_dim=8,
        char_dim=4,
        word_hidden=8,
        char_hidden=4,
        proj_dim=4,
        integration=integration,
        context_dim=context_dim,
        context_layers=context_layers,
    )
    params = model.init_params(cfg, vocab, seed=seed)
    batch = model.batch_sentences(enc)
    store = None
    if integration != "none":
        store = build_pseudo_store(enc, context_layers, context_dim, seed=3)
    return params, batch, store, vocab, enc


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# Synthetic overfit corpus: rule-injected article swaps, verb-form swaps and
# token deletions over a small template grammar.
SUBJECTS = ["cat", "dog", "man", "girl", "bird"]
VERBS = {"sits": "sit", "runs": "run", "walks": "walk", "jumps": "jump"}
PLACES = ["mat", "rug", "road", "park"]


def synthetic_corpus(n=50, seed=11):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        subj = SUBJECTS[rng.integers(len(SUBJECTS))]
        verb = list(VERBS)[rng.integers(len(VERBS))]
        place = PLACES[rng.integers(len(PLACES))]
        toks = ["the", subj, verb, "on", "the", place]
        eds = []
        kind = i % 4
        if kind == 1:  # article swap
            toks[0] = "a"
            eds.append(edits.Edit(0, 1, ("the",), "R:DET"))
        elif kind == 2:  # verb-form swap
            toks[2] = VERBS[verb]
            eds.append(edits.Edit(2, 3, (verb,), "R:VERB"))
        elif kind == 3:  # token deletion (missing word)
            del toks[3]
            eds.append(edits.Edit(3, 3, ("on",), "M:PREP"))
        out.append(corpus.make_annotated(f"syn{i:03d}", toks, eds))
    return out
