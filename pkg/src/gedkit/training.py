"""Optimization loop: AdaDelta, batching, early stopping and checkpoints."""

from __future__ import annotations

import json
import os
import struct
import time
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gedkit import evaluation
from gedkit.corpus import Label, Sentence, Vocab
from gedkit.embeddings import ContextualVectorStore, EmbeddingTable, LayerMixParams
from gedkit.errors import CheckpointError, NumericError, ValidationError
from gedkit.model import (
    Batch,
    LSTMParams,
    ModelConfig,
    ModelParams,
    backward,
    batch_sentences,
    compute_loss,
    forward,
    predict_batch,
)


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    gamma: float = 0.1
    batch_size: int = 32
    learning_rate: float = 1.0
    patience: int = 7
    rho: float = 0.95
    epsilon: float = 1e-6
    max_epochs: int = 200
    seed: int = 0
    annotator: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.patience < 0:
            raise ValidationError("patience must be >= 0")
        if not (0.0 < self.rho < 1.0):
            raise ValidationError("rho must be in (0, 1)")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "gamma", "batch_size", "learning_rate", "patience", "rho",
            "epsilon", "max_epochs", "seed", "annotator")}
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig(**d.pop("model"))
        return cls(model=model, **d)


# ---------------------------------------------------------------------------
# AdaDelta
# ---------------------------------------------------------------------------

@dataclass
class AdaDeltaState:
    """Per-array running averages E[g^2] and E[dx^2], shapes mirroring the params."""

    sq_grad: dict[str, np.ndarray]
    sq_delta: dict[str, np.ndarray]

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdaDeltaState":
        arrays = params.arrays()
        return cls(
            {k: np.zeros_like(v) for k, v in arrays.items()},
            {k: np.zeros_like(v) for k, v in arrays.items()},
        )


def adadelta_step(
    state: AdaDeltaState,
    grads: dict[str, np.ndarray],
    params: ModelParams,
    lr: float = 1.0,
    rho: float = 0.95,
    epsilon: float = 1e-6,
):
    """One in-place AdaDelta update.

    Per element: Eg <- rho*Eg + (1-rho)*g^2; dx = -sqrt(Ed+eps)/sqrt(Eg+eps)*g;
    Ed <- rho*Ed + (1-rho)*dx^2; x <- x + lr*dx. Zero gradient leaves the
    element untouched, which keeps PAD rows exactly zero.
    """
    arrays = params.arrays()
    for name, x in arrays.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        eg = state.sq_grad[name]
        ed = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        dx = -np.sqrt(ed + epsilon) / np.sqrt(eg + epsilon) * g
        ed *= rho
        ed += (1.0 - rho) * dx * dx
        x += lr * dx


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def make_batches(corpus: Sequence[Sentence], batch_size: int, seed: int) -> list[Batch]:
    """Shuffle with the given seed, group into fixed-size padded batches."""
    if not corpus:
        raise ValidationError("cannot batch an empty corpus")
    order = np.random.default_rng(seed).permutation(len(corpus))
    shuffled = [corpus[i] for i in order]
    return [
        batch_sentences(shuffled[i : i + batch_size])
        for i in range(0, len(shuffled), batch_size)
    ]


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_p: float
    dev_r: float
    dev_f05: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 before any epoch completes

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tdev_P\tdev_R\tdev_F05\tseconds"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch}\t{e.train_loss:.6f}\t{100 * e.dev_p:.2f}\t{100 * e.dev_r:.2f}"
                f"\t{100 * e.dev_f05:.2f}\t{e.seconds:.3f}"
            )
        return "\n".join(lines) + "\n"


def evaluate_corpus(
    sentences: Sequence[Sentence],
    params: ModelParams,
    store: ContextualVectorStore | None = None,
    batch_size: int = 64,
) -> evaluation.EvalCounts:
    """Token-level confusion counts for a whole corpus (inference mode)."""
    counts = evaluation.EvalCounts()
    for i in range(0, len(sentences), batch_size):
        chunk = sentences[i : i + batch_size]
        batch = batch_sentences(chunk)
        preds = predict_batch(batch, params, store)
        for sent, pred in zip(chunk, preds):
            evaluation.accumulate(sent.gold_labels, pred, counts=counts)
    return counts


def _check_coverage(sentences: Sequence[Sentence], store: ContextualVectorStore, what: str):
    gaps = store.missing_for(sentences)
    if gaps:
        sid, idx = gaps[0]
        raise ValidationError(
            f"contextual store does not cover the {what} corpus: {len(gaps)} tokens missing "
            f"(first gap: sentence {sid!r} token {idx})"
        )


def train(
    corpus_train: Sequence[Sentence],
    corpus_dev: Sequence[Sentence],
    config: TrainConfig,
    store: ContextualVectorStore | None = None,
    initial: ModelParams | None = None,
    vocab: Vocab | None = None,
    word_table: EmbeddingTable | None = None,
    log=None,
) -> tuple[ModelParams, TrainHistory]:
    """Train with per-epoch validation F0.5 early stopping.

    Stops once validation F0.5 has failed to exceed the best seen value for
    `patience` consecutive epochs (at least one), or at max_epochs. Returns
    the parameters from the best epoch, never the last.
    """
    from gedkit.model import init_params

    if initial is not None:
        params = initial
    else:
        if vocab is None:
            raise ValidationError("train() needs either initial params or a vocab")
        params = init_params(config.model, vocab, seed=config.seed, word_table=word_table)
    if config.model.integration != "none":
        if store is None:
            raise ValidationError("integration is enabled but no contextual store was supplied")
        _check_coverage(corpus_train, store, "training")
        _check_coverage(corpus_dev, store, "dev")
    eff_store = store if config.model.integration != "none" else None

    state = AdaDeltaState.fresh(params)
    history = TrainHistory()
    best_f = -1.0
    best_params = params.copy()
    stale = 0
    patience = max(config.patience, 1)

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        batches = make_batches(corpus_train, config.batch_size, config.seed + epoch)
        total_loss = 0.0
        total_tokens = 0
        for k, batch in enumerate(batches):
            step_seed = (config.seed * 1_000_003 + epoch * 1_009 + k) % (2**63)
            acts = forward(batch, params, store=eff_store, training=True, seed=step_seed)
            loss = compute_loss(acts, batch.gold, batch.word_ids, config.gamma)
            grads = backward(acts, batch.gold, batch.word_ids, config.gamma, params)
            adadelta_step(state, grads, params, config.learning_rate, config.rho, config.epsilon)
            total_loss += loss * batch.n_tokens
            total_tokens += batch.n_tokens
        train_loss = total_loss / total_tokens

        counts = evaluate_corpus(corpus_dev, params, eff_store)
        p, r, f05 = evaluation.f_beta(counts, beta=0.5)
        history.epochs.append(
            EpochStats(epoch, train_loss, p, r, f05, time.perf_counter() - t0)
        )
        if log:
            log(f"epoch {epoch}: loss {train_loss:.4f} dev F0.5 {100 * f05:.2f}")

        if f05 > best_f:
            best_f = f05
            best_params = params.copy()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break

    return best_params, history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"GEDCKPT1\n"


def save_checkpoint(params: ModelParams, config: TrainConfig, vocab: Vocab, path: str):
    """Self-describing binary container; save -> load -> save is byte-identical.

    Layout: magic, 8-byte LE header length, JSON header (config, vocab, array
    manifest), then each array as little-endian float64, then a CRC-32 of the
    array section.
    """
    arrays = params.arrays()
    header = {
        "config": config.to_dict(),
        "vocab": json.loads(vocab.to_json()),
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    header_b = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(header_b)))
        fh.write(header_b)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[ModelParams, TrainConfig, Vocab]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not blob.startswith(_CKPT_MAGIC):
        raise CheckpointError(f"{path} is not a gedkit checkpoint")
    off = len(_CKPT_MAGIC)
    if len(blob) < off + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<Q", blob, off)
    off += 8
    if len(blob) < off + hlen + 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    try:
        header = json.loads(blob[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from exc
    off += hlen

    payload, trailer = blob[off:-4], blob[-4:]
    (checksum,) = struct.unpack("<I", trailer)
    if zlib.crc32(payload) & 0xFFFFFFFF != checksum:
        raise CheckpointError(f"{path}: checksum mismatch (file corrupt or truncated)")

    config = TrainConfig.from_dict(header["config"])
    vocab = Vocab(dict(header["vocab"]["words"]), dict(header["vocab"]["chars"]))

    arrays: dict[str, np.ndarray] = {}
    pos = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n
        if pos + nbytes > len(payload):
            raise CheckpointError(f"{path}: array data truncated at {spec['name']}")
        arrays[spec["name"]] = (
            np.frombuffer(payload, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
        )
        pos += nbytes
    if pos != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - pos} trailing bytes after arrays")

    params = _params_from_arrays(config.model, vocab, arrays, path)
    return params, config, vocab


def _params_from_arrays(
    mcfg: ModelConfig, vocab: Vocab, arrays: dict[str, np.ndarray], path: str
) -> ModelParams:
    def take(name: str) -> np.ndarray:
        if name not in arrays:
            raise CheckpointError(f"{path}: missing array {name!r}")
        return arrays[name]

    def lstm(prefix: str) -> LSTMParams:
        return LSTMParams(take(f"{prefix}.wx"), take(f"{prefix}.u"), take(f"{prefix}.b"))

    mix = None
    if "mix.scalars" in arrays:
        mix = LayerMixParams(take("mix.scalars"), take("mix.scale"))
    params = ModelParams(
        config=mcfg,
        n_words=vocab.n_words,
        n_chars=vocab.n_chars,
        word_table=EmbeddingTable(take("word_table")),
        char_table=EmbeddingTable(take("char_table")),
        char_fwd=lstm("char_fwd"),
        char_bwd=lstm("char_bwd"),
        word_fwd=lstm("word_fwd"),
        word_bwd=lstm("word_bwd"),
        hidden_w=take("hidden.w"),
        hidden_b=take("hidden.b"),
        detect_w=take("detect.w"),
        detect_b=take("detect.b"),
        lm_fwd_proj_w=take("lm_fwd_proj.w"),
        lm_fwd_proj_b=take("lm_fwd_proj.b"),
        lm_fwd_head_w=take("lm_fwd_head.w"),
        lm_fwd_head_b=take("lm_fwd_head.b"),
        lm_bwd_proj_w=take("lm_bwd_proj.w"),
        lm_bwd_proj_b=take("lm_bwd_proj.b"),
        lm_bwd_head_w=take("lm_bwd_head.w"),
        lm_bwd_head_b=take("lm_bwd_head.b"),
        mix=mix,
    )
    expect = (vocab.n_words, mcfg.word_dim)
    if params.word_table.matrix.shape != expect:
        raise CheckpointError(
            f"{path}: word table shape {params.word_table.matrix.shape} != vocab/config {expect}"
        )
    return params
