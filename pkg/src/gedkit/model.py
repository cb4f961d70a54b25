"""The neural sequence labeler.

Character bi-LSTM feeding a word bi-LSTM, a tanh hidden layer and binary
detection softmax, plus forward/backward language-model heads as auxiliary
objectives. Contextual vectors can be concatenated at the input or at the
bi-LSTM output. Forward and backward passes are implemented by hand on
numpy arrays; the sequential LSTM recurrences run in the kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gedkit import _kernels as kernels
from gedkit.corpus import BOS, EOS, PAD, Label, Sentence, Vocab
from gedkit.embeddings import (
    ContextualVectorStore,
    EmbeddingTable,
    LayerMixParams,
    init_table,
    softmax_weights,
)
from gedkit.errors import NumericError, ValidationError

INTEGRATIONS = ("none", "input", "output")
KEEP_PROB = 0.5  # dropout keep probability on word-LSTM inputs and outputs


@dataclass
class ModelConfig:
    word_dim: int = 300
    char_dim: int = 100
    word_hidden: int = 300
    char_hidden: int = 100
    proj_dim: int = 50
    integration: str = "none"
    context_dim: int = 0
    context_layers: int = 1
    char_dropout: bool = False  # also drop char-LSTM inputs/outputs (off by default)

    def __post_init__(self):
        if self.integration not in INTEGRATIONS:
            raise ValidationError(f"integration must be one of {INTEGRATIONS}")
        if self.integration != "none" and self.context_dim < 1:
            raise ValidationError("context integration requires context_dim >= 1")

    @property
    def input_dim(self) -> int:
        base = self.word_dim + 2 * self.char_hidden
        return base + (self.context_dim if self.integration == "input" else 0)

    @property
    def output_dim(self) -> int:
        base = 2 * self.word_hidden
        return base + (self.context_dim if self.integration == "output" else 0)

    def to_dict(self) -> dict:
        return {
            "word_dim": self.word_dim,
            "char_dim": self.char_dim,
            "word_hidden": self.word_hidden,
            "char_hidden": self.char_hidden,
            "proj_dim": self.proj_dim,
            "integration": self.integration,
            "context_dim": self.context_dim,
            "context_layers": self.context_layers,
            "char_dropout": self.char_dropout,
        }


@dataclass
class LSTMParams:
    """One direction's cell parameters, stored gate-stacked in order (i, f, o, g)."""

    wx: np.ndarray  # (input_dim, 4H)
    u: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def input_dim(self) -> int:
        return self.wx.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.u.shape[0]

    def _gate(self, m: np.ndarray, g: int) -> np.ndarray:
        H = self.hidden_dim
        return m[..., g * H : (g + 1) * H]

    # Per-gate views, (in, H) / (H, H) / (H,):
    @property
    def w_i(self):
        return self._gate(self.wx, 0)

    @property
    def w_f(self):
        return self._gate(self.wx, 1)

    @property
    def w_o(self):
        return self._gate(self.wx, 2)

    @property
    def w_g(self):
        return self._gate(self.wx, 3)

    @property
    def u_i(self):
        return self._gate(self.u, 0)

    @property
    def u_f(self):
        return self._gate(self.u, 1)

    @property
    def u_o(self):
        return self._gate(self.u, 2)

    @property
    def u_g(self):
        return self._gate(self.u, 3)

    @property
    def b_i(self):
        return self._gate(self.b, 0)

    @property
    def b_f(self):
        return self._gate(self.b, 1)

    @property
    def b_o(self):
        return self._gate(self.b, 2)

    @property
    def b_g(self):
        return self._gate(self.b, 3)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_forward(
    p: LSTMParams, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One standard LSTM cell step.

    i = sig(W_i x + U_i h + b_i), f/o likewise, g = tanh(W_g x + U_g h + b_g),
    c = f*c_prev + i*g, h = o*tanh(c).
    """
    for name, a in (("x_t", x_t), ("h_prev", h_prev), ("c_prev", c_prev)):
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")
    z = x_t @ p.wx + h_prev @ p.u + p.b
    H = p.hidden_dim
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H : 2 * H])
    o = _sigmoid(z[..., 2 * H : 3 * H])
    g = np.tanh(z[..., 3 * H :])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def _init_lstm(in_dim: int, hidden: int, rng: np.random.Generator) -> LSTMParams:
    lim_x = np.sqrt(6.0 / (in_dim + hidden))
    lim_u = np.sqrt(6.0 / (hidden + hidden))
    return LSTMParams(
        wx=rng.uniform(-lim_x, lim_x, size=(in_dim, 4 * hidden)),
        u=rng.uniform(-lim_u, lim_u, size=(hidden, 4 * hidden)),
        b=np.zeros(4 * hidden),
    )


def _init_affine(in_dim: int, out_dim: int, rng: np.random.Generator):
    lim = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-lim, lim, size=(in_dim, out_dim)), np.zeros(out_dim)


@dataclass
class ModelParams:
    config: ModelConfig
    n_words: int
    n_chars: int
    word_table: EmbeddingTable
    char_table: EmbeddingTable
    char_fwd: LSTMParams
    char_bwd: LSTMParams
    word_fwd: LSTMParams
    word_bwd: LSTMParams
    hidden_w: np.ndarray
    hidden_b: np.ndarray
    detect_w: np.ndarray
    detect_b: np.ndarray
    lm_fwd_proj_w: np.ndarray
    lm_fwd_proj_b: np.ndarray
    lm_fwd_head_w: np.ndarray
    lm_fwd_head_b: np.ndarray
    lm_bwd_proj_w: np.ndarray
    lm_bwd_proj_b: np.ndarray
    lm_bwd_head_w: np.ndarray
    lm_bwd_head_b: np.ndarray
    mix: LayerMixParams | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        """Every trainable array, each registered exactly once, in a fixed order."""
        out = {
            "word_table": self.word_table.matrix,
            "char_table": self.char_table.matrix,
        }
        for name, p in (
            ("char_fwd", self.char_fwd),
            ("char_bwd", self.char_bwd),
            ("word_fwd", self.word_fwd),
            ("word_bwd", self.word_bwd),
        ):
            out[f"{name}.wx"] = p.wx
            out[f"{name}.u"] = p.u
            out[f"{name}.b"] = p.b
        out["hidden.w"] = self.hidden_w
        out["hidden.b"] = self.hidden_b
        out["detect.w"] = self.detect_w
        out["detect.b"] = self.detect_b
        out["lm_fwd_proj.w"] = self.lm_fwd_proj_w
        out["lm_fwd_proj.b"] = self.lm_fwd_proj_b
        out["lm_fwd_head.w"] = self.lm_fwd_head_w
        out["lm_fwd_head.b"] = self.lm_fwd_head_b
        out["lm_bwd_proj.w"] = self.lm_bwd_proj_w
        out["lm_bwd_proj.b"] = self.lm_bwd_proj_b
        out["lm_bwd_head.w"] = self.lm_bwd_head_w
        out["lm_bwd_head.b"] = self.lm_bwd_head_b
        if self.mix is not None:
            out["mix.scalars"] = self.mix.scalars
            out["mix.scale"] = self.mix.scale
        return out

    def copy(self) -> "ModelParams":
        import copy as _copy

        return _copy.deepcopy(self)


def init_params(
    config: ModelConfig,
    vocab: Vocab,
    seed: int = 0,
    word_table: EmbeddingTable | None = None,
) -> ModelParams:
    """Fresh parameters; all randomness flows from the seed."""
    rng = np.random.default_rng(seed)
    V, Vc = vocab.n_words, vocab.n_chars
    wt = word_table if word_table is not None else init_table(V, config.word_dim, rng)
    if wt.matrix.shape != (V, config.word_dim):
        raise ValidationError(
            f"word table shape {wt.matrix.shape} does not match vocab/config "
            f"({V}, {config.word_dim})"
        )
    ct = init_table(Vc, config.char_dim, rng)
    mix = None
    if config.integration != "none" and config.context_layers > 1:
        mix = LayerMixParams.fresh(config.context_layers)
    hw, hb = _init_affine(config.output_dim, config.proj_dim, rng)
    dw, db = _init_affine(config.proj_dim, 2, rng)
    fpw, fpb = _init_affine(config.word_hidden, config.proj_dim, rng)
    fhw, fhb = _init_affine(config.proj_dim, V, rng)
    bpw, bpb = _init_affine(config.word_hidden, config.proj_dim, rng)
    bhw, bhb = _init_affine(config.proj_dim, V, rng)
    return ModelParams(
        config=config,
        n_words=V,
        n_chars=Vc,
        word_table=wt,
        char_table=ct,
        char_fwd=_init_lstm(config.char_dim, config.char_hidden, rng),
        char_bwd=_init_lstm(config.char_dim, config.char_hidden, rng),
        word_fwd=_init_lstm(config.input_dim, config.word_hidden, rng),
        word_bwd=_init_lstm(config.input_dim, config.word_hidden, rng),
        hidden_w=hw,
        hidden_b=hb,
        detect_w=dw,
        detect_b=db,
        lm_fwd_proj_w=fpw,
        lm_fwd_proj_b=fpb,
        lm_fwd_head_w=fhw,
        lm_fwd_head_b=fhb,
        lm_bwd_proj_w=bpw,
        lm_bwd_proj_b=bpb,
        lm_bwd_head_w=bhw,
        lm_bwd_head_b=bhb,
        mix=mix,
    )


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    sids: list[str]
    word_ids: np.ndarray  # (B, T) int64, PAD-filled
    char_ids: np.ndarray  # (B, T, C) int64, PAD-filled; pad slots hold one PAD char
    char_lens: np.ndarray  # (B, T) int64, >= 1
    lens: np.ndarray  # (B,) int64
    mask: np.ndarray  # (B, T) float64
    gold: np.ndarray  # (B, T) int64

    @property
    def size(self) -> int:
        return self.word_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.word_ids.shape[1]

    @property
    def n_tokens(self) -> int:
        return int(self.lens.sum())


def batch_sentences(sentences: Sequence[Sentence]) -> Batch:
    """Pad encoded sentences into one batch; loss masks mark real tokens."""
    if not sentences:
        raise ValidationError("cannot batch zero sentences")
    for s in sentences:
        if any(t.word_id is None or t.char_ids is None for t in s.tokens):
            raise ValidationError(f"sentence {s.sid!r} is not encoded; call corpus.encode first")
    B = len(sentences)
    lens = np.array([len(s) for s in sentences], dtype=np.int64)
    T = int(lens.max())
    C = max(max(len(t.char_ids) for t in s.tokens) for s in sentences)
    word_ids = np.full((B, T), PAD, dtype=np.int64)
    char_ids = np.full((B, T, C), PAD, dtype=np.int64)
    char_lens = np.ones((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    gold = np.zeros((B, T), dtype=np.int64)
    for b, s in enumerate(sentences):
        for t, tok in enumerate(s.tokens):
            word_ids[b, t] = tok.word_id
            n = len(tok.char_ids)
            char_ids[b, t, :n] = tok.char_ids
            char_lens[b, t] = n
        mask[b, : lens[b]] = 1.0
        gold[b, : lens[b]] = [int(l) for l in s.gold_labels]
    return Batch([s.sid for s in sentences], word_ids, char_ids, char_lens, lens, mask, gold)


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

@dataclass
class LSTMTrace:
    h: np.ndarray
    c: np.ndarray
    tc: np.ndarray
    gi: np.ndarray
    gf: np.ndarray
    go: np.ndarray
    gg: np.ndarray


def _run_lstm(pre: np.ndarray, p: LSTMParams) -> LSTMTrace:
    B = pre.shape[1]
    H = p.hidden_dim
    zeros = np.zeros((B, H))
    return LSTMTrace(*kernels.lstm_forward(pre, p.u, zeros, zeros))


@dataclass
class ForwardActivations:
    """Everything the loss and the backward pass need, batched time-major."""

    batch: Batch
    training: bool
    seed: int
    # Interface-level views:
    input_embed: np.ndarray  # (T, B, Din), pre-dropout
    context_vec: np.ndarray | None  # (T, B, d) mixed context, or None
    word_hidden: np.ndarray  # (T, B, 2Hw) fwd++bwd states, pre-dropout
    lstm_output: np.ndarray  # (T, B, Dout) post-dropout, plus context in output mode
    label_distribution: np.ndarray  # (T, B, 2) softmax over {Correct, Incorrect}
    lm_fwd_logits: np.ndarray  # (T, B, V)
    lm_bwd_logits: np.ndarray  # (T, B, V)
    dropout_in: np.ndarray | None
    dropout_out: np.ndarray | None
    # Internal caches for backward:
    _ctx_layers: np.ndarray | None = None  # (L, T, B, d) raw layers when L > 1
    _char_trace_f: LSTMTrace | None = None
    _char_trace_b: LSTMTrace | None = None
    _char_rev: np.ndarray | None = None  # (N, C) per-word reversal index
    _char_last: np.ndarray | None = None  # (N,) final-step index per word
    _word_trace_f: LSTMTrace | None = None
    _word_trace_b: LSTMTrace | None = None
    _rev_t: np.ndarray | None = None  # (T, B) per-sentence reversal index
    _z1: np.ndarray | None = None
    _zf: np.ndarray | None = None
    _zb: np.ndarray | None = None
    _logits_det: np.ndarray | None = None
    _dropout_char_in: np.ndarray | None = None
    _dropout_char_out: np.ndarray | None = None


def _gather_context(
    batch: Batch, params: ModelParams, store: ContextualVectorStore
) -> tuple[np.ndarray | None, np.ndarray]:
    """Raw layer stacks (L, T, B, d) and the mixed/selected context (T, B, d)."""
    cfg = params.config
    L, d = store.layer_count, store.dim
    if (L, d) != (cfg.context_layers, cfg.context_dim):
        raise ValidationError(
            f"store provides {L} layers of dim {d}; model expects "
            f"{cfg.context_layers} layers of dim {cfg.context_dim}"
        )
    B, T = batch.word_ids.shape
    layers = np.zeros((L, T, B, d))
    for b in range(B):
        sid = batch.sids[b]
        for t in range(int(batch.lens[b])):
            layers[:, t, b, :] = store.get(sid, t).astype(np.float64)
    if L == 1:
        return None, layers[0]
    if params.mix is None:
        raise ValidationError("multi-layer store supplied but the model has no mix parameters")
    w = softmax_weights(params.mix.scalars)
    mixed = params.mix.scale[0] * np.tensordot(w, layers, axes=(0, 0))
    return layers, mixed


def forward(
    batch: Batch,
    params: ModelParams,
    store: ContextualVectorStore | None = None,
    training: bool = False,
    seed: int = 0,
) -> ForwardActivations:
    """Run the labeler over one padded batch.

    With training=True, inverted dropout is applied to the word-LSTM inputs
    and outputs using masks drawn deterministically from the seed; with
    training=False the pass is a pure function of (params, batch, store).
    """
    cfg = params.config
    B, T = batch.word_ids.shape
    if T == 0:
        raise ValidationError("empty batch")
    wid = batch.word_ids.T  # (T, B)
    mask = batch.mask.T  # (T, B)
    Hc, Hw = cfg.char_hidden, cfg.word_hidden
    rng = np.random.default_rng(seed) if training else None

    # Character channel: one "row" per word slot, time axis = characters.
    N = T * B
    chars = batch.char_ids.transpose(1, 0, 2).reshape(N, -1)  # (N, C), n = t*B + b
    clen = batch.char_lens.T.reshape(N)
    C = chars.shape[1]
    ce = params.char_table.matrix[chars]  # (N, C, Dc)
    drop_char_in = None
    if training and cfg.char_dropout:
        drop_char_in = (rng.random(ce.shape) < KEEP_PROB) / KEEP_PROB
        ce = ce * drop_char_in
    pos = np.arange(C)[None, :]
    rev_char = np.where(pos < clen[:, None], clen[:, None] - 1 - pos, pos)  # (N, C)
    ce_f = ce.transpose(1, 0, 2)  # (C, N, Dc)
    ce_b = ce[np.arange(N)[:, None], rev_char].transpose(1, 0, 2)
    trace_cf = _run_lstm(np.ascontiguousarray(ce_f @ params.char_fwd.wx + params.char_fwd.b), params.char_fwd)
    trace_cb = _run_lstm(np.ascontiguousarray(ce_b @ params.char_bwd.wx + params.char_bwd.b), params.char_bwd)
    last = clen - 1
    char_repr = np.concatenate(
        [trace_cf.h[last, np.arange(N)], trace_cb.h[last, np.arange(N)]], axis=1
    )  # (N, 2Hc)
    drop_char_out = None
    if training and cfg.char_dropout:
        drop_char_out = (rng.random(char_repr.shape) < KEEP_PROB) / KEEP_PROB
        char_repr = char_repr * drop_char_out
    char_repr = char_repr.reshape(T, B, 2 * Hc)

    # Context channel.
    ctx_layers, ctx = (None, None)
    if cfg.integration != "none":
        if store is None:
            raise ValidationError("integration is enabled but no contextual store was supplied")
        ctx_layers, ctx = _gather_context(batch, params, store)

    we = params.word_table.matrix[wid]  # (T, B, Dw)
    pieces = [we, char_repr]
    if cfg.integration == "input":
        pieces.append(ctx)
    x = np.concatenate(pieces, axis=2)  # (T, B, Din)

    drop_in = None
    x_d = x
    if training:
        drop_in = (rng.random(x.shape) < KEEP_PROB) / KEEP_PROB
        x_d = x * drop_in

    # Word bi-LSTM; the backward direction runs over per-sentence reversed input.
    t_pos = np.arange(T)[:, None]
    rev_t = np.where(t_pos < batch.lens[None, :], batch.lens[None, :] - 1 - t_pos, t_pos)  # (T, B)
    b_idx = np.arange(B)[None, :]
    x_rev = x_d[rev_t, b_idx]
    trace_wf = _run_lstm(np.ascontiguousarray(x_d @ params.word_fwd.wx + params.word_fwd.b), params.word_fwd)
    trace_wb = _run_lstm(np.ascontiguousarray(x_rev @ params.word_bwd.wx + params.word_bwd.b), params.word_bwd)
    h_bwd = trace_wb.h[rev_t, b_idx]  # back to natural order
    h_cat = np.concatenate([trace_wf.h, h_bwd], axis=2)  # (T, B, 2Hw)

    drop_out = None
    h_drop = h_cat
    if training:
        drop_out = (rng.random(h_cat.shape) < KEEP_PROB) / KEEP_PROB
        h_drop = h_cat * drop_out

    o = np.concatenate([h_drop, ctx], axis=2) if cfg.integration == "output" else h_drop

    z1 = np.tanh(o @ params.hidden_w + params.hidden_b)  # (T, B, P)
    logits_det = z1 @ params.detect_w + params.detect_b  # (T, B, 2)
    m = logits_det.max(axis=2, keepdims=True)
    p_det = np.exp(logits_det - m)
    p_det /= p_det.sum(axis=2, keepdims=True)

    zf = np.tanh(h_drop[:, :, :Hw] @ params.lm_fwd_proj_w + params.lm_fwd_proj_b)
    logits_f = zf @ params.lm_fwd_head_w + params.lm_fwd_head_b  # (T, B, V)
    zb = np.tanh(h_drop[:, :, Hw:] @ params.lm_bwd_proj_w + params.lm_bwd_proj_b)
    logits_b = zb @ params.lm_bwd_head_w + params.lm_bwd_head_b

    return ForwardActivations(
        batch=batch,
        training=training,
        seed=seed,
        input_embed=x,
        context_vec=ctx,
        word_hidden=h_cat,
        lstm_output=o,
        label_distribution=p_det,
        lm_fwd_logits=logits_f,
        lm_bwd_logits=logits_b,
        dropout_in=drop_in,
        dropout_out=drop_out,
        _ctx_layers=ctx_layers,
        _char_trace_f=trace_cf,
        _char_trace_b=trace_cb,
        _char_rev=rev_char,
        _char_last=last,
        _word_trace_f=trace_wf,
        _word_trace_b=trace_wb,
        _rev_t=rev_t,
        _z1=z1,
        _zf=zf,
        _zb=zb,
        _logits_det=logits_det,
        _dropout_char_in=drop_char_in,
        _dropout_char_out=drop_char_out,
    )


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def _lm_targets(word_ids_tm: np.ndarray, lens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Next-token and previous-token target ids, with EOS/BOS at the edges."""
    T, B = word_ids_tm.shape
    tgt_f = np.full((T, B), EOS, dtype=np.int64)
    if T > 1:
        tgt_f[:-1] = word_ids_tm[1:]
    tgt_f[lens - 1, np.arange(B)] = EOS  # last real token predicts EOS, not PAD
    tgt_b = np.full((T, B), BOS, dtype=np.int64)
    if T > 1:
        tgt_b[1:] = word_ids_tm[:-1]
    return tgt_f, tgt_b


def _mean_nll(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    """Token-mean negative log softmax probability, in log-sum-exp form."""
    m = logits.max(axis=2)
    lse = m + np.log(np.exp(logits - m[:, :, None]).sum(axis=2))
    T, B = targets.shape
    gold_logit = logits[np.arange(T)[:, None], np.arange(B)[None, :], targets]
    nll = (lse - gold_logit) * mask
    return float(nll.sum() / mask.sum())


def compute_loss(
    acts: ForwardActivations,
    gold: np.ndarray,
    token_ids: np.ndarray,
    gamma: float,
) -> float:
    """Detection NLL plus gamma-weighted forward/backward LM NLLs (token means)."""
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    mask = acts.batch.mask.T
    loss = _mean_nll(acts._logits_det, gold.T, mask)
    if gamma > 0:
        tgt_f, tgt_b = _lm_targets(token_ids.T, acts.batch.lens)
        loss += gamma * _mean_nll(acts.lm_fwd_logits, tgt_f, mask)
        loss += gamma * _mean_nll(acts.lm_bwd_logits, tgt_b, mask)
    return float(loss)


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

def _softmax_grad(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray, scale: float) -> np.ndarray:
    """d(mean masked NLL)/d logits = (softmax - onehot) * mask * scale / n_tokens."""
    m = logits.max(axis=2, keepdims=True)
    p = np.exp(logits - m)
    p /= p.sum(axis=2, keepdims=True)
    T, B = targets.shape
    p[np.arange(T)[:, None], np.arange(B)[None, :], targets] -= 1.0
    p *= (mask * (scale / mask.sum()))[:, :, None]
    return p


def backward(
    acts: ForwardActivations,
    gold: np.ndarray,
    token_ids: np.ndarray,
    gamma: float,
    params: ModelParams,
) -> dict[str, np.ndarray]:
    """Exact analytic gradients of compute_loss for every trainable array.

    Contextual vectors are frozen features: gradient reaches the layer-mix
    parameters (when present) but never the stored vectors. PAD embedding
    rows receive exactly zero gradient.
    """
    cfg = params.config
    batch = acts.batch
    B, T = batch.word_ids.shape
    mask = batch.mask.T
    Hc, Hw = cfg.char_hidden, cfg.word_hidden
    Dw = cfg.word_dim
    g: dict[str, np.ndarray] = {}

    # Detection softmax head.
    dlog_det = _softmax_grad(acts._logits_det, gold.T, mask, 1.0)  # (T, B, 2)
    z1 = acts._z1
    g["detect.w"] = np.einsum("tbp,tbk->pk", z1, dlog_det)
    g["detect.b"] = dlog_det.sum(axis=(0, 1))
    da1 = (dlog_det @ params.detect_w.T) * (1.0 - z1 * z1)
    o = acts.lstm_output
    g["hidden.w"] = np.einsum("tbo,tbp->op", o, da1)
    g["hidden.b"] = da1.sum(axis=(0, 1))
    do = da1 @ params.hidden_w.T  # (T, B, Dout)
    dh_drop = np.ascontiguousarray(do[:, :, : 2 * Hw])
    dctx = None
    if cfg.integration == "output":
        dctx = do[:, :, 2 * Hw :].copy()

    # LM heads.
    if gamma > 0:
        tgt_f, tgt_b = _lm_targets(token_ids.T, batch.lens)
        h_drop = acts.word_hidden if acts.dropout_out is None else acts.word_hidden * acts.dropout_out
        hf, hb = h_drop[:, :, :Hw], h_drop[:, :, Hw:]
        dlog_f = _softmax_grad(acts.lm_fwd_logits, tgt_f, mask, gamma)
        zf = acts._zf
        g["lm_fwd_head.w"] = np.einsum("tbp,tbv->pv", zf, dlog_f)
        g["lm_fwd_head.b"] = dlog_f.sum(axis=(0, 1))
        daf = (dlog_f @ params.lm_fwd_head_w.T) * (1.0 - zf * zf)
        g["lm_fwd_proj.w"] = np.einsum("tbh,tbp->hp", hf, daf)
        g["lm_fwd_proj.b"] = daf.sum(axis=(0, 1))
        dh_drop[:, :, :Hw] += daf @ params.lm_fwd_proj_w.T

        dlog_b = _softmax_grad(acts.lm_bwd_logits, tgt_b, mask, gamma)
        zb = acts._zb
        g["lm_bwd_head.w"] = np.einsum("tbp,tbv->pv", zb, dlog_b)
        g["lm_bwd_head.b"] = dlog_b.sum(axis=(0, 1))
        dab = (dlog_b @ params.lm_bwd_head_w.T) * (1.0 - zb * zb)
        g["lm_bwd_proj.w"] = np.einsum("tbh,tbp->hp", hb, dab)
        g["lm_bwd_proj.b"] = dab.sum(axis=(0, 1))
        dh_drop[:, :, Hw:] += dab @ params.lm_bwd_proj_w.T
    else:
        for name in ("lm_fwd_proj", "lm_fwd_head", "lm_bwd_proj", "lm_bwd_head"):
            g[f"{name}.w"] = np.zeros_like(getattr(params, name + "_w"))
            g[f"{name}.b"] = np.zeros_like(getattr(params, name + "_b"))

    dh_cat = dh_drop if acts.dropout_out is None else dh_drop * acts.dropout_out

    # Word bi-LSTM.
    x = acts.input_embed
    x_d = x if acts.dropout_in is None else x * acts.dropout_in
    rev_t = acts._rev_t
    b_idx = np.arange(B)[None, :]
    zeros = np.zeros((B, Hw))
    tf = acts._word_trace_f
    dpre_f, du_f, _, _ = kernels.lstm_backward(
        params.word_fwd.u, tf.h, tf.c, tf.tc, tf.gi, tf.gf, tf.go, tf.gg, zeros, zeros,
        np.ascontiguousarray(dh_cat[:, :, :Hw]),
    )
    g["word_fwd.wx"] = np.einsum("tbi,tbj->ij", x_d, dpre_f)
    g["word_fwd.u"] = du_f
    g["word_fwd.b"] = dpre_f.sum(axis=(0, 1))
    dx_d = dpre_f @ params.word_fwd.wx.T

    tb = acts._word_trace_b
    dh_b_rev = np.ascontiguousarray(dh_cat[:, :, Hw:][rev_t, b_idx])
    dpre_b, du_b, _, _ = kernels.lstm_backward(
        params.word_bwd.u, tb.h, tb.c, tb.tc, tb.gi, tb.gf, tb.go, tb.gg, zeros, zeros, dh_b_rev
    )
    x_rev = x_d[rev_t, b_idx]
    g["word_bwd.wx"] = np.einsum("tbi,tbj->ij", x_rev, dpre_b)
    g["word_bwd.u"] = du_b
    g["word_bwd.b"] = dpre_b.sum(axis=(0, 1))
    dx_d += (dpre_b @ params.word_bwd.wx.T)[rev_t, b_idx]

    dx = dx_d if acts.dropout_in is None else dx_d * acts.dropout_in

    # Split the input gradient back into its channels.
    dwe = dx[:, :, :Dw]
    dchar_repr = dx[:, :, Dw : Dw + 2 * Hc]
    if cfg.integration == "input":
        dctx = dx[:, :, Dw + 2 * Hc :]

    wid = batch.word_ids.T
    gw = np.zeros_like(params.word_table.matrix)
    np.add.at(gw, wid.reshape(-1), dwe.reshape(-1, Dw))
    gw[PAD, :] = 0.0
    g["word_table"] = gw

    # Character bi-LSTM: gradient enters only at each word's final step.
    N = T * B
    dcr = dchar_repr.reshape(N, 2 * Hc)
    if acts._dropout_char_out is not None:
        dcr = dcr * acts._dropout_char_out
    last, rev_char = acts._char_last, acts._char_rev
    C = rev_char.shape[1]
    n_idx = np.arange(N)
    zeros_c = np.zeros((N, Hc))

    cf = acts._char_trace_f
    dh_out_cf = np.zeros((C, N, Hc))
    dh_out_cf[last, n_idx] = dcr[:, :Hc]
    dpre_cf, du_cf, _, _ = kernels.lstm_backward(
        params.char_fwd.u, cf.h, cf.c, cf.tc, cf.gi, cf.gf, cf.go, cf.gg, zeros_c, zeros_c, dh_out_cf
    )
    cb = acts._char_trace_b
    dh_out_cb = np.zeros((C, N, Hc))
    dh_out_cb[last, n_idx] = dcr[:, Hc:]
    dpre_cb, du_cb, _, _ = kernels.lstm_backward(
        params.char_bwd.u, cb.h, cb.c, cb.tc, cb.gi, cb.gf, cb.go, cb.gg, zeros_c, zeros_c, dh_out_cb
    )

    chars = batch.char_ids.transpose(1, 0, 2).reshape(N, C)
    ce = params.char_table.matrix[chars]
    if acts._dropout_char_in is not None:
        ce = ce * acts._dropout_char_in
    ce_f = ce.transpose(1, 0, 2)
    ce_b = ce[n_idx[:, None], rev_char].transpose(1, 0, 2)
    g["char_fwd.wx"] = np.einsum("cni,cnj->ij", ce_f, dpre_cf)
    g["char_fwd.u"] = du_cf
    g["char_fwd.b"] = dpre_cf.sum(axis=(0, 1))
    g["char_bwd.wx"] = np.einsum("cni,cnj->ij", ce_b, dpre_cb)
    g["char_bwd.u"] = du_cb
    g["char_bwd.b"] = dpre_cb.sum(axis=(0, 1))

    dce = (dpre_cf @ params.char_fwd.wx.T).transpose(1, 0, 2)  # (N, C, Dc)
    dce_rev = (dpre_cb @ params.char_bwd.wx.T).transpose(1, 0, 2)
    dce += dce_rev[n_idx[:, None], rev_char]
    if acts._dropout_char_in is not None:
        dce = dce * acts._dropout_char_in
    gc = np.zeros_like(params.char_table.matrix)
    np.add.at(gc, chars.reshape(-1), dce.reshape(-1, cfg.char_dim))
    gc[PAD, :] = 0.0
    g["char_table"] = gc

    # Layer-mix parameters (contextual vectors themselves stay frozen).
    if params.mix is not None:
        layers = acts._ctx_layers  # (L, T, B, d)
        if dctx is None or layers is None:
            g["mix.scalars"] = np.zeros_like(params.mix.scalars)
            g["mix.scale"] = np.zeros_like(params.mix.scale)
        else:
            w = softmax_weights(params.mix.scalars)
            dots = np.einsum("ltbd,tbd->l", layers, dctx)
            g["mix.scale"] = np.array([float(w @ dots)])
            dw = params.mix.scale[0] * dots
            g["mix.scalars"] = w * (dw - float(w @ dw))

    return g


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_batch(
    batch: Batch, params: ModelParams, store: ContextualVectorStore | None = None
) -> list[list[Label]]:
    """Per-sentence labels: Incorrect iff P(Incorrect) > 0.5 (exact ties stay Correct)."""
    acts = forward(batch, params, store=store, training=False)
    p_inc = acts.label_distribution[:, :, int(Label.INCORRECT)]  # (T, B)
    out = []
    for b in range(batch.size):
        n = int(batch.lens[b])
        out.append([Label.INCORRECT if p_inc[t, b] > 0.5 else Label.CORRECT for t in range(n)])
    return out


def predict(
    sentence: Sentence, params: ModelParams, store: ContextualVectorStore | None = None
) -> list[Label]:
    return predict_batch(batch_sentences([sentence]), params, store)[0]
