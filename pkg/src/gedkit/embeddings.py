"""Token representations.

Trainable word/character embedding tables, static word-vector loading,
the on-disk contextual vector store (this module is the format's reference
reader), learned layer mixing for multi-layer providers, and a deterministic
pseudo-contextual provider used for tests and pipeline dry runs.
"""

from __future__ import annotations

import hashlib
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from gedkit.corpus import PAD, Sentence, Vocab
from gedkit.errors import ParseError, StoreLookupError, ValidationError

PROVIDER_KINDS = ("BERT_base", "BERT_large", "ELMo", "Flair", "Pseudo")

#: (layer count, dimension) contract per provider.
PROVIDER_SHAPES = {
    "BERT_base": (1, 3072),
    "BERT_large": (1, 4096),
    "ELMo": (3, 1024),
    "Flair": (1, 4096),
}


@dataclass
class EmbeddingTable:
    """A (vocab size x dim) lookup table; the PAD row stays zero forever."""

    matrix: np.ndarray
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __post_init__(self):
        self.matrix[PAD, :] = 0.0


def init_table(n_rows: int, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    m = rng.uniform(-0.1, 0.1, size=(n_rows, dim))
    return EmbeddingTable(m)


def load_static_vectors(path: str, vocab: Vocab, dim: int, seed: int = 0) -> EmbeddingTable:
    """Initialize a word table from a whitespace-delimited text vector file.

    An optional "<count> <dim>" header line is accepted. Vocabulary words are
    matched by lowercased file token, first occurrence winning; words absent
    from the file keep a seeded uniform [-0.1, 0.1] row. The PAD row is zero.
    """
    rng = np.random.default_rng(seed)
    table = init_table(vocab.n_words, dim, rng)
    filled: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        first = True
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p != ""]
            if not parts:
                continue
            if first:
                first = False
                if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                    if int(parts[1]) != dim:
                        raise ParseError(
                            f"header declares dim {parts[1]}, expected {dim}", path=path, line=line_no
                        )
                    continue
            if len(parts) != dim + 1:
                raise ParseError(
                    f"expected token + {dim} values, got {len(parts)} fields", path=path, line=line_no
                )
            wid = vocab.word_to_id.get(parts[0].lower())
            if wid is None or wid in filled or wid == PAD:
                continue
            try:
                table.matrix[wid] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"bad float: {exc}", path=path, line=line_no) from exc
            filled.add(wid)
    table.matrix[PAD, :] = 0.0
    return table


# ---------------------------------------------------------------------------
# Layer mixing
# ---------------------------------------------------------------------------

@dataclass
class LayerMixParams:
    """ELMo-style task-specific mixing: softmax(task scalars) plus one scale."""

    scalars: np.ndarray  # (L,)
    scale: np.ndarray  # (1,)

    @classmethod
    def fresh(cls, n_layers: int) -> "LayerMixParams":
        # All-zero scalars start at the unweighted layer average; scale 1.
        return cls(np.zeros(n_layers), np.ones(1))

    @property
    def n_layers(self) -> int:
        return self.scalars.shape[0]


def softmax_weights(scalars: np.ndarray) -> np.ndarray:
    z = scalars - scalars.max()
    e = np.exp(z)
    return e / e.sum()


def mix_layers(layers: np.ndarray, mix: LayerMixParams) -> np.ndarray:
    """Weighted element-wise sum over the leading (layer) axis.

    result = scale * sum_j softmax(scalars)_j * layers[j]
    """
    layers = np.asarray(layers, dtype=np.float64)
    if layers.ndim < 2:
        raise ValidationError("mix_layers expects an (L, ...) stack of layer vectors")
    if layers.shape[0] != mix.n_layers:
        raise ValidationError(
            f"layer count mismatch: {layers.shape[0]} layers vs {mix.n_layers} mix scalars"
        )
    w = softmax_weights(mix.scalars)
    return mix.scale[0] * np.tensordot(w, layers, axes=(0, 0))


# ---------------------------------------------------------------------------
# Contextual vector store
# ---------------------------------------------------------------------------

_MAGIC = "CTXSTORE"
_VERSION = "1"


@dataclass(frozen=True)
class ContextualVectorStore:
    """Immutable per-(sentence, token) stack of L layer vectors of dim d."""

    provider_kind: str
    layer_count: int
    dim: int
    vectors: dict[tuple[str, int], np.ndarray] = field(repr=False)

    def has(self, sid: str, index: int) -> bool:
        return (sid, index) in self.vectors

    def get(self, sid: str, index: int) -> np.ndarray:
        """The (L, d) float32 stack for one token; raises StoreLookupError if absent."""
        try:
            return self.vectors[(sid, index)]
        except KeyError:
            raise StoreLookupError(sid, index) from None

    def __len__(self) -> int:
        return len(self.vectors)

    def missing_for(self, sentences: Iterable[Sentence]) -> list[tuple[str, int]]:
        gaps = []
        for sent in sentences:
            for i in range(len(sent)):
                if not self.has(sent.sid, i):
                    gaps.append((sent.sid, i))
        return gaps


def get_context_vector(
    store: ContextualVectorStore,
    mix: LayerMixParams | None,
    sid: str,
    index: int,
) -> np.ndarray:
    """One token's context vector: the stored vector (L=1) or the learned mix (L>1)."""
    stack = store.get(sid, index)
    if store.layer_count == 1:
        return stack[0].astype(np.float64)
    if mix is None:
        raise ValidationError(
            f"store has {store.layer_count} layers; layer-mix parameters are required"
        )
    return mix_layers(stack.astype(np.float64), mix)


def write_store(
    path: str,
    provider_kind: str,
    layer_count: int,
    dim: int,
    entries: Iterable[tuple[str, int, np.ndarray]],
):
    """Write the binary store format; entries are (sid, token index, (L, d) array).

    Records are sorted by (sid UTF-8 bytes, index). The file ends with a
    record count and a CRC-32 of the record payload; writing is atomic.
    """
    recs = []
    for sid, idx, arr in entries:
        a = np.ascontiguousarray(arr, dtype="<f4")
        if a.shape != (layer_count, dim):
            raise ValidationError(
                f"entry ({sid!r}, {idx}) has shape {a.shape}, expected ({layer_count}, {dim})"
            )
        recs.append((sid.encode("utf-8"), idx, a))
    recs.sort(key=lambda r: (r[0], r[1]))

    payload = bytearray()
    for sid_b, idx, a in recs:
        payload += struct.pack("<I", len(sid_b))
        payload += sid_b
        payload += struct.pack("<I", idx)
        payload += a.tobytes()
    header = f"{_MAGIC} {_VERSION} {layer_count} {dim} {provider_kind}\n".encode("utf-8")
    trailer = struct.pack("<II", len(recs), zlib.crc32(bytes(payload)) & 0xFFFFFFFF)

    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(trailer)
    os.replace(tmp, path)


def read_store(path: str) -> ContextualVectorStore:
    """Reference reader for the store format; validates checksum, order and shapes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise ParseError("missing store header line", path=path, line=1)
    fields = blob[:nl].decode("utf-8", errors="replace").split(" ")
    if len(fields) != 5 or fields[0] != _MAGIC:
        raise ParseError(f"bad store header {blob[:nl]!r}", path=path, line=1)
    if fields[1] != _VERSION:
        raise ParseError(f"unsupported store version {fields[1]}", path=path, line=1)
    try:
        layer_count, dim = int(fields[2]), int(fields[3])
    except ValueError as exc:
        raise ParseError(f"bad store header: {exc}", path=path, line=1) from exc
    provider_kind = fields[4]

    body = blob[nl + 1 :]
    if len(body) < 8:
        raise ParseError("store truncated before trailer", path=path)
    payload, trailer = body[:-8], body[-8:]
    count, checksum = struct.unpack("<II", trailer)
    actual = zlib.crc32(payload) & 0xFFFFFFFF
    if actual != checksum:
        raise ParseError(
            f"store checksum mismatch: expected {checksum:#010x}, got {actual:#010x}", path=path
        )

    vectors: dict[tuple[str, int], np.ndarray] = {}
    vec_bytes = 4 * layer_count * dim
    off = 0
    prev_key: tuple[bytes, int] | None = None
    while off < len(payload):
        if off + 4 > len(payload):
            raise ParseError("store truncated inside a record", path=path)
        (sid_len,) = struct.unpack_from("<I", payload, off)
        off += 4
        end = off + sid_len + 4 + vec_bytes
        if end > len(payload):
            raise ParseError("store truncated inside a record", path=path)
        sid_b = payload[off : off + sid_len]
        off += sid_len
        (idx,) = struct.unpack_from("<I", payload, off)
        off += 4
        key = (sid_b, idx)
        if prev_key is not None and key <= prev_key:
            raise ParseError(f"store records out of order at {sid_b!r}:{idx}", path=path)
        prev_key = key
        arr = np.frombuffer(payload, dtype="<f4", count=layer_count * dim, offset=off)
        off += vec_bytes
        arr = arr.reshape(layer_count, dim)
        arr.flags.writeable = False
        vectors[(sid_b.decode("utf-8"), idx)] = arr
    if len(vectors) != count:
        raise ParseError(
            f"store trailer declares {count} records, found {len(vectors)}", path=path
        )
    return ContextualVectorStore(provider_kind, layer_count, dim, vectors)


# ---------------------------------------------------------------------------
# Pseudo-contextual provider
# ---------------------------------------------------------------------------

def pseudo_vector(surface: str, position: int, layer: int, dim: int, seed: int) -> np.ndarray:
    """Deterministic stand-in vector in [-1, 1]^dim.

    Depends on the token surface AND its position, so identical words in
    different slots get different vectors, mimicking a contextual encoder.
    """
    key = f"{surface}\x1f{position}\x1f{layer}\x1f{seed}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.uniform(-1.0, 1.0, size=dim)


def pseudo_context(
    surfaces: Sequence[str], layer_count: int, dim: int, seed: int
) -> list[tuple[int, np.ndarray]]:
    """Store entries (token index, (L, d) stack) for one sentence."""
    if layer_count < 1 or dim < 1:
        raise ValidationError("pseudo_context needs layer_count >= 1 and dim >= 1")
    out = []
    for i, surf in enumerate(surfaces):
        stack = np.stack([pseudo_vector(surf, i, l, dim, seed) for l in range(layer_count)])
        out.append((i, stack.astype(np.float32)))
    return out


def build_pseudo_store(
    sentences: Iterable[Sentence], layer_count: int, dim: int, seed: int
) -> ContextualVectorStore:
    vectors: dict[tuple[str, int], np.ndarray] = {}
    for sent in sentences:
        for idx, stack in pseudo_context(sent.surfaces, layer_count, dim, seed):
            stack.flags.writeable = False
            vectors[(sent.sid, idx)] = stack
    return ContextualVectorStore("Pseudo", layer_count, dim, vectors)


def write_pseudo_store(
    path: str, sentences: Sequence[Sentence], layer_count: int, dim: int, seed: int
):
    store = build_pseudo_store(sentences, layer_count, dim, seed)
    write_store(
        path,
        "Pseudo",
        layer_count,
        dim,
        ((sid, idx, arr) for (sid, idx), arr in store.vectors.items()),
    )
