"""Corpus ingestion: M2 and parallel-file parsing, token labels, vocabularies.

Sentences are immutable; every operation here is a pure function, so loaded
corpora can be shared freely between threads.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Sequence

from gedkit.edits import Edit, EditOp, ErrorType, align_edits
from gedkit.errors import ParseError, ValidationError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN = "<pad>", "<unk>", "<s>", "</s>"
_SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)


class Label(IntEnum):
    CORRECT = 0
    INCORRECT = 1


@dataclass(frozen=True)
class Token:
    surface: str
    pos: str | None = None
    word_id: int | None = None
    char_ids: tuple[int, ...] | None = None

    @property
    def chars(self) -> tuple[str, ...]:
        return tuple(self.surface)


@dataclass(frozen=True)
class Sentence:
    sid: str
    tokens: tuple[Token, ...]
    gold_labels: tuple[Label, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ValidationError(f"sentence {self.sid!r} has no tokens")
        if len(self.gold_labels) != len(self.tokens):
            raise ValidationError(
                f"sentence {self.sid!r}: {len(self.gold_labels)} labels for {len(self.tokens)} tokens"
            )

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AnnotatedSentence:
    """One sentence under one annotation set (annotator)."""

    sentence: Sentence
    edits: tuple[Edit, ...]
    annotator: int = 0

    def __post_init__(self):
        n = len(self.sentence)
        prev_end = -1
        for e in self.edits:
            if e.o_end > n:
                raise ValidationError(
                    f"sentence {self.sentence.sid!r}: edit span ({e.o_start}, {e.o_end}) "
                    f"exceeds length {n}"
                )
            if e.o_start < prev_end:
                raise ValidationError(
                    f"sentence {self.sentence.sid!r}: overlapping or unsorted edits in "
                    f"annotation set {self.annotator}"
                )
            prev_end = max(prev_end, e.o_end)


def make_tokens(surfaces: Sequence[str], pos: Sequence[str | None] | None = None) -> tuple[Token, ...]:
    toks = []
    for i, s in enumerate(surfaces):
        if s == "" or s != s.strip() or any(ch.isspace() for ch in s):
            raise ValidationError(f"bad token {s!r}: tokens must be non-empty and whitespace-free")
        toks.append(Token(surface=s, pos=pos[i] if pos else None))
    return tuple(toks)


def make_annotated(
    sid: str,
    surfaces: Sequence[str],
    edits: Sequence[Edit],
    annotator: int = 0,
    pos: Sequence[str | None] | None = None,
) -> AnnotatedSentence:
    """Build an AnnotatedSentence, deriving gold labels from the edits."""
    tokens = make_tokens(surfaces, pos)
    ordered = tuple(sorted(edits, key=lambda e: (e.o_start, e.o_end)))
    labels = spans_to_token_labels(len(tokens), ordered)
    return AnnotatedSentence(Sentence(sid, tokens, labels), ordered, annotator)


def spans_to_token_labels(n_tokens: int, edits: Sequence[Edit]) -> tuple[Label, ...]:
    """Convert span edits to per-token binary labels.

    Tokens inside any edit span are Incorrect. A zero-width (missing) edit at
    position k marks the token at min(k, n-1), i.e. the token right after the
    insertion point, clamped to the last token at sentence end.
    """
    labels = [Label.CORRECT] * n_tokens
    for e in edits:
        if e.o_start == e.o_end:
            labels[min(e.o_start, n_tokens - 1)] = Label.INCORRECT
        else:
            for i in range(e.o_start, min(e.o_end, n_tokens)):
                labels[i] = Label.INCORRECT
    return tuple(labels)


def token_types(
    n_tokens: int, edits: Sequence[Edit]
) -> tuple[tuple[EditOp, ErrorType] | None, ...]:
    """Per-token (operation, error type) inherited from the covering edit.

    Tokens outside every edit get None; when a clamped missing edit lands on
    a token already covered, the first edit in (start, end) order wins.
    """
    out: list[tuple[EditOp, ErrorType] | None] = [None] * n_tokens
    for e in sorted(edits, key=lambda e: (e.o_start, e.o_end)):
        etype = e.etype or ErrorType.OTHER
        if e.o_start == e.o_end:
            k = min(e.o_start, n_tokens - 1)
            if out[k] is None:
                out[k] = (e.op, etype)
        else:
            for i in range(e.o_start, min(e.o_end, n_tokens)):
                if out[i] is None:
                    out[i] = (e.op, etype)
    return tuple(out)


# ---------------------------------------------------------------------------
# M2 format
# ---------------------------------------------------------------------------

def parse_m2(content: str, path: str | None = None, sid_prefix: str = "s") -> list[AnnotatedSentence]:
    """Parse M2 text into one AnnotatedSentence per (sentence, annotator) pair.

    A "noop" annotation (spans -1 -1) marks an annotator who saw no errors;
    a sentence block without any A lines is treated as annotator 0 with no
    edits.
    """
    out: list[AnnotatedSentence] = []
    block_tokens: list[str] | None = None
    # annotator -> list of edits, in file order
    block_edits: dict[int, list[Edit]] = {}
    block_index = 0

    def flush(line_no: int):
        nonlocal block_tokens, block_edits, block_index
        if block_tokens is None:
            return
        block_index += 1
        sid = f"{sid_prefix}{block_index:06d}"
        annotators = sorted(block_edits) or [0]
        for ann in annotators:
            try:
                out.append(make_annotated(sid, block_tokens, block_edits.get(ann, []), ann))
            except ValidationError as exc:
                raise ParseError(str(exc), path=path, line=line_no) from exc
        block_tokens = None
        block_edits = {}

    for line_no, raw in enumerate(content.split("\n"), 1):
        line = raw.rstrip("\n")
        if line.strip() == "":
            flush(line_no)
            continue
        if line.startswith("S "):
            if block_tokens is not None:
                raise ParseError("second S line inside one block", path=path, line=line_no)
            block_tokens = line[2:].split()
            if not block_tokens:
                raise ParseError("empty S line", path=path, line=line_no)
        elif line.startswith("A "):
            if block_tokens is None:
                raise ParseError("A line before any S line", path=path, line=line_no)
            fields = line[2:].split("|||")
            if len(fields) != 6:
                raise ParseError(f"expected 6 |||-fields, got {len(fields)}", path=path, line=line_no)
            span = fields[0].split()
            if len(span) != 2:
                raise ParseError(f"bad span field {fields[0]!r}", path=path, line=line_no)
            try:
                start, end = int(span[0]), int(span[1])
                annotator = int(fields[5])
            except ValueError as exc:
                raise ParseError(f"non-integer field: {exc}", path=path, line=line_no) from exc
            etype = fields[1]
            if etype == "noop":
                block_edits.setdefault(annotator, [])
                continue
            if end < start:
                raise ParseError(f"edit span end {end} < start {start}", path=path, line=line_no)
            correction = fields[2]
            c_tokens = tuple(correction.split()) if correction not in ("", "-NONE-") else ()
            try:
                edit = Edit(start, end, c_tokens, etype)
            except ValidationError as exc:
                raise ParseError(str(exc), path=path, line=line_no) from exc
            block_edits.setdefault(annotator, []).append(edit)
        else:
            raise ParseError(f"unrecognized line {line!r}", path=path, line=line_no)
    flush(len(content.split("\n")))
    return out


def serialize_m2(annotated: Iterable[AnnotatedSentence]) -> str:
    """Render AnnotatedSentences back to M2 text.

    Records sharing a sid are merged into one block; annotation sets without
    edits are written as noop lines, so every annotator stays represented.
    """
    blocks: list[str] = []
    group: list[AnnotatedSentence] = []

    def render(group: list[AnnotatedSentence]) -> str:
        lines = ["S " + " ".join(group[0].sentence.surfaces)]
        for ann in group:
            if not ann.edits:
                lines.append(f"A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||{ann.annotator}")
            for e in ann.edits:
                corr = " ".join(e.c_tokens)
                lines.append(
                    f"A {e.o_start} {e.o_end}|||{e.type_str or 'UNK'}|||{corr}|||REQUIRED|||-NONE-|||{ann.annotator}"
                )
        return "\n".join(lines)

    for rec in annotated:
        if group and rec.sentence.sid != group[0].sentence.sid:
            blocks.append(render(group))
            group = []
        group.append(rec)
    if group:
        blocks.append(render(group))
    return "\n\n".join(blocks) + "\n"


def parse_parallel(
    original_lines: Sequence[str],
    corrected_lines: Sequence[str],
    sid_prefix: str = "s",
) -> list[AnnotatedSentence]:
    """Derive annotations by aligning parallel original/corrected sentences."""
    if len(original_lines) != len(corrected_lines):
        raise ParseError(
            f"parallel files differ in length: {len(original_lines)} vs {len(corrected_lines)} lines"
        )
    out = []
    for idx, (o_line, c_line) in enumerate(zip(original_lines, corrected_lines), 1):
        orig, corr = o_line.split(), c_line.split()
        if not orig:
            raise ParseError("empty original sentence", line=idx)
        edits = align_edits(orig, corr)
        out.append(make_annotated(f"{sid_prefix}{idx:06d}", orig, edits, annotator=0))
    return out


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vocab:
    """Word and character index maps; words are keyed by lowercased surface."""

    word_to_id: dict[str, int]
    char_to_id: dict[str, int]

    specials = {PAD_TOKEN: PAD, UNK_TOKEN: UNK, BOS_TOKEN: BOS, EOS_TOKEN: EOS}

    @property
    def n_words(self) -> int:
        return len(self.word_to_id)

    @property
    def n_chars(self) -> int:
        return len(self.char_to_id)

    def word_id(self, surface: str) -> int:
        return self.word_to_id.get(surface.lower(), UNK)

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, UNK)

    def to_json(self) -> str:
        return json.dumps(
            {"words": self.word_to_id, "chars": self.char_to_id}, ensure_ascii=False, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        data = json.loads(text)
        return cls(dict(data["words"]), dict(data["chars"]))


def build_vocab(sentences: Iterable[Sentence], min_count: int = 1) -> Vocab:
    """Count lowercased surfaces and index words at or above min_count.

    All observed characters are indexed regardless of frequency. Ordering is
    frequency-descending then lexicographic so vocabularies are reproducible.
    """
    if min_count < 1:
        raise ValidationError(f"min_count must be >= 1, got {min_count}")
    word_counts: Counter[str] = Counter()
    char_set: set[str] = set()
    n = 0
    for sent in sentences:
        n += 1
        for tok in sent.tokens:
            word_counts[tok.surface.lower()] += 1
            char_set.update(tok.surface)
    if n == 0:
        raise ValidationError("cannot build a vocabulary from an empty corpus")

    word_to_id = {t: i for i, t in enumerate(_SPECIAL_TOKENS)}
    for word, _ in sorted(word_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if word_counts[word] >= min_count and word not in word_to_id:
            word_to_id[word] = len(word_to_id)
    char_to_id = {t: i for i, t in enumerate(_SPECIAL_TOKENS)}
    for ch in sorted(char_set):
        if ch not in char_to_id:
            char_to_id[ch] = len(char_to_id)
    return Vocab(word_to_id, char_to_id)


def encode(sentence: Sentence, vocab: Vocab) -> Sentence:
    """Fill word/char ids on every token; unseen words and characters map to UNK."""
    toks = tuple(
        replace(
            t,
            word_id=vocab.word_id(t.surface),
            char_ids=tuple(vocab.char_id(c) for c in t.surface),
        )
        for t in sentence.tokens
    )
    return replace(sentence, tokens=toks)


# ---------------------------------------------------------------------------
# Prepared-corpus records (JSON lines artifact written by `gedkit prepare`)
# ---------------------------------------------------------------------------

def to_record(ann: AnnotatedSentence) -> dict:
    types = token_types(len(ann.sentence), ann.edits)
    return {
        "sid": ann.sentence.sid,
        "annotator": ann.annotator,
        "tokens": list(ann.sentence.surfaces),
        "pos": [t.pos for t in ann.sentence.tokens],
        "labels": [int(l) for l in ann.sentence.gold_labels],
        "types": [None if t is None else [t[0].value, t[1].value] for t in types]
        if any(t is not None for t in types)
        else None,
        "edits": [
            {"start": e.o_start, "end": e.o_end, "corr": list(e.c_tokens), "type": e.type_str}
            for e in ann.edits
        ],
    }


def from_record(rec: dict) -> AnnotatedSentence:
    edits = tuple(
        Edit(e["start"], e["end"], tuple(e["corr"]), e.get("type", "")) for e in rec["edits"]
    )
    pos = rec.get("pos")
    return make_annotated(rec["sid"], rec["tokens"], edits, rec.get("annotator", 0), pos)


def write_jsonl(records: Iterable[AnnotatedSentence], path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for ann in records:
            fh.write(json.dumps(to_record(ann), ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str) -> list[AnnotatedSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"bad corpus record: {exc}", path=path, line=line_no) from exc
    return out
