"""Edit extraction and typing.

Aligns original/corrected token sequences with a Damerau-style weighted
edit distance, merges the script into span edits, and assigns each edit an
operation (missing / replacement / unnecessary) plus a POS-based error type
from a fixed 16-way taxonomy via a deterministic rule cascade.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from gedkit.errors import ValidationError


class EditOp(Enum):
    """Edit operation class; values double as the M2 type-field prefix."""

    MISSING = "M"
    REPLACEMENT = "R"
    UNNECESSARY = "U"


class ErrorType(Enum):
    ADJ = "ADJ"
    ADV = "ADV"
    CONJ = "CONJ"
    CONTR = "CONTR"
    DET = "DET"
    MORPH = "MORPH"
    NOUN = "NOUN"
    ORTH = "ORTH"
    OTHER = "OTHER"
    PART = "PART"
    PREP = "PREP"
    PRON = "PRON"
    PUNCT = "PUNCT"
    SPELL = "SPELL"
    VERB = "VERB"
    WO = "WO"


#: POS tags eligible for the direct POS -> error type rule.
POS_RULE_TAGS = frozenset(
    {"ADJ", "ADV", "CONJ", "DET", "NOUN", "PART", "PREP", "PRON", "PUNCT", "VERB"}
)

CONTRACTION_MARKERS = ("n't", "'ll", "'ve", "'re", "'m", "'s", "'d")


@dataclass(frozen=True)
class Edit:
    """A span-based correction: replace original tokens [o_start, o_end) with c_tokens.

    ``type_str`` preserves the raw M2 type field (e.g. "R:VERB"); it may be
    empty for untyped edits and is kept verbatim so that parse -> serialize
    round trips reproduce the original annotation exactly.
    """

    o_start: int
    o_end: int
    c_tokens: tuple[str, ...]
    type_str: str = ""

    def __post_init__(self):
        if self.o_start < 0 or self.o_end < self.o_start:
            raise ValidationError(
                f"invalid edit span ({self.o_start}, {self.o_end})"
            )
        if self.o_start == self.o_end and not self.c_tokens:
            raise ValidationError("edit has an empty span and an empty replacement")

    @property
    def op(self) -> EditOp:
        return classify_operation(self.o_start, self.o_end, self.c_tokens)

    @property
    def etype(self) -> ErrorType | None:
        """Taxonomy type parsed from type_str, or None when out of taxonomy."""
        tail = self.type_str.split(":", 1)[-1]
        try:
            return ErrorType(tail)
        except ValueError:
            return None

    def with_type(self, op: EditOp, etype: ErrorType) -> "Edit":
        return Edit(self.o_start, self.o_end, self.c_tokens, f"{op.value}:{etype.value}")


def classify_operation(o_start: int, o_end: int, c_tokens: Sequence[str]) -> EditOp:
    """Operation class is fully determined by span width and replacement emptiness."""
    if o_start == o_end:
        if not c_tokens:
            raise ValidationError("edit with empty span and empty replacement")
        return EditOp.MISSING
    if not c_tokens:
        return EditOp.UNNECESSARY
    return EditOp.REPLACEMENT


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

class StepKind(Enum):
    MATCH = "M"
    SUBSTITUTE = "S"
    INSERT = "I"
    DELETE = "D"
    TRANSPOSE = "T"


@dataclass(frozen=True)
class Step:
    """One primitive alignment step.

    ``o_len``/``c_len`` are the number of original/corrected tokens the step
    consumes; transpositions consume k tokens on each side (k >= 2).
    """

    kind: StepKind
    o_len: int
    c_len: int
    cost: float


@dataclass
class AlignmentScript:
    steps: list[Step] = field(default_factory=list)

    @property
    def cost(self) -> float:
        return sum(s.cost for s in self.steps)

    def apply(self, orig: Sequence[str], corr: Sequence[str]) -> list[str]:
        """Replay the script against orig, pulling replacement material from corr."""
        out: list[str] = []
        i = j = 0
        for s in self.steps:
            if s.kind is StepKind.MATCH:
                out.extend(orig[i : i + s.o_len])
            else:
                out.extend(corr[j : j + s.c_len])
            i += s.o_len
            j += s.c_len
        return out


_SUFFIXES = (
    "ations", "ation", "ments", "ment", "ness", "ingly", "edly", "ings",
    "ing", "ies", "ied", "ily", "ers", "est", "ed", "es", "ly", "er", "s",
)


def stem(word: str) -> str:
    """Crude suffix-stripping stem; used for both alignment costs and typing."""
    w = word.lower()
    for suf in _SUFFIXES:
        if w.endswith(suf) and len(w) - len(suf) >= 3:
            return w[: -len(suf)]
    return w


def shares_stem(a: str, b: str) -> bool:
    sa, sb = stem(a), stem(b)
    return sa == sb and len(sa) >= 3


def substitution_cost(a: str, b: str) -> float:
    """Weighted substitution: cheap for near-identical forms, dear for unrelated ones.

    0.5 if the tokens are lowercase-equal or share a stem; 1.0 if they at
    least start with the same letter (a proxy for sharing a lemma); 2.0 for
    unrelated tokens, making delete+insert equally attractive.
    """
    if a.lower() == b.lower() or shares_stem(a, b):
        return 0.5
    if a[:1].lower() == b[:1].lower():
        return 1.0
    return 2.0


MATCH_COST = 0.0
INDEL_COST = 1.0


def transposition_cost(k: int) -> float:
    return float(k - 1)


def align_script(orig: Sequence[str], corr: Sequence[str]) -> AlignmentScript:
    """Minimum-cost alignment script between two token sequences.

    Dynamic program over prefixes with match/substitute/insert/delete plus
    multi-token transpositions (windows whose lowercased multisets agree).
    Ties are broken preferring match, then substitute, then transpose, then
    delete, then insert, which yields a deterministic, leftmost-ish script.
    """
    n, m = len(orig), len(corr)
    ol = [t.lower() for t in orig]
    cl = [t.lower() for t in corr]

    INF = float("inf")
    cost = [[INF] * (m + 1) for _ in range(n + 1)]
    back: list[list[Step | None]] = [[None] * (m + 1) for _ in range(n + 1)]
    cost[0][0] = 0.0
    for i in range(1, n + 1):
        cost[i][0] = cost[i - 1][0] + INDEL_COST
        back[i][0] = Step(StepKind.DELETE, 1, 0, INDEL_COST)
    for j in range(1, m + 1):
        cost[0][j] = cost[0][j - 1] + INDEL_COST
        back[0][j] = Step(StepKind.INSERT, 0, 1, INDEL_COST)

    for i in range(1, n + 1):
        for j in range(1, m + 1):
            # Candidates in tie-break preference order.
            cands: list[tuple[float, Step]] = []
            if orig[i - 1] == corr[j - 1]:
                cands.append((cost[i - 1][j - 1] + MATCH_COST, Step(StepKind.MATCH, 1, 1, MATCH_COST)))
            sc = substitution_cost(orig[i - 1], corr[j - 1])
            cands.append((cost[i - 1][j - 1] + sc, Step(StepKind.SUBSTITUTE, 1, 1, sc)))
            # Transpositions of any window size whose lowercased multisets
            # agree; the diff counter makes each size extension O(1).
            diff: Counter = Counter()
            nonzero = 0
            seq_equal = True
            for k in range(1, min(i, j) + 1):
                for w, delta in ((ol[i - k], 1), (cl[j - k], -1)):
                    old = diff[w]
                    diff[w] = old + delta
                    if old == 0 and old + delta != 0:
                        nonzero += 1
                    elif old != 0 and old + delta == 0:
                        nonzero -= 1
                seq_equal = seq_equal and ol[i - k] == cl[j - k]
                if k >= 2 and nonzero == 0 and not seq_equal:
                    tc = transposition_cost(k)
                    cands.append((cost[i - k][j - k] + tc, Step(StepKind.TRANSPOSE, k, k, tc)))
            cands.append((cost[i - 1][j] + INDEL_COST, Step(StepKind.DELETE, 1, 0, INDEL_COST)))
            cands.append((cost[i][j - 1] + INDEL_COST, Step(StepKind.INSERT, 0, 1, INDEL_COST)))

            best_cost, best_step = cands[0]
            for c, s in cands[1:]:
                if c < best_cost:
                    best_cost, best_step = c, s
            cost[i][j] = best_cost
            back[i][j] = best_step

    steps: list[Step] = []
    i, j = n, m
    while i > 0 or j > 0:
        s = back[i][j]
        assert s is not None
        steps.append(s)
        i -= s.o_len
        j -= s.c_len
    steps.reverse()
    return AlignmentScript(steps)


def script_to_edits(script: AlignmentScript, corr: Sequence[str]) -> list[Edit]:
    """Turn an alignment script into span edits.

    Substitutions and transpositions are self-contained one-to-one blocks and
    become individual edits (so "has a"->"have an" yields two edits, not one);
    maximal runs of adjacent inserts/deletes merge into a single edit.
    """
    edits: list[Edit] = []
    i = j = 0
    run_start_o = run_start_c = 0
    in_run = False

    def flush():
        nonlocal in_run
        if in_run:
            edits.append(Edit(run_start_o, i, tuple(corr[run_start_c:j])))
            in_run = False

    for s in script.steps:
        if s.kind is StepKind.MATCH:
            flush()
        elif s.kind in (StepKind.SUBSTITUTE, StepKind.TRANSPOSE):
            flush()
            edits.append(Edit(i, i + s.o_len, tuple(corr[j : j + s.c_len])))
        else:
            if not in_run:
                run_start_o, run_start_c = i, j
                in_run = True
        i += s.o_len
        j += s.c_len
    flush()
    return edits


def align_edits(orig: Sequence[str], corr: Sequence[str]) -> list[Edit]:
    """Extract untyped span edits from a sentence pair."""
    return script_to_edits(align_script(orig, corr), corr)


# ---------------------------------------------------------------------------
# Fallback POS tagging
# ---------------------------------------------------------------------------

_CLOSED_CLASS: dict[str, str] = {}


def _add_closed(tag: str, words: str):
    for w in words.split():
        _CLOSED_CLASS.setdefault(w, tag)  # first tag wins on overlap


_add_closed("PART", "to not n't")
_add_closed(
    "DET",
    "a an the this that these those my your his her its our their some any no "
    "each every either neither much many more most few little several all both "
    "half another such what which whose",
)
_add_closed(
    "PRON",
    "i you he she it we they me him us them mine yours hers ours theirs myself "
    "yourself himself herself itself ourselves yourselves themselves who whom "
    "someone anyone everyone somebody anybody everybody nobody something anything "
    "everything nothing one ones this that",
)
_add_closed(
    "PREP",
    "of in for with on at by from up about into over after under above between "
    "through during before without within along across behind beyond near since "
    "until upon toward towards against among around off down out onto per via "
    "despite inside outside beside besides except",
)
_add_closed(
    "CONJ",
    "and or but nor so yet because although though while if unless whereas "
    "whether once",
)
_add_closed(
    "VERB",
    "be am is are was were been being have has had having do does did done doing "
    "go goes went gone going get gets got make makes made take takes took see saw "
    "seen come came know knew think thought want wanted give gave use used find "
    "found tell told say said can could will would shall should may might must "
    "need dare ought",
)

_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ical", "ic", "less", "ish", "ant", "ent")
_VERB_SUFFIXES = ("ing", "ed", "ify", "ise", "ize")


def fallback_pos(token: str) -> str:
    """Heuristic coarse POS tag: closed-class lookup, then suffix shape, else NOUN.

    Accuracy only influences error-type labels, never detection labels.
    """
    low = token.lower()
    if token and all(ch in string.punctuation for ch in token):
        return "PUNCT"
    if any(low.endswith(m) for m in CONTRACTION_MARKERS):
        return "CONTR"
    if low in _CLOSED_CLASS:
        return _CLOSED_CLASS[low]
    if low.endswith("ly") and len(low) > 3:
        return "ADV"
    if any(low.endswith(s) for s in _ADJ_SUFFIXES):
        return "ADJ"
    if any(low.endswith(s) for s in _VERB_SUFFIXES) and len(low) > 4:
        return "VERB"
    return "NOUN"


def tag_tokens(tokens: Sequence[str], supplied: Sequence[str | None] | None = None) -> list[str]:
    """Use supplied tags where present, the fallback tagger elsewhere."""
    out = []
    for i, tok in enumerate(tokens):
        given = supplied[i] if supplied is not None else None
        out.append(given if given else fallback_pos(tok))
    return out


# ---------------------------------------------------------------------------
# Error typing
# ---------------------------------------------------------------------------

def char_edit_distance(a: str, b: str) -> int:
    """Plain character-level Levenshtein distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _squash(tokens: Sequence[str]) -> str:
    """Join and drop case, hyphens and whitespace for the orthography rule."""
    return "".join(tokens).replace("-", "").replace(" ", "").lower()


def classify_pos_type(
    o_tokens: Sequence[str],
    c_tokens: Sequence[str],
    o_pos: Sequence[str],
    c_pos: Sequence[str],
    lexicon: frozenset[str] | None = None,
) -> ErrorType:
    """Assign a taxonomy type to one edit via a fixed rule cascade.

    Arguments are the edit's original-side tokens/tags and corrected-side
    tokens/tags (one tag per token). The cascade, in order: orthography,
    word order, spelling (needs a lexicon), morphology, shared coarse POS,
    contraction, OTHER.
    """
    if not o_tokens and not c_tokens:
        raise ValidationError("cannot type an edit with both sides empty")
    op = classify_operation(0, len(o_tokens), c_tokens)

    # 1. Case/hyphenation/whitespace-only difference.
    if o_tokens and c_tokens and _squash(o_tokens) == _squash(c_tokens):
        return ErrorType.ORTH

    # 2. Reordering of two or more tokens.
    if (
        len(o_tokens) >= 2
        and Counter(t.lower() for t in o_tokens) == Counter(t.lower() for t in c_tokens)
    ):
        return ErrorType.WO

    # 3. Misspelled original within character distance 2 of its correction.
    if (
        lexicon is not None
        and op is EditOp.REPLACEMENT
        and len(o_tokens) == 1
        and len(c_tokens) == 1
        and o_tokens[0].lower() not in lexicon
        and char_edit_distance(o_tokens[0].lower(), c_tokens[0].lower()) <= 2
    ):
        return ErrorType.SPELL

    # 4. Same stem, different suffix, different coarse POS.
    if (
        op is EditOp.REPLACEMENT
        and len(o_tokens) == 1
        and len(c_tokens) == 1
        and o_tokens[0].lower() != c_tokens[0].lower()
        and shares_stem(o_tokens[0], c_tokens[0])
        and o_pos
        and c_pos
        and o_pos[0] != c_pos[0]
    ):
        return ErrorType.MORPH

    # 5. One shared coarse POS over the content side of the edit.
    content_pos = list(o_pos) if op is EditOp.UNNECESSARY else list(c_pos)
    if content_pos and len(set(content_pos)) == 1 and content_pos[0] in POS_RULE_TAGS:
        return ErrorType(content_pos[0])

    # 6. Contractions.
    for tok in tuple(o_tokens) + tuple(c_tokens):
        if any(m in tok.lower() for m in CONTRACTION_MARKERS):
            return ErrorType.CONTR

    return ErrorType.OTHER


def extract_typed_edits(
    orig: Sequence[str],
    corr: Sequence[str],
    orig_pos: Sequence[str | None] | None = None,
    corr_pos: Sequence[str | None] | None = None,
    lexicon: frozenset[str] | None = None,
) -> list[Edit]:
    """Align a sentence pair and type every extracted edit."""
    o_tags = tag_tokens(orig, orig_pos)
    c_tags = tag_tokens(corr, corr_pos)
    out = []
    c_cursor = 0
    last_o = 0
    for edit in align_edits(orig, corr):
        c_cursor += edit.o_start - last_o  # matched region advances both sides equally
        c_start, c_end = c_cursor, c_cursor + len(edit.c_tokens)
        etype = classify_pos_type(
            orig[edit.o_start : edit.o_end],
            edit.c_tokens,
            o_tags[edit.o_start : edit.o_end],
            c_tags[c_start:c_end],
            lexicon,
        )
        out.append(edit.with_type(edit.op, etype))
        c_cursor = c_end
        last_o = edit.o_end
    return out


def load_lexicon(path: str) -> frozenset[str]:
    """Read a plain word-list file (one word per line, lowercased on load)."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            w = line.strip()
            if w:
                words.add(w.lower())
    return frozenset(words)


def annotate_corpus(
    pairs: Iterable[tuple[str, str]],
    lexicon: frozenset[str] | None = None,
    sid_prefix: str = "s",
):
    """Build typed AnnotatedSentences from (original, corrected) line pairs."""
    from gedkit import corpus  # deferred: corpus depends on this module's Edit type

    out = []
    for idx, (orig_line, corr_line) in enumerate(pairs, 1):
        orig = orig_line.split()
        corr = corr_line.split()
        if not orig:
            raise ValidationError(f"empty original sentence at pair {idx}")
        edits = extract_typed_edits(orig, corr, lexicon=lexicon)
        out.append(corpus.make_annotated(f"{sid_prefix}{idx:06d}", orig, edits, annotator=0))
    return out
