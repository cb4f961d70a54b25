"""Token-level scoring: precision/recall/F-beta plus per-error-type recall.

Counts treat Incorrect as the positive class. Accumulation is associative
and commutative, so counts can be sharded across workers and merged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from gedkit.corpus import Label
from gedkit.edits import EditOp, ErrorType
from gedkit.errors import ValidationError


@dataclass
class EvalCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    # type/op -> [detected, total], tallied over gold-Incorrect tokens only
    by_type: dict[ErrorType, list[int]] = field(default_factory=dict)
    by_op: dict[EditOp, list[int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        merged = EvalCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )
        for src in (self.by_type, other.by_type):
            for k, (d, t) in src.items():
                cell = merged.by_type.setdefault(k, [0, 0])
                cell[0] += d
                cell[1] += t
        for src in (self.by_op, other.by_op):
            for k, (d, t) in src.items():
                cell = merged.by_op.setdefault(k, [0, 0])
                cell[0] += d
                cell[1] += t
        return merged


def accumulate(
    gold: Sequence[Label],
    pred: Sequence[Label],
    types: Sequence[tuple[EditOp, ErrorType] | None] | None = None,
    counts: EvalCounts | None = None,
) -> EvalCounts:
    """Add one sentence's token-wise confusion counts (and typed tallies) to counts."""
    if len(gold) != len(pred):
        raise ValidationError(f"gold/pred length mismatch: {len(gold)} vs {len(pred)}")
    if types is not None and len(types) != len(gold):
        raise ValidationError(f"types length mismatch: {len(types)} vs {len(gold)}")
    c = counts if counts is not None else EvalCounts()
    for i, (g, p) in enumerate(zip(gold, pred)):
        hit = p == Label.INCORRECT
        if g == Label.INCORRECT:
            if hit:
                c.tp += 1
            else:
                c.fn += 1
            if types is not None and types[i] is not None:
                op, etype = types[i]
                tcell = c.by_type.setdefault(etype, [0, 0])
                ocell = c.by_op.setdefault(op, [0, 0])
                tcell[1] += 1
                ocell[1] += 1
                if hit:
                    tcell[0] += 1
                    ocell[0] += 1
        else:
            if hit:
                c.fp += 1
            else:
                c.tn += 1
    return c


def merge_counts(counts: Iterable[EvalCounts]) -> EvalCounts:
    """Micro-aggregate: sum tallies before dividing."""
    out = EvalCounts()
    for c in counts:
        out = out + c
    return out


def f_score(precision: float, recall: float, beta: float = 0.5) -> float:
    """F-beta from precision and recall; 0 when both are 0.

    Scale-invariant: feeding percentages yields a percentage.
    """
    if beta <= 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    denom = beta * beta * precision + recall
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denom


def f_beta(counts: EvalCounts, beta: float = 0.5) -> tuple[float, float, float]:
    """(precision, recall, F-beta) as fractions; any 0/0 is 0 by convention."""
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    return p, r, f_score(p, r, beta)


@dataclass
class TypedRecallReport:
    """Recall per error type and per edit operation, with frequencies.

    ``recall`` entries are None when the type never occurs (undefined, not 0).
    """

    type_rows: list[tuple[ErrorType, int, int, float | None]]
    op_rows: list[tuple[EditOp, int, int, float | None]]
    overall: tuple[int, int, float | None]


def recall_by_type(counts: EvalCounts) -> TypedRecallReport:
    def row(detected: int, total: int):
        return detected, total, (detected / total if total > 0 else None)

    type_rows = []
    for etype in ErrorType:
        d, t = counts.by_type.get(etype, [0, 0])
        type_rows.append((etype, *row(d, t)))
    op_rows = []
    for op in EditOp:
        d, t = counts.by_op.get(op, [0, 0])
        op_rows.append((op, *row(d, t)))
    d = sum(r[1] for r in type_rows)
    t = sum(r[2] for r in type_rows)
    return TypedRecallReport(type_rows, op_rows, (*row(d, t),))


def macro_recall_by_type(per_dataset: Sequence[EvalCounts]) -> dict[ErrorType, float | None]:
    """Mean of per-dataset recalls (datasets where the type is absent are skipped).

    Provided for comparison only; micro-aggregation is the primary view.
    """
    out: dict[ErrorType, float | None] = {}
    for etype in ErrorType:
        vals = []
        for c in per_dataset:
            d, t = c.by_type.get(etype, [0, 0])
            if t > 0:
                vals.append(d / t)
        out[etype] = sum(vals) / len(vals) if vals else None
    return out


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100.0 * x:.2f}"


def render_scores(rows: Sequence[tuple[str, float, float, float]], fmt: str = "tsv") -> str:
    """Rows of (dataset, P, R, F0.5) fractions; values rendered as 2-decimal percents."""
    header = ("dataset", "P", "R", "F0.5")
    body = [(name, _pct(p), _pct(r), _pct(f)) for name, p, r, f in rows]
    return _render_table([header, *body], fmt)


def render_typed(report: TypedRecallReport, fmt: str = "tsv") -> str:
    header = ("type", "detected", "total", "recall", "frequency")
    body: list[tuple[str, ...]] = []
    for etype, d, t, r in report.type_rows:
        body.append((etype.value, str(d), str(t), _pct(r), str(t)))
    for op, d, t, r in report.op_rows:
        body.append((op.name.capitalize(), str(d), str(t), _pct(r), str(t)))
    d, t, r = report.overall
    body.append(("OVERALL", str(d), str(t), _pct(r), str(t)))
    return _render_table([header, *body], fmt)


def render_report(
    score_rows: Sequence[tuple[str, float, float, float]],
    typed: TypedRecallReport | None = None,
    fmt: str = "tsv",
) -> str:
    parts = [render_scores(score_rows, fmt)]
    if typed is not None:
        parts.append(render_typed(typed, fmt))
    return "\n".join(parts)


def _render_table(rows: list[tuple[str, ...]], fmt: str) -> str:
    if fmt == "tsv":
        return "\n".join("\t".join(r) for r in rows) + "\n"
    if fmt == "table":
        widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
        lines = []
        for i, r in enumerate(rows):
            lines.append("  ".join(cell.ljust(w) if j == 0 else cell.rjust(w)
                                   for j, (cell, w) in enumerate(zip(r, widths))))
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown report format {fmt!r}")
