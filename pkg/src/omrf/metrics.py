"""Evaluation metrics for predicted token sequences.

Covers edit distance with a full alignment, sequence and symbol error
rates, pitch / note-type / note accuracy, and per-category OMR-NED
``(I + D) / (N1 + N2)`` where N1 counts predicted and N2 ground-truth
symbols of a category.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

MATCH, SUB, DEL, INS = "match", "substitute", "delete", "insert"

SEMANTIC_CATEGORIES = {
    "note": "Notes",
    "gracenote": "GraceNotes",
    "rest": "Rests",
    "multirest": "MultiRests",
    "barline": "Barlines",
    "clef": "Clefs",
    "keySignature": "KeySignatures",
    "timeSignature": "TimeSignatures",
    "tie": "Ties",
}

AGNOSTIC_CATEGORIES = {
    "accidental": "Accidentals",
    "barline": "Barlines",
    "clef": "Clefs",
    "fermata": "Fermatas",
    "gracenote": "GraceNotes",
    "metersign": "MeterSigns",
    "note": "Notes",
    "rest": "Rests",
    "slur": "Slurs",
}

NOTE_CATEGORIES = ("Notes", "GraceNotes")


class MetricError(ValueError):
    pass


class AlignOp(NamedTuple):
    op: str
    gt: str | None
    pred: str | None


@dataclass
class EditOps:
    distance: int
    alignment: list[AlignOp]

    def counts(self) -> Counter:
        return Counter(a.op for a in self.alignment)


def edit_distance(gt: Sequence, pred: Sequence) -> EditOps:
    """Levenshtein distance from ``gt`` to ``pred`` with one optimal alignment.

    Backtrace prefers match/substitute, then delete, then insert.
    """
    n, m = len(gt), len(pred)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        row, prev = d[i], d[i - 1]
        g = gt[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (g != pred[j - 1]), prev[j] + 1, row[j - 1] + 1)

    ops = []
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (gt[i - 1] != pred[j - 1]):
            ops.append(AlignOp(MATCH if gt[i - 1] == pred[j - 1] else SUB, gt[i - 1], pred[j - 1]))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            ops.append(AlignOp(DEL, gt[i - 1], None))
            i -= 1
        else:
            ops.append(AlignOp(INS, None, pred[j - 1]))
            j -= 1
    ops.reverse()
    return EditOps(d[n][m], ops)


def replay(gt: Sequence, alignment: Sequence[AlignOp]) -> list:
    """Apply an alignment to ``gt``; yields the prediction it describes."""
    out = []
    pos = 0
    for a in alignment:
        if a.op in (MATCH, SUB):
            if gt[pos] != a.gt:
                raise MetricError("alignment does not fit ground truth")
            out.append(a.pred)
            pos += 1
        elif a.op == DEL:
            if gt[pos] != a.gt:
                raise MetricError("alignment does not fit ground truth")
            pos += 1
        else:
            out.append(a.pred)
    if pos != len(gt):
        raise MetricError("alignment leaves ground truth unconsumed")
    return out


def sequence_metrics(pairs, distances=None) -> tuple[float, float]:
    """Returns ``(SeER %, SyER %)`` over ``(gt, pred)`` pairs.

    SyER is total edit operations over total ground-truth length.
    """
    pairs = list(pairs)
    if not pairs:
        raise MetricError("no sequences to score")
    if distances is None:
        distances = [edit_distance(g, p).distance for g, p in pairs]
    gt_total = sum(len(g) for g, _ in pairs)
    if gt_total == 0:
        raise MetricError("symbol error rate undefined: all ground truths are empty")
    seer = 100.0 * sum(d > 0 for d in distances) / len(pairs)
    syer = 100.0 * sum(distances) / gt_total
    return seer, syer


# ---------------------------------------------------------------------------
# token grammar

@dataclass(frozen=True)
class NoteFields:
    category: str
    pitch: str | None = None
    note_type: str | None = None


def _prefix(token: str, seps: str) -> str:
    cut = len(token)
    for s in seps:
        k = token.find(s)
        if k != -1:
            cut = min(cut, k)
    return token[:cut]


def parse_token(token: str, encoding: str = "semantic") -> NoteFields:
    """Category, and for note-bearing tokens the pitch and note type.

    Semantic tokens look like ``note-C4_quarter`` or ``barline``; agnostic
    ones like ``note.quarter-L1`` or ``barline-L1`` (the staff position
    plays the role of pitch there).
    """
    if not token:
        raise MetricError("empty token")
    if encoding == "semantic":
        head = _prefix(token, "-")
        category = SEMANTIC_CATEGORIES.get(head, "Others")
        if category in NOTE_CATEGORIES:
            body = token[len(head) + 1:]
            pitch, _, ntype = body.partition("_")
            return NoteFields(category, pitch or None, ntype or None)
        return NoteFields(category)
    if encoding == "agnostic":
        head = _prefix(token, ".-")
        category = AGNOSTIC_CATEGORIES.get(head, "Others")
        if category in NOTE_CATEGORIES:
            rest = token[len(head):]
            ntype, _, pos = rest.lstrip(".").partition("-")
            return NoteFields(category, pos or None, ntype or None)
        return NoteFields(category)
    raise MetricError(f"unknown encoding {encoding!r}")


def note_accuracies(alignments: Sequence[EditOps] | EditOps, encoding="semantic"):
    """Pitch, note-type and note accuracy (percent) over ground-truth notes.

    A ground-truth note aligned to a prediction (match or substitution) is
    scored field by field; a deleted note counts as wrong for all three.
    """
    if isinstance(alignments, EditOps):
        alignments = [alignments]
    total = pitch_ok = type_ok = both_ok = 0
    for eo in alignments:
        for a in eo.alignment:
            if a.op == INS:
                continue
            g = parse_token(a.gt, encoding)
            if g.category not in NOTE_CATEGORIES:
                continue
            total += 1
            if a.op == DEL:
                continue
            p = parse_token(a.pred, encoding)
            pok = p.category in NOTE_CATEGORIES and p.pitch == g.pitch
            tok = p.category in NOTE_CATEGORIES and p.note_type == g.note_type
            pitch_ok += pok
            type_ok += tok
            both_ok += pok and tok
    if total == 0:
        raise MetricError("no ground-truth notes to score")
    return 100.0 * pitch_ok / total, 100.0 * type_ok / total, 100.0 * both_ok / total


# ---------------------------------------------------------------------------
# OMR-NED

@dataclass
class OmrNedRow:
    category: str
    insertions: int
    deletions: int
    n_pred: int
    n_gt: int
    error_share: float = 0.0

    @property
    def omr_ned(self) -> float:
        denom = self.n_pred + self.n_gt
        return 0.0 if denom == 0 else 100.0 * (self.insertions + self.deletions) / denom

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions


@dataclass
class OmrNedReport:
    rows: list[OmrNedRow]

    @property
    def total_errors(self) -> int:
        return sum(r.errors for r in self.rows)

    @property
    def overall(self) -> float:
        denom = sum(r.n_pred + r.n_gt for r in self.rows)
        return 0.0 if denom == 0 else 100.0 * self.total_errors / denom

    def row(self, category) -> OmrNedRow:
        for r in self.rows:
            if r.category == category:
                return r
        raise KeyError(category)


def report_from_counts(counts) -> OmrNedReport:
    """Build a report from ``(category, I, D, N1, N2)`` tuples, filling error shares."""
    rows = [OmrNedRow(c, int(i), int(d), int(n1), int(n2)) for c, i, d, n1, n2 in counts]
    total = sum(r.errors for r in rows)
    for r in rows:
        r.error_share = 0.0 if total == 0 else 100.0 * r.errors / total
    return OmrNedReport(rows)


def omr_ned_report(pairs, encoding="semantic", alignments=None) -> OmrNedReport:
    """Per-category insertions/deletions from whole-sequence alignments.

    A substitution counts as a deletion in the ground-truth token's category
    plus an insertion in the predicted token's category.
    """
    pairs = list(pairs)
    if alignments is None:
        alignments = [edit_distance(g, p) for g, p in pairs]
    ins, dels, n_pred, n_gt = Counter(), Counter(), Counter(), Counter()

    def cat(tok):
        return parse_token(tok, encoding).category

    for (g, p), eo in zip(pairs, alignments):
        n_gt.update(cat(t) for t in g)
        n_pred.update(cat(t) for t in p)
        for a in eo.alignment:
            if a.op in (DEL, SUB):
                dels[cat(a.gt)] += 1
            if a.op in (INS, SUB):
                ins[cat(a.pred)] += 1
    cats = sorted(set(n_gt) | set(n_pred))
    return report_from_counts((c, ins[c], dels[c], n_pred[c], n_gt[c]) for c in cats)


# ---------------------------------------------------------------------------
# full report

@dataclass
class MetricsReport:
    seer: float
    syer: float
    pitch_acc: float | None
    type_acc: float | None
    note_acc: float | None
    omr_ned: OmrNedReport
    n_sequences: int
    seconds: float | None = None
    extra: dict = field(default_factory=dict)

    def key_values(self) -> list[tuple[str, str]]:
        def fmt(v):
            return "nan" if v is None else f"{v:.4f}"

        kv = [("sequences", str(self.n_sequences)),
              ("seer", fmt(self.seer)),
              ("syer", fmt(self.syer)),
              ("pitch_accuracy", fmt(self.pitch_acc)),
              ("type_accuracy", fmt(self.type_acc)),
              ("note_accuracy", fmt(self.note_acc)),
              ("omr_ned", fmt(self.omr_ned.overall))]
        if self.seconds is not None:
            kv.append(("seconds", f"{self.seconds:.3f}"))
        kv.extend((k, str(v)) for k, v in self.extra.items())
        return kv

    def machine_readable(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.key_values())

    def table(self) -> str:
        lines = [f"{'Category':<16}{'I':>8}{'D':>8}{'N1':>10}{'N2':>10}{'OMR-NED(%)':>12}{'Errors(%)':>11}"]
        for r in self.omr_ned.rows:
            lines.append(f"{r.category:<16}{r.insertions:>8}{r.deletions:>8}{r.n_pred:>10}"
                         f"{r.n_gt:>10}{r.omr_ned:>12.2f}{r.error_share:>11.2f}")
        lines.append(f"{'Overall':<16}{'--':>8}{'--':>8}{'--':>10}{'--':>10}"
                     f"{self.omr_ned.overall:>12.2f}   SyER = {self.syer:.2f}%")
        acc = ("n/a" if self.pitch_acc is None else
               f"pitch {self.pitch_acc:.2f}%  type {self.type_acc:.2f}%  note {self.note_acc:.2f}%")
        lines.append(f"SeER {self.seer:.2f}%  SyER {self.syer:.2f}%  {acc}")
        return "\n".join(lines) + "\n"


def evaluate_pairs(pairs, encoding="semantic") -> MetricsReport:
    """All metrics for a list of ``(gt_tokens, pred_tokens)`` pairs."""
    pairs = [(list(g), list(p)) for g, p in pairs]
    aligns = [edit_distance(g, p) for g, p in pairs]
    seer, syer = sequence_metrics(pairs, [a.distance for a in aligns])
    try:
        pitch, ntype, note = note_accuracies(aligns, encoding)
    except MetricError:
        pitch = ntype = note = None
    ned = omr_ned_report(pairs, encoding, alignments=aligns)
    return MetricsReport(seer, syer, pitch, ntype, note, ned, len(pairs))
