"""Scoring predictions against expert ground truth.

Each prediction is classified as a true positive (exact canonical-id match
with a ground-truth pattern), ambiguous (a partial-overlap relation with a
ground-truth pattern nobody found exactly), or false positive. Ground-truth
patterns left unmatched are false negatives. Ambiguous calls are counted but
kept out of precision, recall and F1.

Metrics are exact :class:`fractions.Fraction` values, ``None`` when a
denominator is zero. Aggregation is micro: counts are summed over cases and
the metrics computed once.

Ground-truth corpus files are JSON Lines::

    {"case_id": "case01", "image": "images/case01.png", "expected": ["BLACK_CRUST"], "notes": "..."}
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import ConfigurationError
from .records import Finding
from .taxonomy import PatternTaxonomy, Unknown

UNDEFINED = "\u2014"  # rendered in place of an undefined metric
COLUMNS = ("System", "TP", "FP", "FN", "Precision", "Recall", "F1-score")


@dataclass(frozen=True)
class GroundTruthCase:
    case_id: str
    expected: tuple[str, ...]
    image: str = ""
    notes: str = ""
    prompt: Optional[str] = None

    def __post_init__(self):
        if len(set(self.expected)) != len(self.expected):
            raise ConfigurationError(f"{self.case_id}: duplicate ground-truth ids {list(self.expected)}")


def load_corpus(path: str | Path) -> list[GroundTruthCase]:
    cases = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            case = GroundTruthCase(rec["case_id"], tuple(rec["expected"]), rec.get("image", ""),
                                   rec.get("notes", ""), rec.get("prompt"))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"{path} line {lineno}: {exc}") from None
        if case.case_id in seen:
            raise ConfigurationError(f"{path} line {lineno}: duplicate case_id {case.case_id}")
        seen.add(case.case_id)
        cases.append(case)
    return cases


@dataclass(frozen=True)
class MatchOutcome:
    case_id: str
    tp: int
    fp: int
    fn: int
    ambiguous: int
    pairs: tuple[tuple[int, str], ...] = ()
    ambiguous_predictions: tuple[int, ...] = ()
    unmatched_predictions: tuple[int, ...] = ()
    unmatched_truths: tuple[str, ...] = ()


def match_findings(predictions: Sequence[Finding], truth: GroundTruthCase,
                   taxonomy: PatternTaxonomy) -> MatchOutcome:
    """Greedy matching in prediction order.

    Exact matches are settled first; ambiguity is then judged against the
    truths still unmatched, so counts do not depend on prediction order.
    """
    missing = [t for t in truth.expected if t not in taxonomy]
    if missing:
        raise ConfigurationError(f"{truth.case_id}: ground-truth ids not in taxonomy: {missing}")

    unconsumed = list(truth.expected)
    pairs: list[tuple[int, str]] = []
    leftovers: list[int] = []
    for i, finding in enumerate(predictions):
        pattern = finding.pattern
        if isinstance(pattern, str) and pattern in unconsumed:
            unconsumed.remove(pattern)
            pairs.append((i, pattern))
        else:
            leftovers.append(i)

    ambiguous, false_pos = [], []
    for i in leftovers:
        pattern = predictions[i].pattern
        if not isinstance(pattern, Unknown) and any(taxonomy.partially_overlaps(pattern, t) for t in unconsumed):
            ambiguous.append(i)
        else:
            false_pos.append(i)

    return MatchOutcome(
        case_id=truth.case_id,
        tp=len(pairs),
        fp=len(false_pos),
        fn=len(unconsumed),
        ambiguous=len(ambiguous),
        pairs=tuple(pairs),
        ambiguous_predictions=tuple(ambiguous),
        unmatched_predictions=tuple(false_pos),
        unmatched_truths=tuple(unconsumed),
    )


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    fp: int
    fn: int
    ambiguous: int = 0
    precision: Optional[Fraction] = field(default=None)
    recall: Optional[Fraction] = field(default=None)
    f1: Optional[Fraction] = field(default=None)


def compute_metrics(tp: int, fp: int, fn: int, ambiguous: int = 0) -> MetricsReport:
    if min(tp, fp, fn, ambiguous) < 0:
        raise ValueError("counts must be non-negative")
    precision = Fraction(tp, tp + fp) if tp + fp else None
    recall = Fraction(tp, tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(tp, fp, fn, ambiguous, precision, recall, f1)


def aggregate(outcomes: Iterable[MatchOutcome]) -> MetricsReport:
    outcomes = list(outcomes)
    ids = [o.case_id for o in outcomes]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate case ids in aggregation: {ids}")
    return compute_metrics(
        sum(o.tp for o in outcomes),
        sum(o.fp for o in outcomes),
        sum(o.fn for o in outcomes),
        sum(o.ambiguous for o in outcomes),
    )


@dataclass(frozen=True)
class ImageSummary:
    case_id: str
    recall: Optional[Fraction]
    met_half: bool


def per_image_summary(outcomes: Iterable[MatchOutcome]) -> list[ImageSummary]:
    rows = []
    for o in sorted(outcomes, key=lambda o: o.case_id):
        recall = Fraction(o.tp, o.tp + o.fn) if o.tp + o.fn else None
        rows.append(ImageSummary(o.case_id, recall, recall is not None and recall >= Fraction(1, 2)))
    return rows


# -- reports ---------------------------------------------------------------


def format_percent(value: Optional[Fraction]) -> str:
    """One decimal, exact half-even rounding on the rational value."""
    if value is None:
        return UNDEFINED
    tenths = round(value * 1000)
    return f"{tenths // 10}.{tenths % 10}%"


def parse_percent(text: str) -> Optional[Fraction]:
    text = text.strip()
    if text == UNDEFINED:
        return None
    return Fraction(text.rstrip("%")) / 100


def _row(system: str, m: MetricsReport) -> list[str]:
    return [system, str(m.tp), str(m.fp), str(m.fn), format_percent(m.precision),
            format_percent(m.recall), format_percent(m.f1)]


def emit_report(systems: Sequence[tuple[str, MetricsReport]],
                per_image: Sequence[tuple[str, Sequence[ImageSummary]]] = (),
                fmt: str = "table-text") -> str:
    """Render a comparative table (one row per system) and optional per-image recall.

    ``fmt`` is ``"table-text"`` (aligned columns) or ``"delimited-values"`` (CSV).
    """
    rows = [_row(name, m) for name, m in systems]
    image_rows = [
        [s.case_id, system, format_percent(s.recall), "yes" if s.met_half else "no"]
        for system, summaries in per_image
        for s in summaries
    ]
    image_header = ["case_id", "System", "Recall", ">=50%"]
    if fmt == "delimited-values":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
        if image_rows:
            writer.writerow([])
            writer.writerow(image_header)
            writer.writerows(image_rows)
        return buf.getvalue()
    if fmt != "table-text":
        raise ValueError(f"unknown report format {fmt!r}")
    out = _align([list(COLUMNS), *rows])
    if image_rows:
        out += "\n" + _align([image_header, *image_rows])
    return out


def _align(table: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = []
    for r in table:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> list[tuple[str, MetricsReport]]:
    """Read back the system table of a delimited-values report.

    Metrics are recomputed from the counts; a printed percentage that
    disagrees with its counts is rejected.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"report header must be {COLUMNS}")
    systems = []
    for row in rows[1:]:
        if not row:
            break
        name, tp, fp, fn, *printed = row
        metrics = compute_metrics(int(tp), int(fp), int(fn))
        if printed != _row(name, metrics)[4:]:
            raise ValueError(f"row {name!r}: printed metrics {printed} disagree with counts")
        systems.append((name, metrics))
    return systems
