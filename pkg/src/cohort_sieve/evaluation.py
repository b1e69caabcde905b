"""Precision, recall and F1 per criterion and class, with micro and macro rows.

Arithmetic is exact (``fractions.Fraction``); floats appear only in the
rendered report.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

MET, NOT_MET = "met", "notmet"
CLASSES = (MET, NOT_MET)
ZERO = Fraction(0)


class ScoreError(ValueError):
    pass


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def support(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class ConfusionCounts:
    met: ClassCounts
    notmet: ClassCounts

    def of(self, cls: str) -> ClassCounts:
        return self.met if cls == MET else self.notmet


@dataclass(frozen=True)
class ClassMetrics:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    support: int
    zero_support: bool = False


@dataclass(frozen=True)
class Row:
    name: str
    met: ClassMetrics
    notmet: ClassMetrics
    overall_f1: Fraction

    def of(self, cls: str) -> ClassMetrics:
        return self.met if cls == MET else self.notmet


@dataclass(frozen=True)
class MetricsReport:
    criteria: tuple[Row, ...]
    micro: Row
    macro: Row
    counts: Mapping[str, ConfusionCounts]


def f1_score(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if p + r > 0 else ZERO


def class_metrics(c: ClassCounts) -> ClassMetrics:
    """Zero-support classes get zeros and a flag instead of undefined values."""
    p = Fraction(c.tp, c.tp + c.fp) if c.tp + c.fp else ZERO
    if c.support == 0:
        return ClassMetrics(p, ZERO, ZERO, 0, True)
    r = Fraction(c.tp, c.support)
    return ClassMetrics(p, r, f1_score(p, r), c.support)


def confusion(pairs: Iterable[tuple[bool, bool]]) -> ConfusionCounts:
    """Counts from ``(gold_met, predicted_met)`` pairs."""
    m = {MET: [0, 0, 0], NOT_MET: [0, 0, 0]}
    for gold, pred in pairs:
        g, p = (MET if gold else NOT_MET), (MET if pred else NOT_MET)
        if g == p:
            m[g][0] += 1
        else:
            m[p][1] += 1
            m[g][2] += 1
    return ConfusionCounts(ClassCounts(*m[MET]), ClassCounts(*m[NOT_MET]))


def _row(name: str, counts: ConfusionCounts) -> Row:
    met, notmet = class_metrics(counts.met), class_metrics(counts.notmet)
    return Row(name, met, notmet, (met.f1 + notmet.f1) / 2)


def _mean(values) -> Fraction:
    values = list(values)
    return sum(values, ZERO) / len(values) if values else ZERO


def _as_pairs(items) -> list[tuple[str, str, bool]]:
    out = []
    for item in items:
        if hasattr(item, "patient_id"):
            out.append((item.patient_id, item.criterion_id, bool(item.met)))
        else:
            p, c, m = item
            out.append((p, c, bool(m)))
    return out


def score(gold, predicted) -> MetricsReport:
    """Score predictions against gold labels.

    ``gold`` and ``predicted`` are iterables of ``(patient, criterion, met)``
    triples (or objects with those attributes). Every gold pair needs exactly
    one prediction; predictions for pairs without gold are ignored.
    """
    gold_map: dict[tuple[str, str], bool] = {}
    for p, c, m in _as_pairs(gold):
        if (p, c) in gold_map:
            raise ScoreError(f"duplicate gold label for {p}/{c}")
        gold_map[(p, c)] = m
    pred_map: dict[tuple[str, str], bool] = {}
    duplicates = set()
    for p, c, m in _as_pairs(predicted):
        if (p, c) in pred_map:
            duplicates.add((p, c))
        pred_map[(p, c)] = m
    duplicates &= set(gold_map)
    missing = sorted(set(gold_map) - set(pred_map))
    if missing or duplicates:
        parts = []
        if missing:
            parts.append("missing predictions: " + ", ".join(f"{p}/{c}" for p, c in missing))
        if duplicates:
            parts.append("duplicate predictions: " + ", ".join(f"{p}/{c}" for p, c in sorted(duplicates)))
        raise ScoreError("; ".join(parts))

    by_criterion: dict[str, list[tuple[bool, bool]]] = {}
    for (p, c), g in gold_map.items():
        by_criterion.setdefault(c, []).append((g, pred_map[(p, c)]))
    counts = {c: confusion(pairs) for c, pairs in sorted(by_criterion.items())}
    rows = tuple(_row(c, k) for c, k in counts.items())

    pooled = ConfusionCounts(sum((k.met for k in counts.values()), ClassCounts()),
                             sum((k.notmet for k in counts.values()), ClassCounts()))
    micro = _row("overall (micro)", pooled)

    def macro_class(cls):
        ms = [r.of(cls) for r in rows]
        return ClassMetrics(_mean(m.precision for m in ms), _mean(m.recall for m in ms),
                            _mean(m.f1 for m in ms), sum(m.support for m in ms),
                            any(m.zero_support for m in ms))

    macro = Row("overall (macro)", macro_class(MET), macro_class(NOT_MET), _mean(r.overall_f1 for r in rows))
    return MetricsReport(rows, micro, macro, counts)


ZERO_MARK = "*"


def _cells(m: ClassMetrics, with_support: bool) -> list[str]:
    sup = str(m.support) if with_support else "-"
    if m.zero_support and not with_support:
        # aggregate row: real averages, flagged because a zero-support class entered them
        return [sup] + [f"{float(v):.4f}{ZERO_MARK}" for v in (m.precision, m.recall, m.f1)]
    if m.zero_support:
        return [sup, f"{float(m.precision):.4f}{ZERO_MARK}", f"0.0000{ZERO_MARK}", f"0.0000{ZERO_MARK}"]
    return [sup, f"{float(m.precision):.4f}", f"{float(m.recall):.4f}", f"{float(m.f1):.4f}"]


def render_report(report: MetricsReport) -> str:
    """Fixed-width table: one row per criterion, then micro and macro rows."""
    header = ["criterion", "met_sup", "met_P", "met_R", "met_F1",
              "notmet_sup", "notmet_P", "notmet_R", "notmet_F1", "overall_F1"]
    body = []
    for row in report.criteria + (report.micro, report.macro):
        is_total = row is report.micro or row is report.macro
        flag = ZERO_MARK if (row.met.zero_support or row.notmet.zero_support) else ""
        body.append([row.name] + _cells(row.met, not is_total) + _cells(row.notmet, not is_total)
                    + [f"{float(row.overall_f1):.4f}{flag}"])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths)))
             for r in [header] + body]
    if any(ZERO_MARK in "".join(r) for r in body):
        lines.append(f"{ZERO_MARK} zero-support class: no gold examples, scores reported as 0")
    return "\n".join(line.rstrip() for line in lines) + "\n"


def percent_agreement(a, b) -> Fraction:
    """Share of the (patient, criterion) pairs labeled by both sets that agree."""
    ma = {(p, c): m for p, c, m in _as_pairs(a)}
    mb = {(p, c): m for p, c, m in _as_pairs(b)}
    common = set(ma) & set(mb)
    if not common:
        raise ScoreError("the two label sets share no (patient, criterion) pair")
    return Fraction(sum(ma[k] == mb[k] for k in common), len(common))


def read_labels(path) -> list[tuple[str, str, bool]]:
    """Gold or decision TSV rows as ``(patient, criterion, met)``; extra columns ignored."""
    rows = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3 or parts[2] not in CLASSES:
            raise ScoreError(f"{path}:{n}: expected patient<TAB>criterion<TAB>met|notmet")
        rows.append((parts[0], parts[1], parts[2] == MET))
    return rows


def format_labels(rows: Iterable[tuple[str, str, bool]]) -> str:
    return "".join(f"{p}\t{c}\t{MET if m else NOT_MET}\n" for p, c, m in rows)


def gold_by_patient(rows: Iterable[tuple[str, str, bool]]) -> dict[str, dict[str, bool]]:
    out: dict[str, dict[str, bool]] = {}
    for p, c, m in rows:
        out.setdefault(p, {})[c] = m
    return out
