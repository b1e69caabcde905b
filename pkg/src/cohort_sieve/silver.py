"""Silver-standard labels from high-precision seed rules."""
from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .context import ContextCue
from .corpus import PatientRecord, patient_now
from .rules import NEGATIVE, POSITIVE, RuleEngine, RuleMatch, scan_patient
from .temporal import PartialDate, TimeWindow, within_window


class ConflictPolicy(str, enum.Enum):
    DROP = "drop"
    POSITIVE_WINS = "positive_wins"
    NEGATIVE_WINS = "negative_wins"


@dataclass(frozen=True)
class SilverLabel:
    patient_id: str
    criterion_id: str
    met: bool
    evidence: tuple = field(default=())
    source: str = "silver"

    def __post_init__(self):
        if self.source == "silver" and not self.evidence:
            raise ValueError("silver labels need at least one evidence item")
        if self.source == "gold" and self.evidence:
            raise ValueError("gold labels carry no evidence")


def _overlaps(a: RuleMatch, b: RuleMatch) -> bool:
    return (a.doc_id == b.doc_id and a.sentence_index == b.sentence_index
            and a.start < b.end and b.start < a.end)


def resolve_matches(matches: Sequence[RuleMatch]) -> tuple[list[RuleMatch], list[RuleMatch]]:
    """Split matches by polarity, dropping positives that overlap a negative.

    Negative rules are the more specific ones ("etoh: social" against
    "etoh"), so they shadow positive matches on the same text.
    """
    negatives = [m for m in matches if m.polarity == NEGATIVE]
    positives = [m for m in matches if m.polarity == POSITIVE
                 and not any(_overlaps(m, n) for n in negatives)]
    return positives, negatives


def label_patient(matches: Sequence[RuleMatch], policy: ConflictPolicy = ConflictPolicy.DROP):
    """``(met, evidence)`` for one patient, or ``None`` when unlabeled or dropped."""
    positives, negatives = resolve_matches(matches)
    if positives and not negatives:
        return True, positives
    if negatives and not positives:
        return False, negatives
    if not positives:
        return None
    policy = ConflictPolicy(policy)
    if policy is ConflictPolicy.POSITIVE_WINS:
        return True, positives
    if policy is ConflictPolicy.NEGATIVE_WINS:
        return False, negatives
    return None


def build_silver(engine: RuleEngine, corpus: Iterable[PatientRecord], cues: Sequence[ContextCue] = (),
                 policy: ConflictPolicy = ConflictPolicy.DROP, criterion: str | None = None) -> list[SilverLabel]:
    """Label patients of an unlabeled corpus with the engine's seed rules.

    Output is sorted by patient id.
    """
    criterion = criterion or engine.criterion or "?"
    labels = []
    for record in sorted(corpus, key=lambda r: r.patient_id):
        outcome = label_patient(scan_patient(engine, record, cues), policy)
        if outcome is not None:
            met, evidence = outcome
            labels.append(SilverLabel(record.patient_id, criterion, met, tuple(evidence)))
    return labels


@dataclass(frozen=True)
class CodeEvidence:
    """A structured diagnosis code, used as evidence for code-based silver labels."""

    patient_id: str
    code: str
    date: dt.date


def load_codes(path) -> dict[str, list[CodeEvidence]]:
    codes: dict[str, list[CodeEvidence]] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            patient, code, date = line.split("\t")
            item = CodeEvidence(patient, code.strip(), dt.date.fromisoformat(date.strip()))
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: malformed code line") from exc
        codes.setdefault(patient, []).append(item)
    return codes


def code_matches(code: str, prefix: str) -> bool:
    """``250.1`` matches ``250.1`` and its children ``250.10`` ... ``250.13``."""
    return code == prefix or code.startswith(prefix)


def build_code_silver(corpus: Iterable[PatientRecord], codes: Mapping[str, Sequence[CodeEvidence]],
                      criterion: str, prefix: str = "250.1", months: int = 12) -> list[SilverLabel]:
    """Labels from diagnosis codes dated within ``months`` of the patient's last note.

    Every patient with a code list gets a label: met when a matching code
    falls in the window, otherwise not met with the code list as evidence.
    """
    labels = []
    for record in sorted(corpus, key=lambda r: r.patient_id):
        items = codes.get(record.patient_id)
        if not items:
            continue
        window = TimeWindow(patient_now(record), months)
        hits = tuple(c for c in items if code_matches(c.code, prefix)
                     and within_window(PartialDate.from_date(c.date), window))
        labels.append(SilverLabel(record.patient_id, criterion, bool(hits), hits or tuple(items)))
    return labels


def merge_with_gold(silver: Sequence[SilverLabel], gold: Iterable[PatientRecord],
                    criterion: str) -> list[tuple[str, bool, str]]:
    """``(patient_id, met, source)`` rows; gold wins on id collisions."""
    rows: dict[str, tuple[str, bool, str]] = {}
    for s in silver:
        if s.criterion_id == criterion:
            rows[s.patient_id] = (s.patient_id, s.met, "silver")
    for record in gold:
        if criterion in record.gold_labels:
            rows[record.patient_id] = (record.patient_id, bool(record.gold_labels[criterion]), "gold")
    return [rows[k] for k in sorted(rows)]


def save_silver(labels: Iterable[SilverLabel], path, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    for s in labels:
        lines.append(f"{s.patient_id}\t{s.criterion_id}\t{'met' if s.met else 'notmet'}\t{len(s.evidence)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_silver_rows(path) -> list[tuple[str, str, bool, int]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        patient, criterion, label, n = line.split("\t")
        rows.append((patient, criterion, label == "met", int(n)))
    return rows
