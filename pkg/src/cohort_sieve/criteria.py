"""Per-criterion evaluators.

Every evaluator follows the same estimator-like surface: ``fit(records, y)``
(a no-op for the knowledge-driven ones), ``decide(record) -> Decision`` and
``predict(records) -> bool array``.
"""
from __future__ import annotations

import datetime as dt
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .context import ContextCue, classify_tokens
from .corpus import Document, PatientRecord, patient_now, tokenize
from .rules import RuleEngine, scan_patient, weighted_decision
from .sections import SectionTitle, sentence_sections
from .temporal import TimeWindow, any_within, document_in_window, extract_timexes, extract_timexes_text


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TermEntry:
    surface: str
    concept_id: str | None = None
    excluded: bool = False

    def __post_init__(self):
        if not self.surface.strip():
            raise ValueError("term surface must not be empty")


@dataclass(frozen=True)
class Evidence:
    doc_id: str
    start: int
    end: int
    text: str
    kind: str = "term"


@dataclass(frozen=True)
class LabObservation:
    analyte: str
    value: float
    unit: str
    date: dt.date
    doc_id: str
    start: int
    end: int

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"invalid lab value {self.value}")


@dataclass(frozen=True)
class Decision:
    patient_id: str
    criterion_id: str
    met: bool
    score: float | None = None
    evidence: tuple = field(default=())


# ------------------------------------------------------------------ terms

def parse_terms(lines: Iterable[str], source: str = "<terms>") -> list[TermEntry]:
    entries = []
    for n, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) == 1:
            parts += ["-", "include"]
        if len(parts) != 3 or parts[2] not in ("include", "exclude"):
            raise ConfigError(f"{source}:{n}: expected surface<TAB>concept<TAB>include|exclude")
        surface, concept, mode = parts
        entries.append(TermEntry(surface.strip(), None if concept in ("", "-") else concept,
                                 mode == "exclude"))
    return entries


def load_terms(path) -> list[TermEntry]:
    path = Path(path)
    return parse_terms(path.read_text(encoding="utf-8").splitlines(), str(path))


_END = "\x00"


class TermMatcher:
    """Token-trie dictionary matcher with misspelling variants.

    A text token matches a term word when equal to it or when listed as one
    of its variants. Matches overlapping an occurrence of an excluded entry
    are dropped.
    """

    def __init__(self, entries: Sequence[TermEntry], variants: Mapping[str, Iterable[str]] | None = None):
        self.entries = tuple(entries)
        self._trie: dict = {}
        words = set()
        for entry in self.entries:
            toks = [t.lower for t in tokenize(entry.surface)]
            words.update(toks)
            node = self._trie
            for w in toks:
                node = node.setdefault(w, {})
            node.setdefault(_END, []).append(entry)
        self._canonical: dict[str, set[str]] = {}
        for word, vs in (variants or {}).items():
            if word not in words:
                continue
            for v in vs:
                self._canonical.setdefault(v, set()).add(word)

    def _forms(self, word: str) -> set[str]:
        return {word} | self._canonical.get(word, set())

    def occurrences(self, words: Sequence[str]):
        """Every ``(entry, start, end)`` occurrence, excluded entries included."""
        out = []
        for s in range(len(words)):
            frontier = [self._trie]
            for e in range(s, len(words)):
                nxt = []
                for node in frontier:
                    for form in self._forms(words[e]):
                        child = node.get(form)
                        if child is not None:
                            nxt.append(child)
                if not nxt:
                    break
                for node in nxt:
                    for entry in node.get(_END, ()):
                        out.append((entry, s, e + 1))
                frontier = nxt
        return out

    def find(self, tokens) -> list[tuple[TermEntry, int, int]]:
        """Included matches not overlapping an excluded one, longest first per start."""
        words = [t.lower if hasattr(t, "lower") and not isinstance(t, str) else t.lower() for t in tokens]
        occ = self.occurrences(words)
        blocked = [(s, e) for entry, s, e in occ if entry.excluded]
        kept = {(s, e): entry for entry, s, e in occ
                if not entry.excluded and not any(s < be and bs < e for bs, be in blocked)}
        return [(kept[k], k[0], k[1]) for k in sorted(kept, key=lambda k: (k[0], -k[1]))]


def _section_filter(doc: Document, titles, allow, deny):
    if not allow and not deny:
        return [True] * len(doc.sentences)
    names = sentence_sections(doc, titles)
    keep = []
    for name in names:
        ok = True
        if allow:
            ok = name in allow
        if deny and name in deny:
            ok = False
        keep.append(ok)
    return keep


def check_sections(names: Iterable[str] | None, titles: Sequence[SectionTitle]) -> None:
    known = {t.normalized_text for t in titles}
    unknown = sorted(set(names or ()) - known)
    if unknown:
        raise ConfigError(f"unknown section name(s): {', '.join(unknown)}")


def find_terms(record: PatientRecord, matcher: TermMatcher, cues: Sequence[ContextCue] = (),
               titles: Sequence[SectionTitle] = (), sections=None, deny_sections=None,
               window_months: int | None = None, veto_words=None) -> list[Evidence]:
    """Affirmed term matches that pass section, time-window and veto filters.

    With a window, a match counts when its document is recent enough or its
    sentence holds a date inside the window.
    """
    window = TimeWindow(patient_now(record), window_months) if window_months else None
    veto = {w.lower() for w in veto_words or ()}
    found = []
    for doc in record.documents:
        section_ok = _section_filter(doc, titles, sections, deny_sections)
        doc_recent = window is None or document_in_window(doc, window)
        for si, sent in enumerate(doc.sentences):
            if not section_ok[si]:
                continue
            matches = matcher.find(sent.tokens)
            if not matches:
                continue
            if veto and any(t.lower in veto for t in sent.tokens):
                continue
            if not doc_recent:
                timexes = extract_timexes(sent, doc.record_date, doc)
                if not any_within(timexes, window):
                    continue
            for entry, s, e in matches:
                if cues and not classify_tokens(sent.tokens, (s, e), cues).affirmed:
                    continue
                a, b = sent.tokens[s].start, sent.tokens[e - 1].end
                found.append(Evidence(doc.doc_id, a, b, doc.raw_text[a:b], entry.concept_id or entry.surface))
    return found


def eval_terminology(record: PatientRecord, matcher: TermMatcher, cues: Sequence[ContextCue] = (),
                     titles: Sequence[SectionTitle] = (), sections=None, window_months=None,
                     criterion_id: str = "TERMS", **filters) -> Decision:
    """Met as soon as one term survives every filter."""
    ev = find_terms(record, matcher, cues, titles, sections, window_months=window_months, **filters)
    return Decision(record.patient_id, criterion_id, bool(ev), float(len(ev)), tuple(ev))


# ------------------------------------------------------------------ labs

_VALUE = r"(?P<value>\d+(?:\.\d+)?)"
_UNIT = r"(?P<unit>mg/dl|mg/l|umol/l|µmol/l|mmol/mol|mmol/l|%)?"


@dataclass(frozen=True)
class AnalytePattern:
    analyte: str
    names: tuple[str, ...]
    excludes: tuple[str, ...] = ()

    def compile(self) -> re.Pattern:
        names = "|".join(re.escape(n) for n in sorted(self.names, key=len, reverse=True))
        excl = ""
        if self.excludes:
            excl = r"(?!\s*(?:" + "|".join(re.escape(x) for x in self.excludes) + r"))"
        return re.compile(
            rf"(?<![\w/])(?:{names})(?![\w]){excl}"
            r"(?:\s*\([^)]{0,20}\))?"
            r"(?:\s*(?:level|value|result|was|is|of|now))*"
            r"\s*[:=]?\s*(?:~|approximately\s+)?"
            rf"{_VALUE}(?![\d/])\s*{_UNIT}",
            re.IGNORECASE,
        )


def parse_analytes(lines: Iterable[str], source: str = "<analytes>") -> dict[str, AnalytePattern]:
    """Lines ``analyte<TAB>name|exclude<TAB>text``."""
    names: dict[str, list[str]] = {}
    excludes: dict[str, list[str]] = {}
    for n, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3 or parts[1] not in ("name", "exclude"):
            raise ConfigError(f"{source}:{n}: expected analyte<TAB>name|exclude<TAB>text")
        target = names if parts[1] == "name" else excludes
        target.setdefault(parts[0].strip().lower(), []).append(parts[2].strip().lower())
    return {a: AnalytePattern(a, tuple(ns), tuple(excludes.get(a, ()))) for a, ns in names.items()}


def load_analytes(path) -> dict[str, AnalytePattern]:
    path = Path(path)
    return parse_analytes(path.read_text(encoding="utf-8").splitlines(), str(path))


def extract_lab_values(doc: Document, patterns: Iterable[AnalytePattern]) -> list[LabObservation]:
    """One observation per value; dated by the sentence's first date or the note date."""
    out = []
    for pat in patterns:
        rx = pat.compile()
        for sent in doc.sentences:
            text = doc.raw_text[sent.start:sent.end]
            hits = list(rx.finditer(text))
            if not hits:
                continue
            timexes = extract_timexes_text(text, doc.record_date)
            date = timexes[0].normalized.earliest() if timexes else doc.record_date
            for m in hits:
                unit = m.group("unit") or ""
                out.append(LabObservation(pat.analyte, float(m.group("value")), unit, date, doc.doc_id,
                                          sent.start + m.start(), sent.start + m.end()))
    return out


def eval_lab(record: PatientRecord, pattern: AnalytePattern, greater_than: float | None = None,
             in_range: tuple[float, float] | None = None, criterion_id: str = "LAB") -> Decision:
    """Met when any value is strictly above ``greater_than`` or inside ``in_range`` (inclusive)."""
    if (greater_than is None) == (in_range is None):
        raise ConfigError("give exactly one of greater_than or in_range")
    hits = []
    for doc in record.documents:
        for obs in extract_lab_values(doc, [pattern]):
            if greater_than is not None and obs.value > greater_than:
                hits.append(obs)
            elif in_range is not None and in_range[0] <= obs.value <= in_range[1]:
                hits.append(obs)
    return Decision(record.patient_id, criterion_id, bool(hits), float(len(hits)), tuple(hits))


# ------------------------------------------------------------------ evaluators

class CriterionEvaluator(BaseEstimator):
    """Shared estimator surface; subclasses implement :meth:`decide`."""

    criterion_id = "CRITERION"

    def fit(self, records=None, y=None):
        return self

    def decide(self, record: PatientRecord) -> Decision:
        raise NotImplementedError

    def predict(self, records: Sequence[PatientRecord]) -> np.ndarray:
        return np.array([self.decide(r).met for r in records], dtype=bool)


class TerminologyCriterion(CriterionEvaluator):
    def __init__(self, criterion_id="TERMS", terms=(), variants=None, cues=(), titles=(),
                 sections=None, deny_sections=None, window_months=None, veto_words=None):
        self.criterion_id = criterion_id
        self.terms = terms
        self.variants = variants
        self.cues = cues
        self.titles = titles
        self.sections = sections
        self.deny_sections = deny_sections
        self.window_months = window_months
        self.veto_words = veto_words

    def _matcher(self):
        if getattr(self, "_cached", None) is None or self._cached[0] is not self.terms:
            check_sections(self.sections, self.titles)
            check_sections(self.deny_sections, self.titles)
            self._cached = (self.terms, TermMatcher(self.terms, self.variants))
        return self._cached[1]

    def decide(self, record):
        ev = find_terms(record, self._matcher(), self.cues, self.titles, self.sections,
                        self.deny_sections, self.window_months, self.veto_words)
        return Decision(record.patient_id, self.criterion_id, bool(ev), float(len(ev)), tuple(ev))


class LabCriterion(CriterionEvaluator):
    def __init__(self, criterion_id="LAB", pattern=None, greater_than=None, in_range=None):
        self.criterion_id = criterion_id
        self.pattern = pattern
        self.greater_than = greater_than
        self.in_range = in_range

    def decide(self, record):
        return eval_lab(record, self.pattern, self.greater_than, self.in_range, self.criterion_id)


class WeightedRuleCriterion(CriterionEvaluator):
    def __init__(self, criterion_id="RULES", engine: RuleEngine | None = None, cues=(),
                 default_met=True, threshold=0.0):
        self.criterion_id = criterion_id
        self.engine = engine
        self.cues = cues
        self.default_met = default_met
        self.threshold = threshold

    def decide(self, record):
        matches = scan_patient(self.engine, record, self.cues)
        met, score = weighted_decision(matches, self.default_met, self.threshold)
        return Decision(record.patient_id, self.criterion_id, met, score, tuple(matches))


@dataclass
class CadConfig:
    med_terms: Sequence[TermEntry]
    mi_terms: Sequence[TermEntry]
    angina_terms: Sequence[TermEntry]
    ischemia_terms: Sequence[TermEntry]
    organ_veto: Sequence[str] = ()
    med_sections: Sequence[str] | None = None
    neuro_sections: Sequence[str] | None = None
    angina_window_months: int = 6
    variants: Mapping[str, Iterable[str]] | None = None


def cad_subcriteria(record: PatientRecord, cfg: CadConfig, cues=(), titles=()) -> dict[str, list[Evidence]]:
    """Evidence for each of the four ADVANCED-CAD sub-criteria."""
    meds = find_terms(record, TermMatcher(cfg.med_terms, cfg.variants), cues, titles, cfg.med_sections)
    distinct = {}
    for ev in meds:
        distinct.setdefault(ev.kind.lower(), ev)
    mi = find_terms(record, TermMatcher(cfg.mi_terms, cfg.variants), cues, titles,
                    deny_sections=cfg.neuro_sections, veto_words=cfg.organ_veto)
    window = TimeWindow(patient_now(record), cfg.angina_window_months)
    angina = []
    docs = {d.doc_id: d for d in record.documents}
    for ev in find_terms(record, TermMatcher(cfg.angina_terms, cfg.variants), cues, titles):
        doc = docs[ev.doc_id]
        sent = next(s for s in doc.sentences if s.start <= ev.start < s.end)
        timexes = extract_timexes(sent, doc.record_date, doc)
        if not timexes or any_within(timexes, window):
            angina.append(ev)
    ischemia = find_terms(record, TermMatcher(cfg.ischemia_terms, cfg.variants), cues, titles)
    return {
        "medications": list(distinct.values()) if len(distinct) >= 2 else [],
        "mi_history": mi,
        "current_angina": angina,
        "ischemia": ischemia,
    }


def eval_advanced_cad(record: PatientRecord, cfg: CadConfig, cues=(), titles=(),
                      criterion_id: str = "ADVANCED-CAD") -> Decision:
    subs = cad_subcriteria(record, cfg, cues, titles)
    count = sum(1 for ev in subs.values() if ev)
    evidence = tuple(e for ev in subs.values() for e in ev)
    return Decision(record.patient_id, criterion_id, count >= 2, float(count), evidence)


class AdvancedCadCriterion(CriterionEvaluator):
    def __init__(self, criterion_id="ADVANCED-CAD", config: CadConfig | None = None, cues=(), titles=()):
        self.criterion_id = criterion_id
        self.config = config
        self.cues = cues
        self.titles = titles

    def decide(self, record):
        return eval_advanced_cad(record, self.config, self.cues, self.titles, self.criterion_id)


class WeakCriterion(CriterionEvaluator):
    """Decision from a trained text model over the whole patient record.

    Forest-like models (without a ``threshold`` attribute) vote; other
    models are met when the positive probability exceeds ``threshold``.
    """

    def __init__(self, criterion_id="WEAK", model=None, threshold=0.5):
        self.criterion_id = criterion_id
        self.model = model
        self.threshold = threshold

    def fit(self, records, y):
        self.model.fit([r.tokens() for r in records], np.asarray(y, dtype=int))
        return self

    def decide(self, record):
        if self.model is None or not hasattr(self.model, "classes_"):
            raise ValueError(f"{self.criterion_id}: model is not trained")
        from .learn.text import positive_proba

        tokens = [record.tokens()]
        proba = float(positive_proba(self.model, tokens)[0])
        if hasattr(self.model, "forest_") or hasattr(self.model, "trees_"):
            met = bool(self.model.predict(tokens)[0] == 1)
        else:
            met = proba > self.threshold
        return Decision(record.patient_id, self.criterion_id, met, proba, ())


def eval_weak(record: PatientRecord, model, threshold: float = 0.5, criterion_id: str = "WEAK") -> Decision:
    return WeakCriterion(criterion_id, model, threshold).decide(record)


@dataclass(frozen=True)
class CriterionError:
    criterion_id: str
    message: str


def evaluate_all(record: PatientRecord, evaluators: Sequence[CriterionEvaluator | CriterionError]):
    """One decision per evaluator; failures are reported, not raised.

    ``evaluators`` may hold :class:`CriterionError` placeholders for specs
    that failed to load. Returns ``(decisions, errors)``.
    """
    decisions, errors = [], []
    for ev in evaluators:
        if isinstance(ev, CriterionError):
            errors.append(ev)
            continue
        try:
            decisions.append(ev.decide(record))
        except Exception as exc:  # isolate one criterion's failure from the others
            errors.append(CriterionError(ev.criterion_id, f"{record.patient_id}: {exc}"))
    return decisions, errors


def write_decisions(decisions: Iterable[Decision], path, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    for d in decisions:
        score = "-" if d.score is None else f"{d.score:.6f}"
        lines.append(f"{d.patient_id}\t{d.criterion_id}\t{'met' if d.met else 'notmet'}\t{score}\t{len(d.evidence)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_decisions(path) -> list[tuple[str, str, bool]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        patient, criterion, label, *_ = line.split("\t")
        rows.append((patient, criterion, label == "met"))
    return rows
