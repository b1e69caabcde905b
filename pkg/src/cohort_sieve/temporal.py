"""Date expression extraction, normalization and window tests.

Recognized forms, all normalized against a reference day:

* ``YYYY-MM-DD``, ``MM/DD/YYYY``, ``June 15, 2017`` (day)
* ``June 2017``, ``6/2017`` (month)
* a bare four-digit year between 1900 and 2199 (year)
* ``last June`` -> latest month strictly before the reference month (month)
* ``<n> days|weeks|months|years ago`` with digits or number words (day)
* ``yesterday`` (day)

Two-digit years are never recognized.
"""
from __future__ import annotations

import calendar
import datetime as dt
import re
from dataclasses import dataclass
from typing import Sequence

from .corpus import Document, PatientRecord, patient_now

DAY, MONTH, YEAR = "day", "month", "year"

MONTHS = {name.lower(): i for i, name in enumerate(calendar.month_name) if name}
MONTHS.update({name.lower(): i for i, name in enumerate(calendar.month_abbr) if name})
MONTHS["sept"] = 9
NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6, "seven": 7,
    "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12, "a": 1, "an": 1,
}

_MONTH_RE = "|".join(sorted(MONTHS, key=len, reverse=True))
_YEAR_RE = r"(?:19|20|21)\d\d"
_NUM_RE = r"\d{1,3}|" + "|".join(sorted(NUMBER_WORDS, key=len, reverse=True))
_UNIT_AFTER_YEAR = re.compile(r"\s*(?:mg|mcg|g|ml|cc|units?|iu|u|ng|mmol|kcal|cal|%)\b", re.I)

# order matters: earlier patterns win on overlap
_PATTERNS = [
    ("iso", re.compile(rf"\b({_YEAR_RE})-(\d{{1,2}})-(\d{{1,2}})\b")),
    ("us", re.compile(rf"\b(\d{{1,2}})/(\d{{1,2}})/({_YEAR_RE})\b")),
    ("month_day_year", re.compile(rf"\b({_MONTH_RE})\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?,?\s+({_YEAR_RE})\b", re.I)),
    ("last_month", re.compile(rf"\blast\s+({_MONTH_RE})\b", re.I)),
    ("ago", re.compile(rf"\b({_NUM_RE})\s+(day|week|month|year)s?\s+ago\b", re.I)),
    ("yesterday", re.compile(r"\byesterday\b", re.I)),
    ("month_year", re.compile(rf"\b({_MONTH_RE})\.?,?\s+(?:of\s+)?({_YEAR_RE})\b", re.I)),
    ("num_month_year", re.compile(rf"\b(\d{{1,2}})/({_YEAR_RE})\b")),
    ("year", re.compile(rf"(?<![\d/.-])\b({_YEAR_RE})\b(?![/.-]\d)")),
]


@dataclass(frozen=True, order=True)
class PartialDate:
    """A calendar date known to day, month or year precision."""

    year: int
    month: int | None = None
    day: int | None = None

    def __post_init__(self):
        if self.day is not None and self.month is None:
            raise ValueError("day given without month")
        dt.date(self.year, self.month or 1, self.day or 1)

    @property
    def granularity(self) -> str:
        if self.day is not None:
            return DAY
        return MONTH if self.month is not None else YEAR

    def earliest(self) -> dt.date:
        return dt.date(self.year, self.month or 1, self.day or 1)

    def latest(self) -> dt.date:
        if self.day is not None:
            return dt.date(self.year, self.month, self.day)
        if self.month is not None:
            return dt.date(self.year, self.month, calendar.monthrange(self.year, self.month)[1])
        return dt.date(self.year, 12, 31)

    @classmethod
    def from_date(cls, d: dt.date) -> "PartialDate":
        return cls(d.year, d.month, d.day)

    def __str__(self):
        if self.day is not None:
            return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"
        if self.month is not None:
            return f"{self.year:04d}-{self.month:02d}"
        return f"{self.year:04d}"


@dataclass(frozen=True)
class TimexSpan:
    start: int
    end: int
    surface: str
    normalized: PartialDate

    @property
    def granularity(self) -> str:
        return self.normalized.granularity


@dataclass(frozen=True)
class TimeWindow:
    anchor: dt.date
    length_months: int

    def __post_init__(self):
        if self.length_months < 1:
            raise ValueError("window length must be at least one month")

    @property
    def start(self) -> dt.date:
        return subtract_months(self.anchor, self.length_months)


def subtract_months(d: dt.date, months: int) -> dt.date:
    """``d`` minus ``months`` calendar months, clamping the day of month."""
    total = d.year * 12 + (d.month - 1) - months
    year, month = divmod(total, 12)
    month += 1
    return dt.date(year, month, min(d.day, calendar.monthrange(year, month)[1]))


def _subtract(reference: dt.date, n: int, unit: str) -> dt.date:
    unit = unit.lower()
    if unit == "day":
        return reference - dt.timedelta(days=n)
    if unit == "week":
        return reference - dt.timedelta(weeks=n)
    if unit == "month":
        return subtract_months(reference, n)
    return subtract_months(reference, 12 * n)


def _normalize(kind: str, m: re.Match, reference: dt.date) -> PartialDate | None:
    g = m.groups()
    if kind == "iso":
        return PartialDate(int(g[0]), int(g[1]), int(g[2]))
    if kind == "us":
        return PartialDate(int(g[2]), int(g[0]), int(g[1]))
    if kind == "month_day_year":
        return PartialDate(int(g[2]), MONTHS[g[0].lower()], int(g[1]))
    if kind == "month_year":
        return PartialDate(int(g[1]), MONTHS[g[0].lower()])
    if kind == "num_month_year":
        return PartialDate(int(g[1]), int(g[0]))
    if kind == "year":
        return PartialDate(int(g[0]))
    if kind == "last_month":
        month = MONTHS[g[0].lower()]
        year = reference.year if month < reference.month else reference.year - 1
        return PartialDate(year, month)
    if kind == "ago":
        raw = g[0].lower()
        n = int(raw) if raw.isdigit() else NUMBER_WORDS[raw]
        return PartialDate.from_date(_subtract(reference, n, g[1]))
    if kind == "yesterday":
        return PartialDate.from_date(reference - dt.timedelta(days=1))
    raise AssertionError(kind)


def extract_timexes_text(text: str, reference: dt.date, offset: int = 0) -> list[TimexSpan]:
    """Timexes in ``text``; offsets are shifted by ``offset``."""
    taken: list[tuple[int, int]] = []
    found = []
    for kind, pattern in _PATTERNS:
        for m in pattern.finditer(text):
            a, b = m.span()
            if any(a < y and x < b for x, y in taken):
                continue
            if kind == "year" and _UNIT_AFTER_YEAR.match(text, b):
                continue
            try:
                value = _normalize(kind, m, reference)
            except ValueError:
                continue
            taken.append((a, b))
            found.append(TimexSpan(a + offset, b + offset, m.group(), value))
    found.sort(key=lambda t: t.start)
    return found


def extract_timexes(sentence, reference: dt.date, document: Document | None = None) -> list[TimexSpan]:
    """Timexes of a sentence.

    ``sentence`` is either plain text or a :class:`~cohort_sieve.corpus.Sentence`
    together with its ``document``; in the latter case offsets are document
    offsets.
    """
    if isinstance(sentence, str):
        return extract_timexes_text(sentence, reference)
    if document is None:
        raise ValueError("a Sentence needs its Document to resolve text")
    return extract_timexes_text(document.raw_text[sentence.start:sentence.end], reference, sentence.start)


def within_window(t, w: TimeWindow) -> bool:
    """Interval overlap of the timex value with ``[anchor - length, anchor]``."""
    value = t.normalized if isinstance(t, TimexSpan) else t
    if isinstance(value, dt.date):
        value = PartialDate.from_date(value)
    return value.latest() >= w.start and value.earliest() <= w.anchor


def recent_documents(record: PatientRecord, length_months: int) -> list[Document]:
    window = TimeWindow(patient_now(record), length_months)
    return [d for d in record.documents if window.start <= d.record_date <= window.anchor]


def document_in_window(doc: Document, window: TimeWindow) -> bool:
    return window.start <= doc.record_date <= window.anchor


def any_within(timexes: Sequence[TimexSpan], window: TimeWindow) -> bool:
    return any(within_window(t, window) for t in timexes)
