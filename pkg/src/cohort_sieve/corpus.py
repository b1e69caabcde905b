"""Patient note ingestion, sentence splitting and tokenization.

Patient files hold one or more records separated by a line of at least twenty
asterisks. Each record starts with a ``Record date: YYYY-MM-DD`` header.
All offsets are character offsets into ``Document.raw_text``.
"""
from __future__ import annotations

import datetime as dt
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

DELIMITER = re.compile(r"^\*{20,}[ \t]*$", re.MULTILINE)
HEADER = re.compile(r"^[ \t]*Record date:[ \t]*(\S+)[ \t]*$", re.MULTILINE)

DEFAULT_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "mg", "st", "vs", "pt", "approx", "hx", "dx",
        "etc", "e.g", "i.e", "jr", "sr", "prof", "inc", "fig", "mcg",
    }
)

# numbers with decimals, hyphenated words, single punctuation marks
_TOKEN = re.compile(r"\d+(?:\.\d+)+|\w+(?:-\w+)*|[^\w\s]")
_LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s")
_SHORT_LINE = 40


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int

    @property
    def lower(self) -> str:
        return self.text.lower()


@dataclass(frozen=True)
class Sentence:
    start: int
    end: int
    tokens: tuple[Token, ...] = ()

    def text(self, raw: str) -> str:
        return raw[self.start:self.end]


@dataclass(frozen=True)
class Document:
    doc_id: str
    patient_id: str
    record_date: dt.date
    raw_text: str
    sentences: tuple[Sentence, ...] = ()

    def sentence_text(self, i: int) -> str:
        s = self.sentences[i]
        return self.raw_text[s.start:s.end]


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    documents: tuple[Document, ...]
    gold_labels: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not self.documents:
            raise ValueError(f"patient {self.patient_id} has no documents")

    @property
    def text(self) -> str:
        """All documents joined, oldest first."""
        return "\n\n".join(d.raw_text for d in self.documents)

    def tokens(self) -> list[str]:
        """Lowercased tokens of the whole record."""
        return [t.lower for d in self.documents for s in d.sentences for t in s.tokens]


@dataclass(frozen=True)
class IngestError:
    file: str
    block: int
    reason: str

    def __str__(self):
        return f"INGEST-ERR {self.file} {self.block} {self.reason}"


def tokenize(text: str, offset: int = 0) -> list[Token]:
    """Split ``text`` into tokens; offsets are shifted by ``offset``."""
    return [Token(m.group(), m.start() + offset, m.end() + offset) for m in _TOKEN.finditer(text)]


def _is_header_line(line: str) -> bool:
    stripped = line.strip()
    if not stripped:
        return False
    n_tok = len(tokenize(stripped))
    if n_tok > 8:
        return False
    if stripped.endswith(":"):
        return True
    letters = [c for c in stripped if c.isalpha()]
    return bool(letters) and stripped.upper() == stripped


def _line_break_splits(prev_line: str, next_line: str) -> bool:
    if not prev_line.strip() or not next_line.strip():
        return True
    if _is_header_line(prev_line) or _LIST_MARKER.match(next_line):
        return True
    return len(prev_line.strip()) < _SHORT_LINE


def _sentence_end_ok(text: str, dot: int, abbreviations) -> bool:
    """Whether the punctuation at ``dot`` closes a sentence."""
    if text[dot] != ".":
        return True
    j = dot
    while j > 0 and not text[j - 1].isspace():
        j -= 1
    word = text[j:dot].lower()
    return word not in abbreviations


def split_sentences(text: str, abbreviations=DEFAULT_ABBREVIATIONS) -> list[tuple[int, int]]:
    """Return ``(start, end)`` spans of sentences in ``text``.

    Boundaries fall at terminal punctuation followed by whitespace and an
    uppercase letter (abbreviations excepted), at blank lines, after header
    lines, and at line breaks that end a short line or precede a list item.
    Spans are trimmed of surrounding whitespace and cover every
    non-whitespace character exactly once.
    """
    cuts = set()
    lines = text.split("\n")
    pos = 0
    for k, line in enumerate(lines[:-1]):
        pos += len(line)
        if _line_break_splits(line, lines[k + 1]):
            cuts.add(pos)
        pos += 1
    for m in re.finditer(r"[.!?]+(?=\s+[A-Z])", text):
        if _sentence_end_ok(text, m.start(), abbreviations):
            cuts.add(m.end())

    spans = []
    start = 0
    for cut in sorted(cuts) + [len(text)]:
        _append_trimmed(text, start, cut, spans)
        start = cut
    return spans


def _append_trimmed(text, start, end, spans):
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    if start < end:
        spans.append((start, end))


def build_sentences(text: str) -> tuple[Sentence, ...]:
    return tuple(
        Sentence(a, b, tuple(tokenize(text[a:b], offset=a))) for a, b in split_sentences(text)
    )


def make_document(doc_id: str, patient_id: str, record_date: dt.date, raw_text: str) -> Document:
    return Document(doc_id, patient_id, record_date, raw_text, build_sentences(raw_text))


def patient_now(record: PatientRecord) -> dt.date:
    """Date of the patient's most recent document."""
    return max(d.record_date for d in record.documents)


def parse_patient_text(patient_id: str, text: str, source: str = "<string>"):
    """Parse one patient file body into documents.

    Returns ``(documents, errors)``; documents come back sorted by date with
    file order kept for ties.
    """
    docs, errors = [], []
    blocks = DELIMITER.split(text)
    for idx, block in enumerate(blocks):
        if not block.strip():
            continue
        block = block.strip("\n")
        m = HEADER.search(block)
        first = block.strip().splitlines()[0]
        if m is None or m.group(0).strip() != first.strip():
            errors.append(IngestError(source, idx, "missing Record date header"))
            continue
        try:
            date = dt.date.fromisoformat(m.group(1))
        except ValueError:
            errors.append(IngestError(source, idx, f"unparseable date {m.group(1)!r}"))
            continue
        docs.append(make_document(f"{patient_id}.{idx}", patient_id, date, block))
    docs.sort(key=lambda d: d.record_date)
    return docs, errors


def read_patient_file(path, gold_labels=None):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return None, [IngestError(str(path), -1, "empty file")]
    docs, errors = parse_patient_text(path.stem, text, str(path))
    if not docs:
        errors.append(IngestError(str(path), -1, "no valid records"))
        return None, errors
    return PatientRecord(path.stem, tuple(docs), dict(gold_labels or {})), errors


def ingest_corpus(root, gold=None, errors: list | None = None) -> list[PatientRecord]:
    """Load every ``*.txt`` patient file under ``root``.

    ``gold`` maps patient id to ``{criterion: met}``. Rejected documents and
    patients are logged and appended to ``errors`` when given.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    gold = gold or {}
    records = []
    for path in sorted(root.glob("*.txt")):
        record, errs = read_patient_file(path, gold.get(path.stem))
        for e in errs:
            logger.warning(str(e))
        if errors is not None:
            errors.extend(errs)
        if record is not None:
            records.append(record)
    return records


def format_patient_file(documents: Iterable[tuple[dt.date, str]]) -> str:
    """Inverse of :func:`parse_patient_text` for generated corpora."""
    blocks = [f"Record date: {d.isoformat()}\n\n{body.strip()}\n" for d, body in documents]
    return ("\n" + "*" * 30 + "\n\n").join(blocks)
