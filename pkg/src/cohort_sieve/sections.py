"""Section title mining and section segmentation."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Document, tokenize

# counted on the raw line, trailing colon included
MAX_TITLE_TOKENS = 7
UNKNOWN = None



@dataclass(frozen=True)
class SectionTitle:
    normalized_text: str
    document_frequency: float


@dataclass(frozen=True)
class Section:
    title: SectionTitle | None
    start: int
    end: int

    @property
    def name(self) -> str | None:
        return None if self.title is None else self.title.normalized_text


def normalize_title(line: str) -> str:
    text = line.strip().lower()
    text = text.rstrip(":").strip()
    return re.sub(r"\s+", " ", text)


def title_candidate(line: str) -> str | None:
    """Normalized title if ``line`` looks like a section header, else None.

    A header is at most seven tokens (colon included) and either ends with a colon or is
    written fully in uppercase letters (digits disqualify the uppercase form,
    which keeps lab table rows out).
    """
    stripped = line.strip()
    if not stripped or len(tokenize(stripped)) > MAX_TITLE_TOKENS:
        return None
    if stripped.endswith(":"):
        norm = normalize_title(stripped)
        return norm or None
    has_letters = any(c.isalpha() for c in stripped)
    if has_letters and stripped.upper() == stripped and not any(c.isdigit() for c in stripped):
        return normalize_title(stripped)
    return None


def _lines(text: str):
    """Yield ``(start, end, line)`` for every line of ``text``."""
    pos = 0
    for line in text.split("\n"):
        yield pos, pos + len(line), line
        pos += len(line) + 1


def mine_section_titles(corpus: Sequence[Document], min_doc_frequency: float = 0.01) -> list[SectionTitle]:
    """Titles whose document frequency strictly exceeds ``min_doc_frequency``.

    Output is sorted by descending frequency then text, so it does not depend
    on corpus order.
    """
    if not corpus:
        raise ValueError("cannot mine section titles from an empty corpus")
    if not 0 < min_doc_frequency < 1:
        raise ValueError("min_doc_frequency must lie in (0, 1)")
    df = Counter()
    for doc in corpus:
        seen = {c for _, _, line in _lines(doc.raw_text) if (c := title_candidate(line))}
        df.update(seen)
    n = len(corpus)
    titles = [SectionTitle(t, c / n) for t, c in df.items() if c / n > min_doc_frequency]
    titles.sort(key=lambda t: (-t.document_frequency, t.normalized_text))
    return titles


def split_into_sections(doc: Document, titles: Iterable[SectionTitle]) -> list[Section]:
    """Partition ``doc.raw_text`` at lines that carry a known title."""
    by_name = {t.normalized_text: t for t in titles}
    text = doc.raw_text
    sections = []
    current, start = UNKNOWN, 0
    for a, _, line in _lines(text):
        cand = title_candidate(line)
        if cand is None or cand not in by_name:
            continue
        if a > start:
            sections.append(Section(current, start, a))
        current, start = by_name[cand], a
    sections.append(Section(current, start, len(text)))
    return sections


def section_of(sections: Sequence[Section], offset: int) -> Section:
    for s in sections:
        if s.start <= offset < s.end:
            return s
    return sections[-1]


def sentence_sections(doc: Document, titles) -> list[str | None]:
    """Section name (or None) for every sentence of ``doc``."""
    secs = split_into_sections(doc, titles)
    return [section_of(secs, s.start).name for s in doc.sentences]


def save_titles(titles: Iterable[SectionTitle], path, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    lines += [f"{t.document_frequency:.6f}\t{t.normalized_text}" for t in titles]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_titles(path) -> list[SectionTitle]:
    titles = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            freq, name = line.split("\t", 1)
            titles.append(SectionTitle(name.strip(), float(freq)))
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: malformed title line") from exc
    return titles
