"""Negation, uncertainty and family-history scoping of mentions.

Cue phrases are matched on lowercased tokens. A ``pre`` cue scopes forward
over at most ``window`` tokens, a ``post`` cue scopes backward. Scope stops at
terminator tokens. Pseudo cues (e.g. "no increase") hide the real cues they
overlap.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Sentence, Token, tokenize

CATEGORIES = ("negation", "uncertainty", "family", "pseudo")
DIRECTIONS = ("pre", "post")
DEFAULT_WINDOW = 6
TERMINATORS = frozenset({"but", "however", "although", "though", "except", "yet", ".", ";", "!", "?"})


@dataclass(frozen=True)
class ContextCue:
    phrase: tuple[str, ...]
    category: str
    direction: str
    window: int = DEFAULT_WINDOW
    neutralizes: str | None = None  # pseudo cues only; None hides every category

    def __post_init__(self):
        if not self.phrase:
            raise ValueError("cue phrase must not be empty")


@dataclass(frozen=True)
class MentionContext:
    negated: bool = False
    uncertain: bool = False
    family: bool = False
    triggering_cue: ContextCue | None = None

    @property
    def affirmed(self) -> bool:
        return not (self.negated or self.uncertain or self.family)


AFFIRMED = MentionContext()


def parse_cues(lines: Iterable[str], source: str = "<cues>") -> tuple[ContextCue, ...]:
    """Parse ``category<TAB>direction<TAB>window<TAB>phrase`` lines."""
    cues, seen = [], set()
    for n, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"{source}:{n}: expected 4 tab-separated fields")
        category, direction, window, phrase = (p.strip() for p in parts)
        neutralizes = None
        if category.startswith("pseudo:"):
            category, neutralizes = "pseudo", category.split(":", 1)[1]
        if category not in CATEGORIES or (neutralizes and neutralizes not in CATEGORIES[:3]):
            raise ValueError(f"{source}:{n}: unknown category {category!r}")
        if direction not in DIRECTIONS:
            raise ValueError(f"{source}:{n}: unknown direction {direction!r}")
        try:
            win = int(window)
        except ValueError:
            raise ValueError(f"{source}:{n}: window must be an integer") from None
        words = tuple(t.lower for t in tokenize(phrase))
        if not words:
            raise ValueError(f"{source}:{n}: empty phrase")
        if (category, words) in seen:
            raise ValueError(f"{source}:{n}: duplicate {category} cue {phrase!r}")
        seen.add((category, words))
        cues.append(ContextCue(words, category, direction, win, neutralizes))
    return tuple(cues)


def load_cues(path=None) -> tuple[ContextCue, ...]:
    """Load a cue lexicon file; ``None`` loads the bundled lexicon."""
    if path is None:
        return default_cues()
    path = Path(path)
    return parse_cues(path.read_text(encoding="utf-8").splitlines(), str(path))


@lru_cache(maxsize=1)
def default_cues() -> tuple[ContextCue, ...]:
    text = resources.files("cohort_sieve.data").joinpath("cues.tsv").read_text(encoding="utf-8")
    return parse_cues(text.splitlines(), "cues.tsv")


@dataclass(frozen=True)
class _Hit:
    cue: ContextCue
    start: int  # token index
    end: int  # exclusive token index


def _find_cues(words: Sequence[str], cues: Sequence[ContextCue]) -> list[_Hit]:
    hits = []
    for cue in cues:
        n = len(cue.phrase)
        for i in range(len(words) - n + 1):
            if tuple(words[i:i + n]) == cue.phrase:
                hits.append(_Hit(cue, i, i + n))
    pseudo = [h for h in hits if h.cue.category == "pseudo"]
    real = []
    for h in hits:
        if h.cue.category == "pseudo":
            continue
        blocked = any(
            p.start < h.end and h.start < p.end
            and (p.cue.neutralizes is None or p.cue.neutralizes == h.cue.category)
            for p in pseudo
        )
        if not blocked:
            real.append(h)
    return real


def classify_tokens(tokens: Sequence[Token], mention: tuple[int, int],
                    cues: Sequence[ContextCue]) -> MentionContext:
    """Context of token span ``mention = (first, last_exclusive)``."""
    m_start, m_end = mention
    if not (0 <= m_start < m_end <= len(tokens)):
        raise ValueError(f"mention {mention} lies outside the sentence ({len(tokens)} tokens)")
    words = [t.lower for t in tokens]
    best = None
    for hit in _find_cues(words, cues):
        if hit.start < m_end and m_start < hit.end:
            continue
        if hit.cue.direction == "pre" and hit.end <= m_start:
            distance = m_start - hit.end + 1
            between = words[hit.end:m_start]
        elif hit.cue.direction == "post" and hit.start >= m_end:
            distance = hit.start - m_end + 1
            between = words[m_end:hit.start]
        else:
            continue
        if distance > hit.cue.window or any(w in TERMINATORS for w in between):
            continue
        if best is None or distance < best[0]:
            best = (distance, hit.cue)
    if best is None:
        return AFFIRMED
    cue = best[1]
    return MentionContext(
        negated=cue.category == "negation",
        uncertain=cue.category == "uncertainty",
        family=cue.category == "family",
        triggering_cue=cue,
    )


def classify_context(sentence: Sentence, mention: tuple[int, int],
                     cues: Sequence[ContextCue]) -> MentionContext:
    """Classify a mention given as token indices into ``sentence.tokens``."""
    return classify_tokens(sentence.tokens, mention, cues)


def token_span(sentence: Sentence, start: int, end: int) -> tuple[int, int]:
    """Token index range covering character span ``[start, end)``."""
    idx = [i for i, t in enumerate(sentence.tokens) if t.start < end and start < t.end]
    if not idx:
        raise ValueError(f"span {start}-{end} covers no token of the sentence")
    return idx[0], idx[-1] + 1
