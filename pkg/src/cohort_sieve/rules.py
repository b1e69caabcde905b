"""Polarity-tagged trigger rules over tokenized patient text.

Pattern language (case-insensitive, token aligned):

``word``            a literal token; literal text is tokenized like note text
``(a|b c)``         alternation of literal token sequences
``{SET}``           any member of a named set
``*``               up to five arbitrary tokens
``.{m,n}``          between ``m`` and ``n`` characters of any text between the
                    neighbouring tokens; ``.*`` leaves the upper bound open

A pattern must start and end with a literal, alternation or set, and gaps
and wildcards may not touch each other.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .context import ContextCue, classify_tokens
from .corpus import PatientRecord, tokenize

WILDCARD_MAX_TOKENS = 5
POSITIVE, NEGATIVE = "positive", "negative"


class RuleCompileError(ValueError):
    pass


@dataclass(frozen=True)
class NamedSet:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"named set {self.name} is empty")


@dataclass(frozen=True)
class Literal:
    word: str


@dataclass(frozen=True)
class Alternation:
    options: tuple[tuple[str, ...], ...]
    set_name: str | None = None


@dataclass(frozen=True)
class Wildcard:
    max_tokens: int = WILDCARD_MAX_TOKENS


@dataclass(frozen=True)
class Gap:
    min_chars: int
    max_chars: float


@dataclass(frozen=True)
class TriggerRule:
    id: str
    polarity: str
    pattern: str
    elements: tuple
    weight: float = 1.0
    negation_sensitive: bool = True

    @property
    def placeholder_counts(self) -> tuple[int, ...]:
        return tuple(len(e.options) for e in self.elements
                     if isinstance(e, Alternation) and e.set_name)

    @property
    def n_expansions(self) -> int:
        return math.prod(len(e.options) for e in self.elements if isinstance(e, Alternation))

    def first_words(self) -> set[str]:
        head = self.elements[0]
        if isinstance(head, Literal):
            return {head.word}
        return {opt[0] for opt in head.options}


@dataclass(frozen=True)
class RuleMatch:
    rule_id: str
    polarity: str
    weight: float
    doc_id: str
    sentence_index: int
    start: int  # character offsets into the document
    end: int
    matched_text: str
    token_start: int = 0
    token_end: int = 0

    @property
    def span(self) -> tuple[int, int]:
        return self.start, self.end


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.lower for t in tokenize(text))


_SPECIAL = re.compile(
    r"\((?P<alt>[^()]*)\)"
    r"|\.\{(?P<gmin>\d+),(?P<gmax>\d+)\}"
    r"|(?P<gany>\.\*)"
    r"|\{(?P<set>[A-Za-z_][A-Za-z0-9_]*)\}"
    r"|(?<!\S)(?P<wild>\*)(?!\S)"
)


def parse_pattern(pattern: str, sets: Mapping[str, NamedSet]) -> tuple:
    elements: list = []
    pos = 0
    for m in _SPECIAL.finditer(pattern):
        elements += [Literal(w) for w in _words(pattern[pos:m.start()])]
        pos = m.end()
        if m.group("alt") is not None:
            options = tuple(_words(o) for o in m.group("alt").split("|"))
            if any(not o for o in options):
                raise RuleCompileError(f"empty alternative in {pattern!r}")
            elements.append(Alternation(options))
        elif m.group("gmin") is not None:
            lo, hi = int(m.group("gmin")), int(m.group("gmax"))
            if lo > hi:
                raise RuleCompileError(f"gap bounds reversed in {pattern!r}")
            elements.append(Gap(lo, hi))
        elif m.group("gany") is not None:
            elements.append(Gap(0, math.inf))
        elif m.group("set") is not None:
            name = m.group("set")
            if name not in sets:
                raise RuleCompileError(f"unknown set {{{name}}} in {pattern!r}")
            options = tuple(dict.fromkeys(_words(mem) for mem in sets[name].members))
            elements.append(Alternation(options, name))
        else:
            elements.append(Wildcard())
    elements += [Literal(w) for w in _words(pattern[pos:])]
    if not elements:
        raise RuleCompileError("empty pattern")
    consuming = (Literal, Alternation)
    if not isinstance(elements[0], consuming) or not isinstance(elements[-1], consuming):
        raise RuleCompileError(f"pattern must start and end with a token: {pattern!r}")
    for a, b in zip(elements, elements[1:]):
        if not isinstance(a, consuming) and not isinstance(b, consuming):
            raise RuleCompileError(f"adjacent gap/wildcard in {pattern!r}")
    return tuple(elements)


def _match_from(elements, i, j, words, starts, ends, out):
    """Collect every exclusive end token index where ``elements[i:]`` matches at ``j``."""
    if i == len(elements):
        out.add(j)
        return
    el = elements[i]
    n = len(words)
    if isinstance(el, Literal):
        if j < n and words[j] == el.word:
            _match_from(elements, i + 1, j + 1, words, starts, ends, out)
    elif isinstance(el, Alternation):
        for opt in el.options:
            k = j + len(opt)
            if k <= n and tuple(words[j:k]) == opt:
                _match_from(elements, i + 1, k, words, starts, ends, out)
    elif isinstance(el, Wildcard):
        for k in range(j, min(n, j + el.max_tokens) + 1):
            _match_from(elements, i + 1, k, words, starts, ends, out)
    else:
        prev_end = ends[j - 1]
        for k in range(j, n):
            gap = starts[k] - prev_end
            if gap > el.max_chars:
                break
            if gap >= el.min_chars:
                _match_from(elements, i + 1, k, words, starts, ends, out)


def match_elements(elements, start, words, starts, ends) -> set[int]:
    out: set[int] = set()
    _match_from(elements, 0, start, words, starts, ends, out)
    return out


class RuleEngine:
    """Compiled rule set with a first-token index."""

    def __init__(self, rules: Sequence[TriggerRule], criterion: str | None = None):
        ids = [r.id for r in rules]
        if len(set(ids)) != len(ids):
            raise RuleCompileError("duplicate rule ids")
        self.rules = tuple(rules)
        self.criterion = criterion
        self._index: dict[str, list[int]] = {}
        for k, rule in enumerate(self.rules):
            for w in rule.first_words():
                self._index.setdefault(w, []).append(k)

    def __len__(self):
        return len(self.rules)

    def rule(self, rule_id: str) -> TriggerRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def match_spans(self, tokens) -> set[tuple[str, int, int]]:
        """All ``(rule_id, first_token, end_token_exclusive)`` matches in a sentence."""
        words = [t.lower for t in tokens]
        starts = [t.start for t in tokens]
        ends = [t.end for t in tokens]
        found = set()
        for j, w in enumerate(words):
            for k in self._index.get(w, ()):
                rule = self.rules[k]
                for e in match_elements(rule.elements, j, words, starts, ends):
                    found.add((rule.id, j, e))
        return found

    def scan_sentence(self, tokens, cues: Sequence[ContextCue] = ()) -> list[tuple[TriggerRule, int, int]]:
        """Shortest match per rule and start token, after context filtering."""
        best: dict[tuple[str, int], int] = {}
        for rule_id, s, e in self.match_spans(tokens):
            key = (rule_id, s)
            if key not in best or e < best[key]:
                best[key] = e
        by_id = {r.id: r for r in self.rules}
        kept = []
        for (rule_id, s), e in sorted(best.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            rule = by_id[rule_id]
            if rule.negation_sensitive and cues and not classify_tokens(tokens, (s, e), cues).affirmed:
                continue
            kept.append((rule, s, e))
        return kept


def scan_document(engine: RuleEngine, doc, cues: Sequence[ContextCue] = ()) -> list[RuleMatch]:
    matches = []
    for si, sent in enumerate(doc.sentences):
        for rule, s, e in engine.scan_sentence(sent.tokens, cues):
            a, b = sent.tokens[s].start, sent.tokens[e - 1].end
            matches.append(RuleMatch(rule.id, rule.polarity, rule.weight, doc.doc_id, si,
                                     a, b, doc.raw_text[a:b], s, e))
    return matches


def scan_patient(engine: RuleEngine, record: PatientRecord, cues: Sequence[ContextCue] = ()) -> list[RuleMatch]:
    """Every surviving rule match across a patient's documents."""
    out = []
    for doc in record.documents:
        out += scan_document(engine, doc, cues)
    return out


def weighted_decision(matches: Iterable[RuleMatch], default_met: bool, threshold: float = 0.0):
    """``(met, score)`` from signed rule weights; no matches or a tie gives the default."""
    matches = list(matches)
    score = math.fsum(m.weight if m.polarity == POSITIVE else -m.weight for m in matches)
    if not matches or score == threshold:
        return default_met, score
    return score > threshold, score


# ---------------------------------------------------------------- file formats

def _parse_bool(text: str, default: bool) -> bool:
    text = text.strip().lower()
    if text in ("", "-"):
        return default
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_sets(lines: Iterable[str]) -> dict[str, NamedSet]:
    sets = {}
    for line in lines:
        if not line.strip() or line.startswith("#"):
            continue
        name, _, rest = line.rstrip("\n").partition("\t")
        members = tuple(m.strip().lower() for m in rest.split(",") if m.strip())
        sets[name.strip()] = NamedSet(name.strip(), members)
    return sets


def load_sets(path) -> dict[str, NamedSet]:
    return parse_sets(Path(path).read_text(encoding="utf-8").splitlines())


def compile_rule_lines(lines: Iterable[str], sets: Mapping[str, NamedSet],
                       criterion: str | None = None, source: str = "<rules>") -> RuleEngine:
    rules = []
    for n, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise RuleCompileError(f"{source}:{n}: expected 5 tab-separated fields")
        rule_id, polarity, weight, sensitive, pattern = parts
        try:
            if polarity not in (POSITIVE, NEGATIVE):
                raise RuleCompileError(f"unknown polarity {polarity!r}")
            w = float(weight)
            if not math.isfinite(w):
                raise RuleCompileError("weight must be finite")
            neg_sensitive = _parse_bool(sensitive, polarity == POSITIVE)
            elements = parse_pattern(pattern, sets)
        except ValueError as exc:
            raise RuleCompileError(f"rule {rule_id} ({source}:{n}): {exc}") from None
        rules.append(TriggerRule(rule_id, polarity, pattern, elements, w, neg_sensitive))
    return RuleEngine(rules, criterion)


def compile_rules(rule_file, sets: Mapping[str, NamedSet] | Iterable[NamedSet],
                  criterion: str | None = None) -> RuleEngine:
    if not isinstance(sets, Mapping):
        sets = {s.name: s for s in sets}
    path = Path(rule_file)
    return compile_rule_lines(path.read_text(encoding="utf-8").splitlines(), sets, criterion, str(path))


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("cohort_sieve.data").joinpath(name)))


@lru_cache(maxsize=None)
def builtin_engine(pack: str) -> RuleEngine:
    """Compile a bundled rule pack (``alcohol``, ``drug``, ``english``, ``decision``)."""
    sets = load_sets(builtin_path("sets.tsv"))
    return compile_rules(builtin_path(f"rules/{pack}.tsv"), sets, pack)


def write_match_dump(rows: Iterable[tuple[str, str, RuleMatch]], path, header: str | None = None) -> None:
    """TSV of ``patient, criterion, rule, polarity, doc, offset, text`` for audit."""
    lines = [] if header is None else [header]
    for patient, criterion, m in rows:
        text = " ".join(m.matched_text.split())
        lines.append("\t".join([patient, criterion, m.rule_id, m.polarity, m.doc_id, str(m.start), text]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def expand_rule(rule: TriggerRule) -> list[tuple]:
    """Concrete element sequences with every alternation resolved."""
    choices = []
    for el in rule.elements:
        if isinstance(el, Alternation):
            choices.append([tuple(Literal(w) for w in opt) for opt in el.options])
        else:
            choices.append([(el,)])
    return [tuple(itertools.chain.from_iterable(c)) for c in itertools.product(*choices)]
