"""INI pipeline configuration with upfront validation.

Relative paths are resolved against the config file's directory; a
``builtin:`` prefix points into the bundled data directory.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .criteria import ConfigError as _CriterionConfigError
from .rules import builtin_path

STRATEGIES = ("weak_supervised", "terminology", "lab_threshold", "weighted_rules", "composite")
CORPUS_KEYS = ("train", "test", "unlabeled", "gold_train", "gold_test", "codes")

# keys holding asset paths, per strategy
_PATH_KEYS = {
    "terminology": ("terms", "veto"),
    "lab_threshold": ("analytes",),
    "weighted_rules": ("rules",),
    "weak_supervised": ("rules",),
    "composite": ("med_terms", "mi_terms", "angina_terms", "ischemia_terms", "organ_veto"),
}
_REQUIRED = {
    "terminology": ("terms",),
    "lab_threshold": ("analytes", "analyte"),
    "weighted_rules": ("rules",),
    "weak_supervised": ("model",),
    "composite": ("med_terms", "mi_terms", "angina_terms", "ischemia_terms"),
}


class ConfigError(_CriterionConfigError):
    """Raised with every validation problem found, one per line."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class CriterionSpec:
    id: str
    strategy: str
    params: dict = field(default_factory=dict)

    def path(self, key: str) -> Path | None:
        value = self.params.get(key)
        return value if isinstance(value, Path) else None

    def names(self, key: str) -> list[str] | None:
        raw = self.params.get(key)
        if not raw:
            return None
        return [n.strip().lower() for n in str(raw).split(",") if n.strip()]


@dataclass
class PipelineConfig:
    source: Path
    sha256: str
    seed: int
    output: Path
    corpus: dict
    cues: Path
    sets: Path
    section_min_frequency: float
    embeddings: dict
    learner: dict
    generate: dict
    criteria: list

    def sub_seed(self, stage: str) -> int:
        """Stage seed derived from the global seed, stable across runs."""
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode()).digest()
        return int.from_bytes(digest[:4], "little")

    def lineage(self, stage: str) -> str:
        return f"# cohort-sieve config_sha256={self.sha256} seed={self.seed} stage={stage}"


def resolve_path(value: str, base: Path) -> Path:
    value = value.strip()
    if value.startswith("builtin:"):
        return builtin_path(value[len("builtin:"):])
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def _number(section, key, kind, default, errors, where):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return kind(raw)
    except ValueError:
        errors.append(f"[{where}] {key}: expected {kind.__name__}, got {raw!r}")
        return default


_EMBED_DEFAULTS = {"dim": (int, 50), "window": (int, 4), "negatives": (int, 5), "epochs": (int, 3),
                   "min_count": (int, 5), "learning_rate": (float, 0.025), "batch_size": (int, 512),
                   "min_corpus_tokens": (int, 10000), "variant_neighbors": (int, 200)}
_LEARN_DEFAULTS = {"folds": (int, 5), "l2": (float, 1e-4), "learning_rate": (float, 0.5), "epochs": (int, 30),
                   "batch_size": (int, 32), "threshold": (float, 0.5), "forest_trees": (int, 25),
                   "forest_depth": (int, 8), "forest_features": (int, 300), "min_df": (int, 2)}
_GEN_DEFAULTS = {"n_patients": (int, 288), "n_train": (int, 202), "n_unlabeled": (int, 600),
                 "typo_rate": (float, 0.03), "unlabeled_typo_rate": (float, 0.15), "decoy_rate": (float, 0.6)}


def _block(parser, name, defaults, errors):
    section = parser[name] if parser.has_section(name) else {}
    out = {k: _number(section, k, kind, default, errors, name) for k, (kind, default) in defaults.items()}
    for key in section:
        if key not in defaults:
            errors.append(f"[{name}] unknown key {key!r}")
    return out


def load_config(path, seed: int | None = None, output=None, check_corpus=(), check_assets: bool = True) -> PipelineConfig:
    """Parse and validate ``path``.

    ``check_corpus`` names the corpus keys whose paths must exist for the
    caller's stage; asset paths are always checked unless ``check_assets`` is
    false. All problems are collected before raising :class:`ConfigError`.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    raw = path.read_bytes()
    parser = configparser.ConfigParser(interpolation=configparser.BasicInterpolation())
    parser.optionxform = str.lower
    try:
        parser.read_string(raw.decode("utf-8"), source=str(path))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    base = path.parent
    errors: list[str] = []
    if not parser.has_section("pipeline"):
        raise ConfigError([f"{path}: missing [pipeline] section"])
    pipe = parser["pipeline"]
    try:
        items = dict(pipe.items())
    except configparser.Error as exc:
        raise ConfigError([f"[pipeline] {exc}"]) from None

    cfg_seed = _number(pipe, "seed", int, 0, errors, "pipeline")
    corpus = {}
    for key in CORPUS_KEYS:
        if items.get(key):
            corpus[key] = resolve_path(items[key], base)
        if key in check_corpus:
            if key not in corpus:
                errors.append(f"[pipeline] {key} is required")
            elif not corpus[key].exists():
                errors.append(f"[pipeline] {key}: path not found: {corpus[key]}")
    out_dir = Path(output) if output is not None else resolve_path(items.get("output", "out"), base)
    cues = resolve_path(items.get("cues", "builtin:cues.tsv"), base)
    sets = resolve_path(items.get("sets", "builtin:sets.tsv"), base)
    if check_assets:
        for name, p in (("cues", cues), ("sets", sets)):
            if not p.is_file():
                errors.append(f"[pipeline] {name}: file not found: {p}")
    min_freq = _number(pipe, "section_min_frequency", float, 0.01, errors, "pipeline")
    if not 0 < min_freq < 1:
        errors.append("[pipeline] section_min_frequency must lie in (0, 1)")

    known = set(CORPUS_KEYS) | {"seed", "output", "cues", "sets", "section_min_frequency", "corpus"}
    for key in items:
        if key not in known:
            errors.append(f"[pipeline] unknown key {key!r}")

    criteria = []
    seen = set()
    for name in parser.sections():
        if not name.startswith("criterion:"):
            if name not in ("pipeline", "embeddings", "learner", "generate"):
                errors.append(f"unknown section [{name}]")
            continue
        cid = name.split(":", 1)[1].strip()
        if cid in seen:
            errors.append(f"duplicate criterion {cid}")
        seen.add(cid)
        try:
            params = dict(parser[name].items())
        except configparser.Error as exc:
            errors.append(f"[{name}] {exc}")
            continue
        strategy = params.pop("strategy", "")
        if strategy not in STRATEGIES:
            errors.append(f"[{name}] strategy must be one of {', '.join(STRATEGIES)}, got {strategy!r}")
            continue
        for key in _REQUIRED[strategy]:
            if key not in params:
                errors.append(f"[{name}] {key} is required for strategy {strategy}")
        for key in _PATH_KEYS[strategy]:
            if key in params:
                params[key] = resolve_path(params[key], base)
                if check_assets and not params[key].is_file():
                    errors.append(f"[{name}] {key}: file not found: {params[key]}")
        criteria.append(CriterionSpec(cid, strategy, params))

    embeddings = _block(parser, "embeddings", _EMBED_DEFAULTS, errors)
    learner = _block(parser, "learner", _LEARN_DEFAULTS, errors)
    generate = _block(parser, "generate", _GEN_DEFAULTS, errors)
    if errors:
        raise ConfigError(errors)
    return PipelineConfig(
        source=path, sha256=hashlib.sha256(raw).hexdigest(), seed=cfg_seed if seed is None else seed,
        output=out_dir, corpus=corpus, cues=cues, sets=sets, section_min_frequency=min_freq,
        embeddings=embeddings, learner=learner, generate=generate, criteria=criteria,
    )
