"""Pipeline stages: each reads its inputs from the config or the output
directory, writes its artifacts atomically, and can be re-run on its own.
"""
from __future__ import annotations

import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .config import CriterionSpec, PipelineConfig
from .context import load_cues
from .corpus import PatientRecord, ingest_corpus, tokenize
from .criteria import (
    AdvancedCadCriterion,
    CadConfig,
    CriterionError,
    LabCriterion,
    TerminologyCriterion,
    WeakCriterion,
    WeightedRuleCriterion,
    evaluate_all,
    load_analytes,
    load_terms,
    write_decisions,
    read_decisions,
)
from .evaluation import gold_by_patient, read_labels, render_report, score
from .learn import (
    ConstantClassifier,
    EmbeddingAverageClassifier,
    StackedClassifier,
    TfidfForestClassifier,
    TfidfLogisticClassifier,
    load_model,
    model_summary,
    save_model,
)
from .lexvar import SkipGramEmbeddings, expand_variants, load_variants, save_variants
from .rules import compile_rules, load_sets
from .sections import load_titles, mine_section_titles, save_titles
from .silver import ConflictPolicy, build_code_silver, build_silver, load_codes, load_silver_rows, save_silver

logger = logging.getLogger(__name__)

STAGES = ("ingest", "mine-sections", "train-embeddings", "expand-variants", "build-silver", "train", "predict", "score")
SPLITS = ("train", "test", "unlabeled")
_TERM_KEYS = ("terms", "med_terms", "mi_terms", "angina_terms", "ischemia_terms")


class StageError(RuntimeError):
    """A stage could not run, typically because an upstream artifact is missing."""


@contextmanager
def atomic_path(path: Path):
    """Yield a temporary sibling of ``path`` and move it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_text(path: Path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text, encoding="utf-8")


def load_word_list(path) -> list[str]:
    return [line.strip().lower() for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip() and not line.startswith("#")]


@dataclass
class Workspace:
    """Config plus lazily loaded, cached stage products."""

    cfg: PipelineConfig
    _cache: dict = field(default_factory=dict)

    @property
    def out(self) -> Path:
        return self.cfg.output

    def artifact(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def require(self, *parts) -> Path:
        path = self.artifact(*parts)
        if not path.exists():
            raise StageError(f"missing artifact {path}; run the stage that produces it first")
        return path

    @property
    def cues(self):
        if "cues" not in self._cache:
            self._cache["cues"] = load_cues(self.cfg.cues)
        return self._cache["cues"]

    @property
    def sets(self):
        if "sets" not in self._cache:
            self._cache["sets"] = load_sets(self.cfg.sets)
        return self._cache["sets"]

    def gold(self, split: str) -> dict:
        key = f"gold_{split}"
        path = self.cfg.corpus.get(key)
        return gold_by_patient(read_labels(path)) if path else {}

    def records(self, split: str) -> list[PatientRecord]:
        key = f"records:{split}"
        if key not in self._cache:
            root = self.cfg.corpus.get(split)
            if root is None:
                self._cache[key], self._cache[f"errors:{split}"] = [], []
            else:
                errors: list = []
                gold = self.gold(split) if split in ("train", "test") else None
                self._cache[key] = ingest_corpus(root, gold, errors)
                self._cache[f"errors:{split}"] = errors
        return self._cache[key]

    def titles(self):
        if "titles" not in self._cache:
            self._cache["titles"] = load_titles(self.require("sections.tsv"))
        return self._cache["titles"]

    def embeddings(self):
        if "embeddings" not in self._cache:
            self._cache["embeddings"] = SkipGramEmbeddings.load(self.require("embeddings.bin"))
        return self._cache["embeddings"]

    def variants(self):
        if "variants" not in self._cache:
            path = self.artifact("variants.tsv")
            self._cache["variants"] = load_variants(path) if path.exists() else {}
        return self._cache["variants"]


# ---------------------------------------------------------------- stages

def stage_ingest(ws: Workspace) -> Path:
    lines = [ws.cfg.lineage("ingest"), "split\tpatients\tdocuments\tsentences\ttokens\trejected"]
    problems = []
    for split in SPLITS:
        records = ws.records(split)
        errors = ws._cache[f"errors:{split}"]
        n_docs = sum(len(r.documents) for r in records)
        n_sent = sum(len(d.sentences) for r in records for d in r.documents)
        n_tok = sum(len(s.tokens) for r in records for d in r.documents for s in d.sentences)
        lines.append(f"{split}\t{len(records)}\t{n_docs}\t{n_sent}\t{n_tok}\t{len(errors)}")
        problems += [f"{split}\t{e}" for e in errors]
    out = ws.artifact("corpus_summary.tsv")
    write_text(out, "\n".join(lines) + "\n")
    write_text(ws.artifact("ingest_errors.tsv"), "\n".join([ws.cfg.lineage("ingest")] + problems) + "\n")
    return out


def _text_records(ws: Workspace) -> list[PatientRecord]:
    """Records whose text (never labels) feeds unsupervised stages."""
    return ws.records("unlabeled") + ws.records("train")


def stage_mine_sections(ws: Workspace) -> Path:
    docs = [d for r in _text_records(ws) for d in r.documents]
    titles = mine_section_titles(docs, ws.cfg.section_min_frequency)
    out = ws.artifact("sections.tsv")
    with atomic_path(out) as tmp:
        save_titles(titles, tmp, ws.cfg.lineage("mine-sections"))
    ws._cache["titles"] = titles
    return out


def stage_train_embeddings(ws: Workspace) -> Path:
    sentences = [[t.lower for t in s.tokens] for r in _text_records(ws) for d in r.documents for s in d.sentences]
    params = dict(ws.cfg.embeddings)
    params.pop("variant_neighbors")
    model = SkipGramEmbeddings(seed=ws.cfg.sub_seed("train-embeddings"), **params).fit(sentences)
    out = ws.artifact("embeddings.bin")
    with atomic_path(out) as tmp:
        model.save(tmp)
    write_text(ws.artifact("embeddings.lineage"), ws.cfg.lineage("train-embeddings") + "\n")
    ws._cache["embeddings"] = model
    return out


def term_words(cfg: PipelineConfig) -> list[str]:
    """Alphabetic words of every included term across all configured lists."""
    words = set()
    for spec in cfg.criteria:
        for key in _TERM_KEYS:
            path = spec.path(key)
            if path is None:
                continue
            for entry in load_terms(path):
                if not entry.excluded:
                    words.update(t.lower for t in tokenize(entry.surface) if t.text.isalpha())
    return sorted(words)


def stage_expand_variants(ws: Workspace) -> Path:
    lexicon = expand_variants(ws.embeddings(), term_words(ws.cfg), ws.cfg.embeddings["variant_neighbors"])
    out = ws.artifact("variants.tsv")
    with atomic_path(out) as tmp:
        save_variants(lexicon, tmp, ws.cfg.lineage("expand-variants"))
    ws._cache["variants"] = lexicon
    return out


def _weak_specs(cfg: PipelineConfig) -> list[CriterionSpec]:
    return [s for s in cfg.criteria if s.strategy == "weak_supervised"]


def stage_build_silver(ws: Workspace) -> list[Path]:
    unlabeled = ws.records("unlabeled")
    outputs = []
    codes = None
    for spec in _weak_specs(ws.cfg):
        if "code_prefix" in spec.params:
            if codes is None:
                if "codes" not in ws.cfg.corpus:
                    raise StageError(f"{spec.id}: code_prefix needs [pipeline] codes")
                codes = load_codes(ws.cfg.corpus["codes"])
            labels = build_code_silver(unlabeled, codes, spec.id, spec.params["code_prefix"],
                                       int(spec.params.get("window_months", 12)))
        elif spec.path("rules") is not None:
            engine = compile_rules(spec.path("rules"), ws.sets, spec.id)
            policy = ConflictPolicy(spec.params.get("conflict_policy", "drop"))
            labels = build_silver(engine, unlabeled, ws.cues, policy, spec.id)
        else:
            raise StageError(f"{spec.id}: weak_supervised needs rules or code_prefix")
        out = ws.artifact("silver", f"{spec.id}.tsv")
        with atomic_path(out) as tmp:
            save_silver(labels, tmp, ws.cfg.lineage("build-silver"))
        outputs.append(out)
    return outputs


def make_model(spec: CriterionSpec, cfg: PipelineConfig, embeddings, y, seed: int):
    """Untrained learner for ``spec``; a constant model when only one class is present."""
    learn = cfg.learner
    kind = spec.params.get("model", "stacked")
    if kind == "forest":
        return TfidfForestClassifier(min_df=learn["min_df"], max_features=learn["forest_features"],
                                     n_trees=learn["forest_trees"], max_depth=learn["forest_depth"], seed=seed)
    if kind != "stacked":
        raise StageError(f"{spec.id}: unknown model {kind!r} (expected stacked or forest)")
    if len(set(y)) < 2:
        return ConstantClassifier()
    common = dict(l2=learn["l2"], learning_rate=learn["learning_rate"], epochs=learn["epochs"],
                  batch_size=learn["batch_size"], seed=seed)
    return StackedClassifier(TfidfLogisticClassifier(min_df=learn["min_df"], **common),
                             EmbeddingAverageClassifier(embeddings, **common),
                             folds=learn["folds"], threshold=learn["threshold"], seed=seed)


def training_rows(ws: Workspace, spec: CriterionSpec) -> tuple[list[PatientRecord], list[int]]:
    """Silver rows plus gold training rows, gold winning on collisions."""
    by_id = {r.patient_id: r for r in ws.records("unlabeled")}
    labels = {p: m for p, c, m, _ in load_silver_rows(ws.require("silver", f"{spec.id}.tsv")) if c == spec.id}
    for record in ws.records("train"):
        by_id[record.patient_id] = record
        if spec.id in record.gold_labels:
            labels[record.patient_id] = bool(record.gold_labels[spec.id])
    ids = sorted(p for p in labels if p in by_id)
    return [by_id[p] for p in ids], [int(labels[p]) for p in ids]


def stage_train(ws: Workspace) -> list[Path]:
    outputs = []
    for spec in _weak_specs(ws.cfg):
        records, y = training_rows(ws, spec)
        if not records:
            raise StageError(f"{spec.id}: no training rows")
        kind = spec.params.get("model", "stacked")
        embeddings = ws.embeddings() if kind == "stacked" else None
        model = make_model(spec, ws.cfg, embeddings, y, ws.cfg.sub_seed(f"train:{spec.id}"))
        model.fit([r.tokens() for r in records], y)
        out = ws.artifact("models", f"{spec.id}.model")
        with atomic_path(out) as tmp:
            save_model(model, tmp, criterion=spec.id, config_sha256=ws.cfg.sha256, seed=ws.cfg.seed,
                       n_train=len(y), n_positive=int(sum(y)))
        summary = f"{ws.cfg.lineage('train')}\ncriterion: {spec.id}\nrows: {len(y)} positive: {sum(y)}\n"
        write_text(ws.artifact("models", f"{spec.id}.txt"), summary + model_summary(model) + "\n")
        outputs.append(out)
    return outputs


def _float_pair(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def build_evaluator(spec: CriterionSpec, ws: Workspace):
    """Evaluator for one criterion; a :class:`CriterionError` when it cannot be built."""
    try:
        p = spec.params
        titles = ws.titles()
        months = int(p["window_months"]) if p.get("window_months") else None
        if spec.strategy == "terminology":
            veto = load_word_list(spec.path("veto")) if spec.path("veto") else None
            return TerminologyCriterion(spec.id, load_terms(spec.path("terms")), ws.variants(), ws.cues, titles,
                                        spec.names("sections"), spec.names("deny_sections"), months, veto)
        if spec.strategy == "lab_threshold":
            patterns = load_analytes(spec.path("analytes"))
            if p["analyte"] not in patterns:
                raise ValueError(f"analyte {p['analyte']!r} not in {spec.path('analytes')}")
            gt = float(p["greater_than"]) if "greater_than" in p else None
            rng = _float_pair(p["range"]) if "range" in p else None
            if (gt is None) == (rng is None):
                raise ValueError("set exactly one of greater_than or range")
            return LabCriterion(spec.id, patterns[p["analyte"]], gt, rng)
        if spec.strategy == "weighted_rules":
            default = p.get("default", "met")
            if default not in ("met", "notmet"):
                raise ValueError(f"default must be met or notmet, got {default!r}")
            engine = compile_rules(spec.path("rules"), ws.sets, spec.id)
            return WeightedRuleCriterion(spec.id, engine, ws.cues, default == "met", float(p.get("threshold", 0)))
        if spec.strategy == "composite":
            cfg = CadConfig(
                med_terms=load_terms(spec.path("med_terms")), mi_terms=load_terms(spec.path("mi_terms")),
                angina_terms=load_terms(spec.path("angina_terms")),
                ischemia_terms=load_terms(spec.path("ischemia_terms")),
                organ_veto=load_word_list(spec.path("organ_veto")) if spec.path("organ_veto") else (),
                med_sections=spec.names("med_sections"), neuro_sections=spec.names("neuro_sections"),
                angina_window_months=int(p.get("angina_window_months", 6)), variants=ws.variants())
            return AdvancedCadCriterion(spec.id, cfg, ws.cues, titles)
        model = load_model(ws.require("models", f"{spec.id}.model"))
        return WeakCriterion(spec.id, model, float(p.get("threshold", ws.cfg.learner["threshold"])))
    except StageError:
        raise
    except Exception as exc:
        return CriterionError(spec.id, str(exc))


def stage_predict(ws: Workspace, split: str = "test") -> Path:
    evaluators = [build_evaluator(spec, ws) for spec in ws.cfg.criteria]
    decisions, errors = [], []
    for record in sorted(ws.records(split), key=lambda r: r.patient_id):
        d, e = evaluate_all(record, evaluators)
        decisions += d
        errors += e
    # setup failures repeat once per patient; report each message once
    seen, unique = set(), []
    for e in errors:
        if (e.criterion_id, e.message) not in seen:
            seen.add((e.criterion_id, e.message))
            unique.append(f"{e.criterion_id}\t{e.message}")
    out = ws.artifact("decisions.tsv")
    with atomic_path(out) as tmp:
        write_decisions(decisions, tmp, ws.cfg.lineage("predict"))
    write_text(ws.artifact("predict_errors.tsv"), "\n".join([ws.cfg.lineage("predict")] + unique) + "\n")
    for line in unique:
        logger.error("criterion failed: %s", line)
    return out


def stage_score(ws: Workspace) -> tuple[Path, str]:
    if "gold_test" not in ws.cfg.corpus:
        raise StageError("scoring needs [pipeline] gold_test")
    gold = read_labels(ws.cfg.corpus["gold_test"])
    predicted = read_decisions(ws.require("decisions.tsv"))
    text = render_report(score(gold, predicted))
    out = ws.artifact("report.txt")
    write_text(out, f"{ws.cfg.lineage('score')}\n{text}")
    return out, text


STAGE_FUNCTIONS = {
    "ingest": stage_ingest,
    "mine-sections": stage_mine_sections,
    "train-embeddings": stage_train_embeddings,
    "expand-variants": stage_expand_variants,
    "build-silver": stage_build_silver,
    "train": stage_train,
    "predict": stage_predict,
    "score": stage_score,
}


def run_pipeline(ws: Workspace, stages=STAGES):
    """Run ``stages`` in order; outputs of completed stages stay on disk if a later one fails."""
    results = {}
    for name in stages:
        logger.info("stage %s", name)
        results[name] = STAGE_FUNCTIONS[name](ws)
    return results
