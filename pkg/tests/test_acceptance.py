"""End-to-end acceptance scenarios, each checked at its stated tolerance and time budget.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import datetime as dt
import itertools
import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from cohort_sieve.cli import main
from cohort_sieve.config import load_config
from cohort_sieve.context import default_cues
from cohort_sieve.corpus import ingest_corpus, tokenize
from cohort_sieve.criteria import AdvancedCadCriterion, CadConfig, eval_lab, load_analytes, load_terms
from cohort_sieve.evaluation import read_labels, score
from cohort_sieve.learn import (
    EmbeddingAverageClassifier,
    StackedClassifier,
    TfidfForestClassifier,
    TfidfLogisticClassifier,
    log_loss_and_grad,
)
from cohort_sieve.lexvar import SkipGramEmbeddings, expand_variants, levenshtein
from cohort_sieve.pipeline import term_words
from cohort_sieve.rules import POSITIVE, builtin_path, compile_rule_lines, compile_rules, load_sets, scan_patient
from cohort_sieve.silver import ConflictPolicy, build_silver
from cohort_sieve.synth import TYPO_WORDS, Generator, gold_patients, typo_table, unlabeled_patients, write_patients
from cohort_sieve.temporal import PartialDate, TimeWindow, extract_timexes, within_window

from conftest import ACCEPTANCE_LINES, make_record
from oracles import compile_naive, levenshtein_recursive, naive_matches, numeric_gradient, random_sentences
from test_evaluation import FIXTURES as SCORE_FIXTURES
from test_temporal import FIXTURES as TIMEX_FIXTURES

WEAK = (("ALCOHOL-ABUSE", "alcohol"), ("DRUG-ABUSE", "drug"))
SETS = load_sets(builtin_path("sets.tsv"))
CUES = default_cues()


def report(name, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_levenshtein_exhaustive():
    with Clock() as c:
        words = ["".join(p) for n in range(7) for p in itertools.product("abc", repeat=n)]
        bad = sum(levenshtein(a, b) != levenshtein_recursive(a, b) for a in words for b in words)
    report("levenshtein", bad == 0 and c.seconds < 10,
           f"{len(words) ** 2} pairs, {bad} disagreements, {c.seconds:.1f}s (< 10s)")


def test_rule_engine_matches_naive_scanner():
    with Clock() as c:
        rules, engines = [], []
        for pack in ("alcohol", "drug", "english", "decision"):
            lines = builtin_path(f"rules/{pack}.tsv").read_text(encoding="utf-8").splitlines()
            engines.append(compile_rule_lines(lines, SETS))
            rules += [(p[0], p[4]) for p in (l.split("\t") for l in lines if l.strip() and not l.startswith("#"))]
        sentences = random_sentences(rules, SETS, 1000, random.Random(2024))
        compiled = compile_naive(rules, SETS)
        bad = total = 0
        for words in sentences:
            toks = tokenize(" ".join(words))
            got = set().union(*(e.match_spans(toks) for e in engines))
            want = naive_matches(compiled, words)
            total += len(want)
            bad += got != want
    report("rule engine", bad == 0 and c.seconds < 30,
           f"1000 sentences x {len(rules)} rules, {total} matches, {bad} mismatching sentences, {c.seconds:.1f}s (< 30s)")


def test_logistic_gradient_check():
    worst = 0.0
    with Clock() as c:
        rng = np.random.default_rng(7)
        for _ in range(20):
            n, d = int(rng.integers(5, 40)), int(rng.integers(1, 51))
            X, y = rng.normal(size=(n, d)), rng.integers(0, 2, n).astype(float)
            w, b, l2 = rng.normal(size=d), float(rng.normal()), float(rng.uniform(0, 0.5))
            _, gw, gb = log_loss_and_grad(w, b, X, y, l2)
            analytic = np.append(gw, gb)
            f = lambda v: log_loss_and_grad(v[:-1], v[-1], X, y, l2)[0]
            numeric = numeric_gradient(f, np.append(w, b), eps=1e-5)
            rel = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
            worst = max(worst, float(rel.max()))
    report("gradient check", worst < 1e-4 and c.seconds < 5,
           f"20 instances, max relative error {worst:.2e} (< 1e-4), {c.seconds:.2f}s (< 5s)")


def test_metric_fixtures():
    worst, zero_case = 0.0, False
    for gold, pred, met_f1, notmet_f1, overall, zero in SCORE_FIXTURES.values():
        g = [(f"p{i}", "C", v) for i, v in enumerate(gold)]
        p = [(f"p{i}", "C", v) for i, v in enumerate(pred)]
        (row,) = score(g, p).criteria
        worst = max(worst, abs(float(row.met.f1) - met_f1), abs(float(row.notmet.f1) - notmet_f1),
                    abs(float(row.overall_f1) - overall))
        zero_case |= zero and row.met.zero_support
    n = len(SCORE_FIXTURES)
    report("metrics fixtures", n >= 10 and worst <= 1e-9 and zero_case,
           f"{n} fixtures, max deviation {worst:.1e}, zero-support case {'flagged' if zero_case else 'missing'}")


def test_temporal_suite():
    (last_june,) = extract_timexes("last June", dt.date(2018, 12, 15))
    failures = [text for text, ref, expected, gran in TIMEX_FIXTURES
                if [(str(t.normalized), t.granularity) for t in extract_timexes(text, ref)] != [(expected, gran)]]
    (mi,) = extract_timexes("gentleman with an MI in June 2017", dt.date(2017, 12, 20))
    in_window = within_window(mi.normalized, TimeWindow(dt.date(2017, 12, 20), 6))
    ok = str(last_june.normalized) == "2018-06" and not failures and len(TIMEX_FIXTURES) >= 20 \
        and mi.normalized == PartialDate(2017, 6) and in_window
    report("temporal", ok, f"last June -> {last_june.normalized}, {len(TIMEX_FIXTURES) - len(failures)}/"
           f"{len(TIMEX_FIXTURES)} fixtures, June 2017 within 6 months of 2017-12-20: {in_window}")


@pytest.fixture(scope="module")
def unlabeled(tmp_path_factory):
    start = time.perf_counter()
    root = tmp_path_factory.mktemp("unlabeled")
    patients = unlabeled_patients(2000, seed=7)
    write_patients(patients, root)
    records = ingest_corpus(root)
    return patients, records, time.perf_counter() - start


@pytest.fixture(scope="module")
def silver(unlabeled):
    patients, records, _ = unlabeled
    start = time.perf_counter()
    labels = {}
    for crit, pack in WEAK:
        engine = compile_rules(builtin_path(f"rules/{pack}.tsv"), SETS, crit)
        labels[crit] = build_silver(engine, records, CUES, ConflictPolicy.DROP, crit)
    return labels, time.perf_counter() - start


def test_silver_precision(unlabeled, silver):
    patients, _, build_time = unlabeled
    labels, silver_time = silver
    truth = {p.patient_id: p for p in patients}
    ok, parts = True, []
    for crit, _ in WEAK:
        pos = [s for s in labels[crit] if s.met]
        neg = [s for s in labels[crit] if not s.met]
        p_pos = np.mean([truth[s.patient_id].labels[crit] for s in pos])
        p_neg = np.mean([not truth[s.patient_id].labels[crit] for s in neg])
        kept = {s.patient_id for s in labels[crit]}
        conflicts = [p.patient_id for p in patients if p.kinds.get(crit) == "conflict"]
        leaked = sum(c in kept for c in conflicts)
        ok &= p_pos >= 0.98 and p_neg >= 0.98 and leaked == 0 and len(conflicts) > 0
        parts.append(f"{crit} pos {len(pos)} P={p_pos:.3f}, neg {len(neg)} P={p_neg:.3f}, "
                     f"conflicts kept {leaked}/{len(conflicts)}")
    total = build_time + silver_time
    report("silver precision", ok and total < 120, "; ".join(parts) + f"; {total:.0f}s (< 120s)")


def test_weak_supervision(unlabeled, silver, tmp_path):
    _, records, build_time = unlabeled
    labels, silver_time = silver
    start = time.perf_counter()
    cfg = load_config(builtin_path("synthetic.ini"))
    e = cfg.embeddings
    sentences = [[t.lower for t in s.tokens] for r in records for d in r.documents for s in d.sentences]
    embeddings = SkipGramEmbeddings(dim=e["dim"], window=e["window"], negatives=e["negatives"], epochs=e["epochs"],
                                    min_count=e["min_count"], learning_rate=e["learning_rate"],
                                    batch_size=e["batch_size"], seed=1).fit(sentences)
    priors = {c: 0.3 for c, _ in WEAK}
    held = gold_patients(300, seed=99, criteria=[c for c, _ in WEAK], prefix="h", weak_style="paraphrase",
                         priors=priors)
    write_patients(held, tmp_path / "held")
    held_records = {r.patient_id: r for r in ingest_corpus(tmp_path / "held")}
    by_id = {r.patient_id: r for r in records}
    ok, parts = True, []
    for crit, pack in WEAK:
        engine = compile_rules(builtin_path(f"rules/{pack}.tsv"), SETS, crit)
        positives = [p for p in held if p.labels[crit]]
        seeded = sum(any(m.polarity == POSITIVE for m in scan_patient(engine, held_records[p.patient_id], CUES))
                     for p in positives)
        X = [by_id[s.patient_id].tokens() for s in labels[crit]]
        y = [int(s.met) for s in labels[crit]]
        model = StackedClassifier(TfidfLogisticClassifier(seed=1), EmbeddingAverageClassifier(embeddings, seed=1),
                                  seed=1).fit(X, y)
        pred = model.predict([held_records[p.patient_id].tokens() for p in held]).astype(bool)
        gold = np.array([p.labels[crit] for p in held])
        tp, fp, fn = int((pred & gold).sum()), int((pred & ~gold).sum()), int((~pred & gold).sum())
        f1 = 2 * tp / (2 * tp + fp + fn)
        ok &= f1 >= 0.90 and seeded == 0
        parts.append(f"{crit} F1={f1:.3f} ({len(positives)} paraphrase positives, {seeded} reachable by seed rules)")

    forest = TfidfForestClassifier(seed=1).fit([r.tokens() for r in records[:400]], [0] * 400)
    forest_pos = int(forest.predict([r.tokens() for r in held_records.values()]).sum())
    ok &= forest_pos == 0
    total = build_time + silver_time + time.perf_counter() - start
    report("weak supervision", ok and total < 300,
           "; ".join(parts) + f"; zero-positive forest predicted {forest_pos} positives; {total:.0f}s (< 300s)")


def _run_challenge(config, out, env=None):
    start = time.perf_counter()
    cmd = [sys.executable, "-m", "cohort_sieve.cli", "pipeline", "--config", str(config), "--out", str(out)]
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
    return proc, time.perf_counter() - start


def test_full_synthetic_challenge(tmp_path):
    config = tmp_path / "synthetic.ini"
    config.write_bytes(builtin_path("synthetic.ini").read_bytes())
    start = time.perf_counter()
    assert main(["generate", "--config", str(config)]) == 0
    gen_time = time.perf_counter() - start
    corpus = tmp_path / "corpus"
    n_train, n_test = len(list((corpus / "train").iterdir())), len(list((corpus / "test").iterdir()))
    criteria = {c for _, c, _ in read_labels(corpus / "gold_test.tsv")}

    first, t1 = _run_challenge(config, tmp_path / "run1")
    env = dict(os.environ, PYTHONHASHSEED="123")
    second, t2 = _run_challenge(config, tmp_path / "run2", env)
    assert first.returncode == 0, first.stderr
    assert second.returncode == 0, second.stderr

    rep = score(read_labels(corpus / "gold_test.tsv"), read_labels(tmp_path / "run1" / "decisions.tsv"))
    micro = float(rep.micro.overall_f1)
    files = sorted(p.relative_to(tmp_path / "run1") for p in (tmp_path / "run1").rglob("*") if p.is_file())
    differing = [str(f) for f in files if (tmp_path / "run1" / f).read_bytes() != (tmp_path / "run2" / f).read_bytes()]
    total = gen_time + t1
    ok = (n_train, n_test) == (202, 86) and len(criteria) == 13 and micro >= 0.95 and not differing and total < 600
    report("full challenge", ok,
           f"{n_train}/{n_test} patients, {len(criteria)} criteria, micro F1 {micro:.4f} (>= 0.95), "
           f"{len(files)} artifacts, {len(differing)} differ between runs, {total:.0f}s per run (< 600s)")


def test_boundary_pins():
    analytes = load_analytes(builtin_path("analytes.tsv"))

    def lab(text, analyte, **kw):
        return eval_lab(make_record("p", ("2090-01-01", text)), analytes[analyte], **kw).met

    got = {
        "creatinine 1.5": lab("Creatinine 1.5 mg/dL", "creatinine", greater_than=1.5),
        "creatinine 1.6": lab("Creatinine 1.6 mg/dL", "creatinine", greater_than=1.5),
    }
    for v in ("6.5", "7.0", "9.5", "10.2"):
        got[f"hba1c {v}"] = lab(f"HbA1c {v}%", "hba1c", in_range=(6.5, 9.5))
    terms = {n: load_terms(builtin_path(f"terms/{n}.tsv")) for n in ("cad_meds", "mi", "angina", "ischemia")}
    cad = AdvancedCadCriterion(config=CadConfig(terms["cad_meds"], terms["mi"], terms["angina"], terms["ischemia"]),
                               cues=CUES)
    one = cad.decide(make_record("p", ("2090-06-01", "History of myocardial infarction in 2085.")))
    two = cad.decide(make_record("p", ("2090-06-01", "History of myocardial infarction in 2085. "
                                                     "Nuclear stress test showed reversible ischemia.")))
    got["cad count 1"], got["cad count 2"] = (one.score == 1 and one.met), (two.score == 2 and two.met)
    want = {"creatinine 1.5": False, "creatinine 1.6": True, "hba1c 6.5": True, "hba1c 7.0": True,
            "hba1c 9.5": True, "hba1c 10.2": False, "cad count 1": False, "cad count 2": True}
    wrong = [k for k in want if got[k] != want[k]]
    report("boundary pins", not wrong, f"{len(want) - len(wrong)}/{len(want)} pins hold" +
           (f"; wrong: {', '.join(wrong)}" if wrong else ""))


def test_variant_recovery(tmp_path):
    start = time.perf_counter()
    planted = typo_table(TYPO_WORDS[::2], seed=31)
    gen = Generator(seed=31, typo_rate=0.15, typos=planted)
    write_patients(unlabeled_patients(600, seed=31, generator=gen), tmp_path / "u")
    records = ingest_corpus(tmp_path / "u")
    cfg = load_config(builtin_path("synthetic.ini"))
    e = cfg.embeddings
    sentences = [[t.lower for t in s.tokens] for r in records for d in r.documents for s in d.sentences]
    model = SkipGramEmbeddings(dim=e["dim"], window=e["window"], negatives=e["negatives"], epochs=e["epochs"],
                               min_count=e["min_count"], learning_rate=e["learning_rate"],
                               batch_size=e["batch_size"], seed=1).fit(sentences)
    words = sorted(set(term_words(cfg)) | set(planted))
    lexicon = expand_variants(model, words, e["variant_neighbors"])
    elapsed = time.perf_counter() - start
    recovered = sum(planted[w] in lexicon.get(w, ()) for w in planted)
    far = sum(levenshtein(w, v) >= 2 for w, vs in lexicon.items() for v in vs)
    short = sum(len(vs) for w, vs in lexicon.items() if len(w) <= 3)
    n_short = sum(len(w) <= 3 for w in lexicon)
    ok = recovered >= 8 and far == 0 and short == 0 and n_short > 0 and elapsed < 120
    report("variant recovery", ok, f"{recovered}/10 planted typos recovered, {far} variants at distance >= 2, "
           f"{short} variants for {n_short} short words, {elapsed:.0f}s (< 120s)")
