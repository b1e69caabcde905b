"""Synthetic patient corpora with planted, label-consistent evidence.

Labels are sampled first; documents are then written so that every label is
supported by planted text, and not-met patients receive decoys (negated,
family, wrong-section or out-of-window mentions) that a correct system must
ignore. Everything is driven by one seed.
"""
from __future__ import annotations

import datetime as dt
import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .corpus import format_patient_file

CRITERIA = ("ABDOMINAL", "ADVANCED-CAD", "ALCOHOL-ABUSE", "ASP-FOR-MI", "CREATININE", "DIET-SUPP",
            "DRUG-ABUSE", "ENGLISH", "HBA1C", "KETO-1YR", "MAJOR-DIABETES", "MAKES-DECISION", "MI-6MOS")
WEAK = ("ALCOHOL-ABUSE", "DRUG-ABUSE")
CAD_SUBS = ("medications", "mi_history", "current_angina", "ischemia")
SECTION_ORDER = ("hpi", "pmh", "psh", "meds", "allergies", "social", "family", "exam", "labs", "head_ct", "plan")

# term words that receive planted misspellings
TYPO_WORDS = ("cholecystectomy", "appendectomy", "colectomy", "neuropathy", "retinopathy", "nephropathy",
              "gastroparesis", "aspirin", "metoprolol", "atorvastatin", "clopidogrel", "angina",
              "ischemia", "infarction", "multivitamin", "glucosamine", "simvastatin", "carvedilol",
              "splenectomy", "hemicolectomy")

_SLOT = re.compile(r"\{([A-Z_0-9]+)\}")


def load_templates(path=None) -> dict:
    """Generator templates; rejects criteria outside the known thirteen."""
    if path is None:
        text = resources.files("cohort_sieve.data").joinpath("synth_templates.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    tpl = json.loads(text)
    for block in ("priors", "criteria"):
        unknown = sorted(set(tpl.get(block, {})) - set(CRITERIA))
        if unknown:
            raise ValueError(f"template references unknown criterion: {', '.join(unknown)}")
    for name in tpl.get("unlabeled_priors", {}):
        if name not in CRITERIA:
            raise ValueError(f"template references unknown criterion: {name}")
    return tpl


def make_typo(word: str, rng: random.Random) -> str:
    """A single-edit misspelling of ``word`` that keeps its first and last letters."""
    letters = "abcdefghijklmnopqrstuvwxyz"
    while True:
        i = rng.randint(1, len(word) - 2)
        op = rng.choice(("sub", "del", "ins"))
        if op == "sub":
            out = word[:i] + rng.choice(letters.replace(word[i], "")) + word[i + 1:]
        elif op == "del":
            out = word[:i] + word[i + 1:]
        else:
            out = word[:i] + rng.choice(letters) + word[i:]
        if out != word:
            return out


def typo_table(words: Iterable[str], seed: int) -> dict[str, str]:
    rng = random.Random(f"typos:{seed}")
    return {w: make_typo(w, rng) for w in sorted(words)}


@dataclass
class _Doc:
    date: dt.date
    kind: str  # "last", "recent" or "old"
    sections: dict = field(default_factory=dict)


@dataclass
class SyntheticPatient:
    patient_id: str
    documents: list  # (date, text)
    labels: dict
    codes: list = field(default_factory=list)  # (code, date)
    kinds: dict = field(default_factory=dict)  # criterion -> how evidence was planted


class Generator:
    """Writes patients from sampled labels.

    ``typo_rate`` is the chance that a planted term word is replaced by its
    fixed misspelling from ``typos``.
    """

    def __init__(self, templates: dict | None = None, seed: int = 0, typo_rate: float = 0.0,
                 decoy_rate: float = 0.6, typos: dict | None = None):
        self.t = templates or load_templates()
        self.seed = seed
        self.typo_rate = typo_rate
        self.decoy_rate = decoy_rate
        self.typos = typos if typos is not None else typo_table(TYPO_WORDS, seed)

    # ---------------------------------------------------------------- labels

    def sample_labels(self, rng: random.Random, criteria=CRITERIA, priors=None) -> dict:
        priors = dict(self.t["priors"], **(priors or {}))
        labels = {c: rng.random() < priors.get(c, 0.0) for c in criteria}
        return labels

    def _cad_subs(self, rng, labels) -> set:
        cad = labels.get("ADVANCED-CAD", False)
        mi6 = labels.get("MI-6MOS", False)
        if cad:
            subs = set(rng.sample(CAD_SUBS, rng.randint(2, 4)))
            if mi6 and "mi_history" not in subs:
                subs.discard(rng.choice(sorted(subs)))
                subs.add("mi_history")
            return subs
        if mi6:
            return {"mi_history"}
        return set(rng.sample(CAD_SUBS, rng.randint(0, 1)))

    # ---------------------------------------------------------------- text

    def _fill(self, text: str, rng, ctx, typos: bool = True) -> str:
        def sub(m):
            name = m.group(1)
            doc_date, now = ctx["doc"], ctx["now"]
            if name == "OLD_YEAR":
                return str(min(doc_date.year - 1, now.year - 2) - rng.randint(0, 5))
            if name == "RECENT_DATE":
                d = doc_date - dt.timedelta(days=rng.randint(10, 100))
                return d.isoformat() if rng.random() < 0.5 else d.strftime("%m/%d/%Y")
            if name == "DIGIT":
                return str(rng.randint(0, 9))
            if name == "HIS_HER":
                return ctx["his_her"]
            if name == "MAN_WOMAN":
                return ctx["man_woman"]
            return rng.choice(self.t["slots"][name])

        out = _SLOT.sub(sub, text)
        return self._misspell(out, rng) if typos else out

    def _misspell(self, text: str, rng) -> str:
        if not self.typo_rate:
            return text

        def typo(m):
            word = m.group(0)
            wrong = self.typos.get(word.lower())
            if wrong and rng.random() < self.typo_rate:
                return wrong.capitalize() if word[0].isupper() else wrong
            return word
        return re.sub(r"[A-Za-z]+", typo, text)

    def _pick_doc(self, docs, where, rng):
        if where == "last":
            pool = [d for d in docs if d.kind == "last"]
        elif where == "recent":
            pool = [d for d in docs if d.kind in ("last", "recent")]
        elif where == "old":
            pool = [d for d in docs if d.kind == "old"]
        else:
            pool = docs
        return rng.choice(pool)

    def _plant(self, docs, template, rng, ctx, doc=None):
        doc = doc or self._pick_doc(docs, template["doc"], rng)
        text = self._fill(template["text"], rng, dict(ctx, doc=doc.date))
        lines = doc.sections.setdefault(template["section"], [])
        lines.insert(rng.randint(0, len(lines)), text)
        return text

    def _plant_one(self, docs, pool, rng, ctx):
        return self._plant(docs, rng.choice(pool), rng, ctx)

    def _line(self, docs, section, text, rng, where="any"):
        doc = self._pick_doc(docs, where, rng)
        lines = doc.sections.setdefault(section, [])
        lines.insert(rng.randint(0, len(lines)), self._misspell(text, rng))

    def _skeleton(self, rng, now):
        n = rng.randint(2, 5)
        dates = {now: "last"}
        if n >= 3 and rng.random() < 0.4:
            dates[now - dt.timedelta(days=rng.randint(7, 50))] = "recent"
        while len(dates) < n:
            d = now - dt.timedelta(days=rng.randint(400, 1800))
            dates.setdefault(d, "old")
        docs = [_Doc(d, k) for d, k in sorted(dates.items())]
        f = self.t["filler"]
        for doc in docs:
            doc.sections["hpi"] = rng.sample(f["hpi"], rng.randint(2, 3))
            doc.sections["pmh"] = rng.sample(f["pmh"], rng.randint(2, 4))
            if rng.random() < 0.5:
                doc.sections["psh"] = rng.sample(f["psh"], 1)
            doc.sections["meds"] = rng.sample(f["meds"], rng.randint(2, 4))
            doc.sections["allergies"] = rng.sample(f["allergies"], 1)
            doc.sections["social"] = rng.sample(f["social"], rng.randint(1, 2))
            if rng.random() < 0.5:
                doc.sections["family"] = rng.sample(f["family"], 1)
            doc.sections["exam"] = rng.sample(f["exam"], rng.randint(2, 3))
            if rng.random() < 0.7:
                doc.sections["labs"] = rng.sample(f["labs"], rng.randint(3, 5))
            if rng.random() < 0.15:
                doc.sections["head_ct"] = rng.sample(f["head_ct"], 1)
            doc.sections["plan"] = rng.sample(f["plan"], rng.randint(1, 2))
        return docs

    def _render(self, doc: _Doc, rng, ctx) -> str:
        titles = self.t["sections"]
        paragraphs = set(self.t["paragraph_sections"])
        out = []
        for key in SECTION_ORDER:
            lines = [self._fill(s, rng, dict(ctx, doc=doc.date), typos=False) for s in doc.sections.get(key, ())]
            if not lines:
                continue
            out.append(titles[key])
            if key in paragraphs:
                out.append(" ".join(s if s[-1] in ".!?" else s + "." for s in lines))
            else:
                out.extend(lines)
            out.append("")
        return "\n".join(out)

    # ---------------------------------------------------------------- criteria

    def _simple(self, name, met, docs, rng, ctx, n_max=2):
        tpl = self.t["criteria"][name]
        if met:
            for _ in range(rng.randint(1, n_max)):
                self._plant_one(docs, tpl["met"], rng, ctx)
        elif rng.random() < self.decoy_rate:
            self._plant_one(docs, tpl["decoy"], rng, ctx)

    def _labs(self, name, met, docs, rng):
        if name == "CREATININE":
            formats = ("Creatinine {v} mg/dL", "Cr: {v}", "CRE {v}{flag}", "Serum creatinine {v}")
            values = []
            if met:
                values.append(rng.choice((1.6, round(rng.uniform(1.6, 3.5), 1))))
            elif rng.random() < 0.3:
                values.append(1.5)
            for _ in range(rng.randint(0 if met else 1, 2)):
                values.append(round(rng.uniform(0.6, 1.5), 1))
            for v in values:
                line = rng.choice(formats).format(v=f"{v:.1f}", flag=" H" if v > 1.5 else "")
                self._line(docs, "labs", line, rng)
            if rng.random() < 0.3:
                self._line(docs, "labs", f"Creatinine clearance {rng.randint(35, 95)} mL/min", rng)
        else:
            formats = ("HbA1c {v}%", "Hemoglobin A1c: {v} %", "A1c = {v}%", "HgbA1c {v}")
            values = []
            if met:
                values.append(rng.choice((6.5, 9.5, 7.0, round(rng.uniform(6.5, 9.5), 1))))
            if not met and rng.random() < 0.4:
                return
            for _ in range(rng.randint(0 if met else 1, 2)):
                values.append(round(rng.choice((rng.uniform(4.8, 6.4), rng.uniform(9.6, 13.0))), 1))
            for v in values:
                if rng.random() < 0.2:
                    self._line(docs, "hpi", f"Last HbA1c was {v:.1f}%.", rng)
                else:
                    self._line(docs, "labs", rng.choice(formats).format(v=f"{v:.1f}"), rng)

    def _cad(self, subs, docs, rng, ctx):
        tpl = self.t["criteria"]["ADVANCED-CAD"]["sub"]
        meds = self.t["slots"]["CAD_MED"]
        distinct = [m for m in meds if not m.startswith("Plavix")]
        if "medications" in subs:
            for med in rng.sample(distinct, rng.randint(2, 3)):
                self._line(docs, "meds", med, rng)
        else:
            r = rng.random()
            if r < 0.4:
                self._line(docs, "meds", rng.choice(distinct), rng)
            elif r < 0.6:
                self._line(docs, "meds", "Clopidogrel 75 mg daily", rng)
                self._line(docs, "meds", "Plavix 75 mg daily", rng)
            if rng.random() < 0.3:
                self._line(docs, "allergies", rng.choice(self.t["slots"]["CAD_ALLERGY"]), rng)
        for sub in ("mi_history", "current_angina", "ischemia"):
            if sub in subs:
                self._plant_one(docs, tpl[sub]["present"], rng, ctx)
            elif rng.random() < self.decoy_rate:
                self._plant_one(docs, tpl[sub]["decoy"], rng, ctx)

    def _weak(self, name, met, docs, rng, ctx, style):
        tpl = self.t["criteria"][name]
        if met:
            if style == "seed" or (style == "mixed" and rng.random() < 0.6):
                self._plant_one(docs, tpl["seed_pos"], rng, ctx)
            for _ in range(rng.randint(1, 3) if style != "seed" else rng.randint(1, 2)):
                self._plant_one(docs, tpl["paraphrase"], rng, ctx)
            return "seed" if style == "seed" else "paraphrase"
        kind = "none"
        if rng.random() < 0.6 or style == "seed_neg":
            self._plant_one(docs, tpl["seed_neg"], rng, ctx)
            kind = "seed"
        if rng.random() < 0.2:
            self._plant_one(docs, tpl["decoy"], rng, ctx)
        return kind

    def _rule_based(self, name, met, docs, rng, ctx):
        tpl = self.t["criteria"][name]
        default_met = True
        if met == default_met:
            if rng.random() < 0.35:
                self._plant_one(docs, tpl["met"], rng, ctx)
            if rng.random() < self.decoy_rate * 0.5:
                self._plant_one(docs, tpl["decoy"], rng, ctx)
        else:
            for template in rng.sample(tpl["notmet"], rng.randint(1, 2)):
                self._plant(docs, template, rng, ctx)

    # ---------------------------------------------------------------- patients

    def patient(self, patient_id: str, labels: dict, unlabeled: bool = False, weak_style: str = "mixed",
                conflict: dict | None = None) -> SyntheticPatient:
        rng = random.Random(f"{self.seed}:{patient_id}")
        now = dt.date(rng.randint(2085, 2095), rng.randint(1, 12), rng.randint(1, 28))
        male = rng.random() < 0.5
        ctx = {"now": now, "his_her": "his" if male else "her", "man_woman": "man" if male else "woman"}
        docs = self._skeleton(rng, now)
        kinds = {}
        codes = []
        subs = self._cad_subs(rng, labels)
        for name in CRITERIA:
            if name not in labels:
                continue
            met = labels[name]
            if name in ("ABDOMINAL", "ASP-FOR-MI", "DIET-SUPP", "MAJOR-DIABETES", "MI-6MOS"):
                self._simple(name, met, docs, rng, ctx)
            elif name in ("CREATININE", "HBA1C"):
                self._labs(name, met, docs, rng)
            elif name == "ADVANCED-CAD":
                self._cad(subs, docs, rng, ctx)
            elif name in WEAK:
                style = ("seed" if met else "seed_neg") if unlabeled and weak_style == "silver" else weak_style
                if unlabeled and (conflict or {}).get(name):
                    tpl = self.t["criteria"][name]
                    self._plant_one(docs, tpl["seed_pos"], rng, ctx)
                    self._plant_one(docs, tpl["seed_neg"], rng, ctx)
                    kinds[name] = "conflict"
                elif unlabeled and not met and rng.random() < 0.25:
                    kinds[name] = "none"
                else:
                    kinds[name] = self._weak(name, met, docs, rng, ctx, style)
            elif name in ("ENGLISH", "MAKES-DECISION"):
                self._rule_based(name, met, docs, rng, ctx)
            elif name == "KETO-1YR" and unlabeled:
                codes += self._keto(met, docs, rng, ctx, now)
        if unlabeled and not codes:
            codes.append((rng.choice(self.t["slots"]["OTHER_CODE"]), rng.choice(docs).date))
        documents = [(d.date, self._render(d, rng, ctx)) for d in docs]
        if "ADVANCED-CAD" in labels:
            kinds["ADVANCED-CAD"] = ",".join(s for s in CAD_SUBS if s in subs) or "-"
        return SyntheticPatient(patient_id, documents, dict(labels), codes, kinds)

    def _keto(self, met, docs, rng, ctx, now):
        tpl = self.t["criteria"]["KETO-1YR"]
        codes = [(rng.choice(self.t["slots"]["OTHER_CODE"]), rng.choice(docs).date)]
        if met:
            self._plant_one(docs, tpl["met"], rng, ctx)
            codes.append((f"250.1{rng.randint(0, 3)}", now - dt.timedelta(days=rng.randint(0, 300))))
        elif rng.random() < 0.15:
            old = self._pick_doc(docs, "old", rng)
            self._plant(docs, tpl["decoy"][0], rng, ctx, doc=old)
            codes.append((f"250.1{rng.randint(0, 3)}", old.date))
        return codes


# -------------------------------------------------------------------- corpora

def write_patients(patients: Iterable[SyntheticPatient], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for p in patients:
        (directory / f"{p.patient_id}.txt").write_text(format_patient_file(p.documents), encoding="utf-8")


def label_rows(patients: Iterable[SyntheticPatient], criteria=None) -> list[tuple[str, str, bool]]:
    rows = []
    for p in patients:
        for c in CRITERIA:
            if c in p.labels and (criteria is None or c in criteria):
                rows.append((p.patient_id, c, p.labels[c]))
    return rows


def gold_patients(n: int, seed: int = 0, criteria=CRITERIA, prefix: str = "p", start: int = 1,
                  weak_style: str = "mixed", generator: Generator | None = None, priors=None):
    gen = generator or Generator(seed=seed)
    rng = random.Random(f"labels:{seed}:{prefix}")
    out = []
    for i in range(start, start + n):
        labels = gen.sample_labels(rng, criteria, priors)
        out.append(gen.patient(f"{prefix}{i:04d}", labels, weak_style=weak_style))
    return out


def unlabeled_patients(n: int, seed: int = 0, conflict_rate: float = 0.03, generator: Generator | None = None,
                       weak_style: str = "silver"):
    """Unlabeled corpus with seed-rule evidence for the weak criteria and diagnosis codes."""
    gen = generator or Generator(seed=seed)
    rng = random.Random(f"labels:{seed}:unlabeled")
    priors = dict(gen.t["priors"], **gen.t.get("unlabeled_priors", {}))
    out = []
    for i in range(1, n + 1):
        labels = gen.sample_labels(rng, CRITERIA, priors)
        conflict = {}
        for name in WEAK:
            if rng.random() < conflict_rate:
                conflict[name] = True
                labels[name] = True
        out.append(gen.patient(f"u{i:05d}", labels, unlabeled=True, weak_style=weak_style, conflict=conflict))
    return out


def write_codes(patients: Iterable[SyntheticPatient], path) -> None:
    lines = [f"{p.patient_id}\t{code}\t{date.isoformat()}" for p in patients for code, date in p.codes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_truth(patients: Iterable[SyntheticPatient], path) -> None:
    lines = []
    for p in patients:
        for c in CRITERIA:
            if c in p.labels:
                lines.append(f"{p.patient_id}\t{c}\t{'met' if p.labels[c] else 'notmet'}\t{p.kinds.get(c, '-')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_labels(rows, path):
    Path(path).write_text("".join(f"{p}\t{c}\t{'met' if m else 'notmet'}\n" for p, c, m in rows), encoding="utf-8")


def generate_corpus(out, n_patients: int = 288, n_train: int = 202, n_unlabeled: int = 600, seed: int = 0,
                    criteria=CRITERIA, typo_rate: float = 0.03, unlabeled_typo_rate: float = 0.15,
                    decoy_rate: float = 0.6) -> dict:
    """Write a full synthetic challenge under ``out``.

    Layout: ``train/``, ``test/`` and ``unlabeled/`` patient directories,
    ``gold_train.tsv``, ``gold_test.tsv``, ``codes.tsv`` (diagnosis codes of
    unlabeled patients), ``unlabeled_truth.tsv`` and ``typos.tsv``.
    """
    unknown = sorted(set(criteria) - set(CRITERIA))
    if unknown:
        raise ValueError(f"unknown criterion: {', '.join(unknown)}")
    if not 0 < n_train < n_patients:
        raise ValueError("n_train must lie strictly between 0 and n_patients")
    out = Path(out)
    templates = load_templates()
    gold_gen = Generator(templates, seed, typo_rate, decoy_rate)
    gold = gold_patients(n_patients, seed, criteria, generator=gold_gen)
    train, test = gold[:n_train], gold[n_train:]
    write_patients(train, out / "train")
    write_patients(test, out / "test")
    _write_labels(label_rows(train, criteria), out / "gold_train.tsv")
    _write_labels(label_rows(test, criteria), out / "gold_test.tsv")
    unl = []
    if n_unlabeled:
        unl_gen = Generator(templates, seed, unlabeled_typo_rate, decoy_rate)
        unl = unlabeled_patients(n_unlabeled, seed, generator=unl_gen)
        write_patients(unl, out / "unlabeled")
        write_codes(unl, out / "codes.tsv")
        write_truth(unl, out / "unlabeled_truth.tsv")
    (out / "typos.tsv").write_text("".join(f"{w}\t{t}\n" for w, t in gold_gen.typos.items()), encoding="utf-8")
    return {"train": len(train), "test": len(test), "unlabeled": len(unl)}
