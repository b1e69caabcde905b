"""Model persistence with a versioned header, plus a text audit summary."""
from __future__ import annotations

import json
import pickle

import numpy as np

MAGIC = b"COHORT-SIEVE-MODEL\n"
FORMAT_VERSION = 1


def save_model(model, path, **meta) -> None:
    header = {"format_version": FORMAT_VERSION, "class": type(model).__name__, **meta}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        pickle.dump(model, fh, protocol=4)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a model file")
        return json.loads(fh.readline())


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a model file")
        header = json.loads(fh.readline())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
        return pickle.load(fh)


def _top_tokens(vectorizer, coef, k):
    names = vectorizer.get_feature_names_out()
    order = np.argsort(-coef, kind="stable")
    pos = [f"{names[i]}={coef[i]:+.3f}" for i in order[:k]]
    neg = [f"{names[i]}={coef[i]:+.3f}" for i in order[::-1][:k]]
    return pos, neg


def model_summary(model, k: int = 10) -> str:
    """Dimensions, hyperparameters and top-weighted tokens of a fitted model."""
    lines = [f"class: {type(model).__name__}"]
    params = {key: val for key, val in model.get_params(deep=False).items()
              if isinstance(val, (int, float, str, bool, type(None)))}
    lines.append("params: " + ", ".join(f"{key}={params[key]}" for key in sorted(params)))
    parts = getattr(model, "bases_", None) or [model]
    for part in parts:
        vec = getattr(part, "vectorizer_", None)
        inner = getattr(part, "model_", None)
        if vec is not None and inner is not None:
            pos, neg = _top_tokens(vec, inner.coef_, k)
            lines.append(f"{type(part).__name__}: {len(vec.vocabulary_)} features")
            lines.append("  top positive: " + " ".join(pos))
            lines.append("  top negative: " + " ".join(neg))
        elif inner is not None:
            lines.append(f"{type(part).__name__}: {inner.coef_.shape[0]} features")
    meta = getattr(model, "meta_", None)
    if meta is not None:
        lines.append(f"meta: coef={np.round(meta.coef_, 4).tolist()} intercept={meta.intercept_:.4f}")
    forest = getattr(model, "forest_", None)
    if forest is not None:
        lines.append(f"forest: {len(forest.trees_)} trees, classes={forest.classes_.tolist()}")
    return "\n".join(lines) + "\n"
