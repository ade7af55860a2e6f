"""Versioned JSON artifacts for fitted models.

Layout::

    {"format": "cpbid-model", "version": 1, "kind": "linear" | "quantile" | "forest", ...}

Floats are written with ``repr`` precision, so linear coefficients and tree
thresholds/leaf values round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._common import ModelError
from .forest import ForestModel, Tree
from .linear import LinearModel
from .quantile import QuantileModel

FORMAT = "cpbid-model"
VERSION = 1
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples")


def _linear(m: LinearModel) -> dict:
    return {"intercept": m.intercept, "coefficients": list(m.coefficients),
            "selected_features": list(m.selected_features),
            "feature_names_in": list(m.feature_names_in)}


def model_to_dict(model) -> dict:
    head = {"format": FORMAT, "version": VERSION}
    if isinstance(model, LinearModel):
        return {**head, "kind": "linear", **_linear(model)}
    if isinstance(model, QuantileModel):
        return {**head, "kind": "quantile", "taus": list(model.taus),
                "feature_names_in": list(model.feature_names_in),
                "models": [_linear(m) for m in model.models]}
    if isinstance(model, ForestModel):
        return {**head, "kind": "forest", "n_trees": model.n_trees,
                "max_features": model.max_features, "min_leaf": model.min_leaf,
                "per_tree_seed": list(model.per_tree_seed),
                "feature_names_in": list(model.feature_names_in),
                "trees": [{f: getattr(t, f).tolist() for f in _TREE_FIELDS} for t in model.trees]}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def _linear_from(d: dict) -> LinearModel:
    return LinearModel(d["intercept"], d["coefficients"], d["selected_features"], d["feature_names_in"])


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ModelError("not a cpbid model artifact")
    if d.get("version") != VERSION:
        raise ModelError(f"unsupported model artifact version {d.get('version')}")
    kind = d.get("kind")
    if kind == "linear":
        return _linear_from(d)
    if kind == "quantile":
        return QuantileModel(tuple(d["taus"]), tuple(_linear_from(m) for m in d["models"]),
                             tuple(d["feature_names_in"]))
    if kind == "forest":
        trees = tuple(
            Tree(*(np.asarray(t[f], dtype=np.int64 if f in ("feature", "left", "right", "n_samples")
                              else float) for f in _TREE_FIELDS))
            for t in d["trees"])
        return ForestModel(trees, d["n_trees"], d["max_features"], d["min_leaf"],
                           tuple(d["per_tree_seed"]), tuple(d["feature_names_in"]))
    raise ModelError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
