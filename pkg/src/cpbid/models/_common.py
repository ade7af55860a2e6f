from __future__ import annotations

import numpy as np

from ..data import Dataset


class ModelError(ValueError):
    pass


def design(data, feature_names_in) -> np.ndarray:
    """Full-width feature matrix from a Dataset or an array, checked for arity."""
    if isinstance(data, Dataset):
        try:
            return data.columns(feature_names_in)
        except ValueError as exc:
            raise ModelError(f"dataset lacks a model feature: {exc}") from None
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if len(feature_names_in) > 1 or X.size == 1 else X.reshape(-1, 1)
    if X.shape[1] != len(feature_names_in):
        raise ModelError(f"expected {len(feature_names_in)} features, got {X.shape[1]}")
    return X


def kfold(n: int, folds: int, seed: int):
    """Shuffled k-fold index pairs, deterministic in ``seed``."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if n < folds:
        raise ValueError(f"{n} samples cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    for k in range(folds):
        test = np.sort(parts[k])
        train = np.sort(np.concatenate([parts[i] for i in range(folds) if i != k]))
        yield train, test


def rmse(y, yhat) -> float:
    return float(np.sqrt(np.mean((np.asarray(y) - np.asarray(yhat)) ** 2)))
