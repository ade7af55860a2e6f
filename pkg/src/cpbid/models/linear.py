"""Ordinary least squares (SLR/MLR) and forward subset selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ._common import ModelError, design, kfold, rmse


@dataclass(frozen=True, eq=False)
class LinearModel:
    """``intercept + coefficients @ x[selected_features]``.

    ``feature_names_in`` lists the columns an input array must have; it
    defaults to ``selected_features``.
    """

    intercept: float
    coefficients: tuple
    selected_features: tuple
    feature_names_in: tuple | None = None
    residuals: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        coef = tuple(float(c) for c in np.atleast_1d(np.asarray(self.coefficients, dtype=float)))
        sel = tuple(self.selected_features)
        if len(coef) != len(sel):
            raise ModelError(f"{len(coef)} coefficients for {len(sel)} selected features")
        names_in = sel if self.feature_names_in is None else tuple(self.feature_names_in)
        missing = [f for f in sel if f not in names_in]
        if missing:
            raise ModelError(f"selected features not among inputs: {missing}")
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "selected_features", sel)
        object.__setattr__(self, "feature_names_in", names_in)

    def predict(self, data) -> np.ndarray:
        if isinstance(data, Dataset):
            X = data.columns(self.selected_features)
        else:
            full = design(data, self.feature_names_in)
            X = full[:, [self.feature_names_in.index(f) for f in self.selected_features]]
        return self.intercept + X @ np.asarray(self.coefficients)


def _collinear(Z: np.ndarray, names) -> list:
    """Names of columns that add no rank to the columns before them."""
    out, rank = [], 0
    for k in range(Z.shape[1]):
        r = np.linalg.matrix_rank(Z[:, : k + 1])
        if r == rank:
            out.append(names[k])
        rank = r
    return out


def _ols(X: np.ndarray, y: np.ndarray):
    Z = np.column_stack([np.ones(len(y)), X])
    beta, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    return beta, rank, Z


def fit_ols(train: Dataset, features=None) -> LinearModel:
    """Least-squares fit of ``pv`` on ``features`` (all features if None).

    Raises :class:`ModelError` naming the offending columns when the design
    (with intercept) is rank deficient.
    """
    features = tuple(train.feature_names if features is None else features)
    X = train.columns(features) if features else np.empty((len(train), 0))
    beta, rank, Z = _ols(X, train.pv)
    if rank < Z.shape[1]:
        bad = _collinear(Z, ("intercept",) + features)
        raise ModelError(f"rank-deficient design; collinear column(s): {', '.join(bad)}")
    resid = train.pv - Z @ beta
    return LinearModel(beta[0], beta[1:], features, train.feature_names, resid)


def _cv_rmse(X: np.ndarray, y: np.ndarray, folds: int, seed: int) -> float:
    scores = []
    for tr, te in kfold(len(y), folds, seed):
        beta, rank, Z = _ols(X[tr], y[tr])
        if rank < Z.shape[1]:
            return np.inf
        pred = beta[0] + X[te] @ beta[1:]
        scores.append(rmse(y[te], pred))
    return float(np.mean(scores))


def forward_subset_select(train: Dataset, folds: int = 10, max_features: int | None = None,
                          seed: int = 0, candidates=None) -> tuple:
    """Greedy forward selection by mean k-fold CV RMSE of an OLS fit.

    Starts from the intercept-only model and adds the feature with the lowest
    CV RMSE while that strictly improves on the current subset. Ties go to
    the earlier feature in ``candidates`` order.
    """
    names = tuple(train.feature_names if candidates is None else candidates)
    limit = len(names) if max_features is None else min(max_features, len(names))
    y = train.pv
    chosen: list = []
    best = _cv_rmse(np.empty((len(y), 0)), y, folds, seed)
    tol = 1e-9 * max(float(np.std(y)), 1e-300)
    while len(chosen) < limit:
        step_best, step_feat = np.inf, None
        for f in names:
            if f in chosen:
                continue
            score = _cv_rmse(train.columns(chosen + [f]), y, folds, seed)
            if score < step_best:
                step_best, step_feat = score, f
        # gains at rounding level (e.g. an exact fit already) do not count
        if step_feat is None or not step_best < best - tol:
            break
        chosen.append(step_feat)
        best = step_best
    return tuple(chosen)
