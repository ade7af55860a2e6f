"""Scores for point predictions and prediction intervals."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .models import QuantileModel

__all__ = [
    "WIS_ALPHAS",
    "IntervalScoreReport",
    "WisReport",
    "adjusted_r2",
    "interval_score",
    "interval_bounds",
    "wis",
    "coverage",
    "write_wis_reports",
]

# 0.02, 0.04, ..., 0.98
WIS_ALPHAS = tuple(round(0.02 * k, 2) for k in range(1, 50))


def adjusted_r2(y, yhat, p: int) -> float:
    """``1 - (1 - R^2)(n - 1)/(n - p - 1)`` for ``p`` predictors."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    n = y.size
    if n <= p + 1:
        raise ValueError(f"need more than {p + 1} observations, got {n}")
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("target has zero variance")
    r2 = 1.0 - float(np.sum((y - yhat) ** 2)) / sst
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def _penalty(lower, upper, y, alpha):
    lower, upper, y = (np.asarray(v, dtype=float) for v in (lower, upper, y))
    return (2.0 / alpha) * ((lower - y) * (y < lower) + (y - upper) * (y > upper))


def interval_score(lower, upper, y, alpha: float):
    """Width plus ``2/alpha`` times the distance by which ``y`` misses the interval."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    out = (np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
           + _penalty(lower, upper, y, alpha))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class IntervalScoreReport:
    alpha: float
    sharpness: float
    calibration_penalty: float

    @property
    def interval_score(self) -> float:
        return self.sharpness + self.calibration_penalty


@dataclass(frozen=True)
class WisReport:
    """Weighted interval score with weights ``alpha/2`` normalized to sum to one.

    ``sharpness`` and ``calibration`` are the same weighted means of the
    per-level components, so ``wis == sharpness + calibration``.
    """

    wis: float
    sharpness: float
    calibration: float
    per_alpha: tuple = field(repr=False)
    method: str = ""
    version: str = ""

    def as_row(self) -> dict:
        return {"method": self.method, "version": self.version, "wis": self.wis,
                "sharpness": self.sharpness, "calibration": self.calibration}


def interval_bounds(predictor, data, alphas):
    """``(lower, upper)`` matrices of shape ``(n, len(alphas))``.

    Quantile models use the ``alpha/2`` and ``1 - alpha/2`` levels; a crossed
    pair is reordered.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if isinstance(predictor, QuantileModel):
        lo = predictor.predict_quantile(data, alphas / 2.0).reshape(-1, alphas.size)
        hi = predictor.predict_quantile(data, 1.0 - alphas / 2.0).reshape(-1, alphas.size)
        return np.minimum(lo, hi), np.maximum(lo, hi)
    if hasattr(predictor, "interval_matrix"):
        return predictor.interval_matrix(data, alphas)
    raise TypeError(f"{type(predictor).__name__} does not produce intervals")


def wis(predictor, test: Dataset, alphas=WIS_ALPHAS, method: str = "", version: str = "",
        clamp: tuple | None = None) -> WisReport:
    """WIS of ``predictor`` on ``test`` over the ``alphas`` grid.

    ``clamp=(0, 1)`` clips bounds before scoring (bid-layer convention);
    by default raw bounds are scored.
    """
    if len(test) == 0:
        raise ValueError("empty test set")
    alphas = np.asarray(alphas, dtype=float)
    lower, upper = interval_bounds(predictor, test, alphas)
    if clamp is not None:
        lower, upper = np.clip(lower, *clamp), np.clip(upper, *clamp)
    y = test.pv
    reports = []
    for k, a in enumerate(alphas):
        width = float(np.mean(upper[:, k] - lower[:, k]))
        pen = float(np.mean(_penalty(lower[:, k], upper[:, k], y, a)))
        reports.append(IntervalScoreReport(float(a), width, pen))
    w = alphas / 2.0
    w = w / w.sum()
    sharp = float(sum(wk * r.sharpness for wk, r in zip(w, reports)))
    calib = float(sum(wk * r.calibration_penalty for wk, r in zip(w, reports)))
    return WisReport(sharp + calib, sharp, calib, tuple(reports), method, version)


def coverage(predictor, test: Dataset, alpha: float) -> float:
    """Fraction of test targets inside the ``alpha`` interval."""
    if len(test) == 0:
        raise ValueError("empty test set")
    lower, upper = interval_bounds(predictor, test, [alpha])
    y = test.pv
    return float(np.mean((y >= lower[:, 0]) & (y <= upper[:, 0])))


def write_wis_reports(reports, csv_path=None, json_path=None) -> None:
    """Table-style rows: ``method, version, wis, sharpness, calibration``."""
    rows = [r.as_row() for r in reports]
    cols = ["method", "version", "wis", "sharpness", "calibration"]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([r[c] if isinstance(r[c], str) else repr(r[c]) for c in cols])
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
