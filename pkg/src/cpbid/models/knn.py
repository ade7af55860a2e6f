"""K-nearest-neighbour difficulty estimates for normalized conformal scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class KnnIndex:
    """Standardized calibration features and their absolute residuals.

    Features are z-scored with the reference (training) mean and standard
    deviation. Zero-variance reference columns are left out of the index.
    """

    mean: np.ndarray
    std: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    k: int
    columns: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        res = np.abs(np.asarray(self.residuals, dtype=float))
        if len(res) == 0:
            raise ValueError("empty KNN index")
        if not 1 <= self.k <= len(res):
            raise ValueError(f"k must lie in [1, {len(res)}], got {self.k}")
        if np.any(np.asarray(self.std) <= 0):
            raise ValueError("indexed features need a positive standard deviation")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "residuals", res)
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))
        object.__setattr__(self, "_tree", cKDTree(pts))

    @classmethod
    def build(cls, reference_X, calibration_X, abs_residuals, k: int = 50) -> "KnnIndex":
        ref = np.asarray(reference_X, dtype=float)
        mean, std = ref.mean(axis=0), ref.std(axis=0)
        cols = np.flatnonzero(std > 0)
        cal = np.asarray(calibration_X, dtype=float)[:, cols]
        pts = (cal - mean[cols]) / std[cols]
        return cls(mean[cols], std[cols], pts, abs_residuals, k, tuple(cols))

    def standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X[:, list(self.columns)] - self.mean) / self.std

    def sigma(self, X) -> np.ndarray:
        """Mean |residual| of the k nearest calibration points (Euclidean)."""
        Z = self.standardize(X)
        _, idx = self._tree.query(Z, k=self.k)
        idx = np.asarray(idx).reshape(len(Z), self.k)
        return np.maximum(self.residuals[idx].mean(axis=1), SIGMA_FLOOR)

    def sigma_calibration(self) -> np.ndarray:
        """Leave-one-out sigma for the indexed calibration points themselves."""
        n = len(self.residuals)
        kk = min(self.k + 1, n)
        _, idx = self._tree.query(self.points, k=kk)
        idx = np.asarray(idx).reshape(n, kk)
        own = idx == np.arange(n)[:, None]
        # drop the point itself, or the farthest neighbour if a duplicate displaced it
        drop = np.where(own.any(axis=1), own.argmax(axis=1), kk - 1)
        keep = np.ones_like(idx, dtype=bool)
        if kk > self.k:
            keep[np.arange(n), drop] = False
        else:
            keep &= ~own
        res = np.where(keep, self.residuals[idx], 0.0)
        cnt = np.maximum(keep.sum(axis=1), 1)
        return np.maximum(res.sum(axis=1) / cnt, SIGMA_FLOOR)


def knn_sigma(index: KnnIndex, features) -> np.ndarray:
    return index.sigma(features)
