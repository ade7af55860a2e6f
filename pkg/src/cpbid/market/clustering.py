"""k-means clustering of imbalance price deltas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import PriceSeries


class MarketError(ValueError):
    """Invalid market input (prices, clusters, scenarios or bids)."""


def kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability ~ squared distance."""
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise MarketError("not enough distinct points for k-means++ seeding")
        i = int(rng.choice(n, p=d2 / total))
        centers.append(points[i])
        d2 = np.minimum(d2, np.sum((points - points[i]) ** 2, axis=1))
    return np.array(centers)


def _assign(points, centers):
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1), d2


def kmeans(points, k: int, seed: int = 0, tol: float = 1e-8, max_iter: int = 300):
    """Lloyd iterations from a k-means++ start.

    Stops when no centroid moves by ``tol`` or more, or after ``max_iter``
    iterations. An emptied cluster is re-seeded at the point farthest from
    its current centroid. Returns ``(centers, labels)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise MarketError("k-means needs a non-empty 2-D point array")
    rng = np.random.default_rng(seed)
    centers = kmeans_pp_init(pts, k, rng)
    labels, d2 = _assign(pts, centers)
    for _ in range(max_iter):
        new = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = pts[members].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(len(pts)), labels]))
                new[j] = pts[far]
        shift = np.max(np.sqrt(np.sum((new - centers) ** 2, axis=1)))
        centers = new
        labels, d2 = _assign(pts, centers)
        if shift < tol:
            break
    return centers, labels


@dataclass(frozen=True, eq=False)
class DeltaClusterSet:
    """Price-delta scenarios: ``delta_up = rtm_up - dam``, ``delta_down = dam - rtm_down``.

    ``weights`` are member counts, so ``total_weight`` equals the number
    of clustered hours.
    """

    delta_up: np.ndarray
    delta_down: np.ndarray
    weights: np.ndarray
    merged: int = 0

    def __post_init__(self):
        up, down, w = (np.asarray(v, dtype=float).copy() for v in (self.delta_up, self.delta_down, self.weights))
        if not (up.shape == down.shape == w.shape) or up.ndim != 1 or up.size == 0:
            raise MarketError("cluster arrays must be non-empty and equally long")
        if np.any(w <= 0):
            raise MarketError("cluster weights must be positive")
        for a in (up, down, w):
            a.setflags(write=False)
        object.__setattr__(self, "delta_up", up)
        object.__setattr__(self, "delta_down", down)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    @property
    def valid(self) -> bool:
        return bool(np.all(self.delta_up + self.delta_down > 0))

    def expected_deltas(self) -> tuple:
        """Weight-averaged ``(delta_up, delta_down)``."""
        p = self.probabilities
        return float(p @ self.delta_up), float(p @ self.delta_down)


def merge_invalid(centers: np.ndarray, weights: np.ndarray):
    """Fold clusters with ``delta_up + delta_down <= 0`` into the nearest valid one.

    The valid centroid is kept and the weights are summed. Returns
    ``(centers, weights, n_merged)``.
    """
    ok = centers.sum(axis=1) > 0
    if not ok.any():
        raise MarketError("no cluster has delta_up + delta_down > 0")
    keep = np.flatnonzero(ok)
    w = weights[keep].astype(float).copy()
    for j in np.flatnonzero(~ok):
        d2 = np.sum((centers[keep] - centers[j]) ** 2, axis=1)
        w[int(np.argmin(d2))] += weights[j]
    return centers[keep], w, int((~ok).sum())


def cluster_deltas(prices: PriceSeries, n_clusters: int = 20, seed: int = 0) -> DeltaClusterSet:
    """Cluster the hourly ``(delta_up, delta_down)`` pairs of ``prices``."""
    if n_clusters < 1:
        raise MarketError("need at least one cluster")
    pts = np.column_stack([prices.delta_up, prices.delta_down])
    n_distinct = len(np.unique(pts, axis=0))
    if n_distinct < n_clusters:
        raise MarketError(f"{n_distinct} distinct delta points, fewer than {n_clusters} clusters")
    centers, labels = kmeans(pts, n_clusters, seed)
    weights = np.bincount(labels, minlength=n_clusters).astype(float)
    nonempty = weights > 0
    centers, weights, n_merged = merge_invalid(centers[nonempty], weights[nonempty])
    return DeltaClusterSet(centers[:, 0], centers[:, 1], weights, n_merged)
