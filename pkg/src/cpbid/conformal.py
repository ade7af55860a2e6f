"""Split conformal regressors and predictive systems (methods M1-M5).

=====  ===========  ========  ====
name   normalized   mondrian  cps
=====  ===========  ========  ====
M1     no           no        no
M2     yes (KNN)    no        no
M3     yes (KNN)    yes       no
M4     yes (KNN)    no        yes
M5     yes (KNN)    yes       yes
=====  ===========  ========  ====

Normalized methods divide calibration residuals by a KNN difficulty estimate
``sigma``. Mondrian methods calibrate separately inside equal-population bins
of the point prediction. CPS methods keep the signed residuals and produce a
full conformal predictive distribution per test point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .models import KnnIndex

__all__ = [
    "METHODS",
    "ConformalError",
    "ConformalConfig",
    "MondrianBinning",
    "ConformalPredictor",
    "ConformalInterval",
    "Cpd",
    "calibrate",
    "qhat",
    "interval_at",
    "cpd_at",
    "quantile_at",
    "predictor_to_dict",
    "predictor_from_dict",
]

METHODS = {
    "M1": (False, False, False),
    "M2": (True, False, False),
    "M3": (True, True, False),
    "M4": (True, False, True),
    "M5": (True, True, True),
}

EXPORT_FORMAT = "cpbid-conformal"
EXPORT_VERSION = 1


class ConformalError(ValueError):
    pass


@dataclass(frozen=True)
class ConformalConfig:
    normalized: bool = False
    mondrian: bool = False
    cps: bool = False
    k: int = 50
    n_bins: int = 15

    def __post_init__(self):
        if self.k < 1:
            raise ConformalError("k must be at least 1")
        if self.n_bins < 1:
            raise ConformalError("n_bins must be at least 1")

    @classmethod
    def method(cls, name: str, k: int = 50, n_bins: int = 15) -> "ConformalConfig":
        try:
            normalized, mondrian, cps = METHODS[name.upper()]
        except KeyError:
            raise ConformalError(f"unknown conformal method {name!r}") from None
        return cls(normalized, mondrian, cps, k, n_bins)

    @property
    def name(self) -> str:
        for nm, flags in METHODS.items():
            if flags == (self.normalized, self.mondrian, self.cps):
                return nm
        return "custom"


@dataclass(frozen=True, eq=False)
class MondrianBinning:
    """Equal-population bins of calibration predictions.

    ``edges[b]`` is the largest calibration prediction in bin ``b``; a value
    equal to an edge belongs to the lower bin and values outside the
    calibrated range fall into the nearest extreme bin.
    """

    edges: np.ndarray
    n_bins: int

    @classmethod
    def fit(cls, yhat, n_bins: int):
        yhat = np.asarray(yhat, dtype=float)
        if len(yhat) < n_bins:
            raise ConformalError(
                f"{len(yhat)} calibration points cannot fill {n_bins} bins; use fewer bins")
        order = np.argsort(yhat, kind="stable")
        groups = np.array_split(order, n_bins)
        labels = np.empty(len(yhat), dtype=np.int64)
        for b, g in enumerate(groups):
            labels[g] = b
        edges = np.array([yhat[g].max() for g in groups[:-1]])
        return cls(edges, n_bins), labels

    def assign(self, yhat) -> np.ndarray:
        return np.searchsorted(self.edges, np.asarray(yhat, dtype=float), side="left")


@dataclass(frozen=True)
class ConformalInterval:
    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    def clamped(self, lo: float = 0.0, hi: float = 1.0) -> "ConformalInterval":
        return ConformalInterval(np.clip(self.lower, lo, hi), np.clip(self.upper, lo, hi), self.alpha)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass(frozen=True, eq=False)
class Cpd:
    """Conformal predictive distribution: ``F(y) = #{values <= y} / (n + 1)``."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values)

    def cdf(self, y):
        return np.searchsorted(self.values, y, side="right") / (self.n + 1)

    def quantile(self, tau):
        return self.values[_rank(self.n, np.asarray(tau, dtype=float)) - 1]


def _rank(n: int, level) -> np.ndarray:
    """1-based rank ``ceil((n + 1) * level)`` clipped to ``[1, n]``."""
    r = np.ceil((n + 1) * np.asarray(level, dtype=float) - 1e-9).astype(np.int64)
    return np.clip(r, 1, n)


def qhat(scores, alpha: float) -> float:
    """The ``ceil((n + 1)(1 - alpha))``-th smallest score (largest if out of range)."""
    s = np.sort(np.asarray(scores, dtype=float))
    if s.size == 0:
        raise ConformalError("no calibration scores")
    if not 0.0 < alpha < 1.0:
        raise ConformalError(f"alpha must lie in (0, 1), got {alpha}")
    return float(s[_rank(s.size, 1.0 - alpha) - 1])


@dataclass(eq=False)
class ConformalPredictor:
    config: ConformalConfig
    model: object
    scores: tuple  # sorted score array per bin
    binning: MondrianBinning | None = None
    knn: KnnIndex | None = None
    feature_names: tuple = ()
    model_ref: str = ""
    calibration_size: int = 0

    @property
    def name(self) -> str:
        return self.config.name

    def _X(self, data) -> np.ndarray:
        if isinstance(data, Dataset):
            return data.columns(self.feature_names) if self.feature_names else data.X
        return np.atleast_2d(np.asarray(data, dtype=float))

    def point(self, data) -> np.ndarray:
        return np.asarray(self.model.predict(data), dtype=float)

    def sigma(self, data) -> np.ndarray:
        if self.knn is None:
            return np.ones(len(self._X(data)))
        return self.knn.sigma(self._X(data))

    def bins(self, yhat) -> np.ndarray:
        if self.binning is None:
            return np.zeros(len(yhat), dtype=np.int64)
        return self.binning.assign(yhat)

    def _prepare(self, data):
        if self.model is None:
            raise ConformalError("predictor has no point model attached")
        yhat = self.point(data)
        return yhat, self.sigma(data), self.bins(yhat)

    def quantiles(self, data, taus) -> np.ndarray:
        """``(n_points, len(taus))`` quantile matrix."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if np.any((taus <= 0) | (taus >= 1)):
            raise ConformalError("quantile levels must lie in (0, 1)")
        yhat, sig, b = self._prepare(data)
        out = np.empty((len(yhat), taus.size))
        for bi in np.unique(b):
            rows = b == bi
            s = self.scores[bi]
            if self.config.cps:
                off = s[_rank(s.size, taus) - 1]
            else:
                off = np.zeros(taus.size)
                lo, hi = taus < 0.5, taus > 0.5
                off[lo] = -s[_rank(s.size, 1.0 - 2.0 * taus[lo]) - 1]
                off[hi] = s[_rank(s.size, 1.0 - 2.0 * (1.0 - taus[hi])) - 1]
            out[rows] = yhat[rows, None] + sig[rows, None] * off[None, :]
        return out

    def interval_matrix(self, data, alphas):
        """Lower and upper bounds, each ``(n_points, len(alphas))``, in one pass."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        if np.any((alphas <= 0) | (alphas >= 1)):
            raise ConformalError("alpha must lie in (0, 1)")
        yhat, sig, b = self._prepare(data)
        lower = np.empty((len(yhat), alphas.size))
        upper = np.empty_like(lower)
        for bi in np.unique(b):
            rows = b == bi
            s = self.scores[bi]
            if self.config.cps:
                lo_off = s[_rank(s.size, alphas / 2.0) - 1]
                hi_off = s[_rank(s.size, 1.0 - alphas / 2.0) - 1]
            else:
                hi_off = s[_rank(s.size, 1.0 - alphas) - 1]
                lo_off = -hi_off
            lower[rows] = yhat[rows, None] + sig[rows, None] * lo_off[None, :]
            upper[rows] = yhat[rows, None] + sig[rows, None] * hi_off[None, :]
        return lower, upper

    def interval(self, data, alpha: float) -> ConformalInterval:
        lower, upper = self.interval_matrix(data, [alpha])
        return ConformalInterval(lower[:, 0], upper[:, 0], float(alpha))

    def cpd(self, data) -> list:
        if not self.config.cps:
            raise ConformalError(f"method {self.name} is not a predictive system; no CPD")
        yhat, sig, b = self._prepare(data)
        return [Cpd(yhat[i] + sig[i] * self.scores[b[i]]) for i in range(len(yhat))]


def calibrate(model, calibration: Dataset, config: ConformalConfig,
              reference: Dataset | None = None, model_ref: str = "") -> ConformalPredictor:
    """Calibrate ``model`` on ``calibration`` according to ``config``.

    ``reference`` (usually the training set) supplies the feature means and
    standard deviations for the KNN distance; the calibration set is used
    when it is omitted. Calibration points get leave-one-out KNN sigmas.
    """
    if len(calibration) == 0:
        raise ConformalError("empty calibration set")
    yhat = np.asarray(model.predict(calibration), dtype=float)
    resid = calibration.pv - yhat
    names = calibration.feature_names
    knn = None
    sig = np.ones(len(resid))
    if config.normalized:
        if config.k > len(resid) - 1:
            raise ConformalError(f"k={config.k} needs more than {len(resid)} calibration points")
        ref = reference if reference is not None else calibration
        knn = KnnIndex.build(ref.columns(names), calibration.X, np.abs(resid), config.k)
        sig = knn.sigma_calibration()
    scores = (resid if config.cps else np.abs(resid)) / sig
    binning = None
    labels = np.zeros(len(resid), dtype=np.int64)
    if config.mondrian:
        binning, labels = MondrianBinning.fit(yhat, config.n_bins)
    n_groups = config.n_bins if config.mondrian else 1
    per_bin = []
    for b in range(n_groups):
        s = np.sort(scores[labels == b])
        if s.size == 0:
            raise ConformalError(f"bin {b} is empty; use fewer bins")
        s.setflags(write=False)
        per_bin.append(s)
    return ConformalPredictor(config, model, tuple(per_bin), binning, knn, names, model_ref,
                              len(resid))


def interval_at(cp: ConformalPredictor, features, alpha: float) -> ConformalInterval:
    return cp.interval(features, alpha)


def cpd_at(cp: ConformalPredictor, features) -> Cpd:
    """CPD of a single test point."""
    out = cp.cpd(features)
    if len(out) != 1:
        raise ConformalError(f"cpd_at expects one point, got {len(out)}; use ConformalPredictor.cpd")
    return out[0]


def quantile_at(cp: ConformalPredictor, features, tau):
    """``tau``-quantile per point; a matrix when ``tau`` is a sequence."""
    q = cp.quantiles(features, tau)
    return q[:, 0] if np.ndim(tau) == 0 else q


def predictor_to_dict(cp: ConformalPredictor) -> dict:
    """JSON-ready calibration state. The point model is referenced, not embedded."""
    d = {
        "format": EXPORT_FORMAT,
        "version": EXPORT_VERSION,
        "method": cp.name,
        "config": {"normalized": cp.config.normalized, "mondrian": cp.config.mondrian,
                   "cps": cp.config.cps, "k": cp.config.k, "n_bins": cp.config.n_bins},
        "model_ref": cp.model_ref,
        "feature_names": list(cp.feature_names),
        "calibration_size": cp.calibration_size,
        "bin_edges": None if cp.binning is None else cp.binning.edges.tolist(),
        "scores": [s.tolist() for s in cp.scores],
        "knn": None,
    }
    if cp.knn is not None:
        d["knn"] = {"k": cp.knn.k, "columns": list(cp.knn.columns), "mean": cp.knn.mean.tolist(),
                    "std": cp.knn.std.tolist(), "points": cp.knn.points.tolist(),
                    "residuals": cp.knn.residuals.tolist()}
    return d


def predictor_from_dict(d: dict, model=None) -> ConformalPredictor:
    if d.get("format") != EXPORT_FORMAT or d.get("version") != EXPORT_VERSION:
        raise ConformalError("not a supported conformal predictor export")
    cfg = ConformalConfig(**d["config"])
    binning = None
    if d["bin_edges"] is not None:
        binning = MondrianBinning(np.asarray(d["bin_edges"], dtype=float), cfg.n_bins)
    knn = None
    if d["knn"] is not None:
        k = d["knn"]
        knn = KnnIndex(np.asarray(k["mean"]), np.asarray(k["std"]),
                       np.asarray(k["points"], dtype=float).reshape(len(k["residuals"]), -1),
                       np.asarray(k["residuals"]), k["k"], tuple(k["columns"]))
    scores = tuple(np.asarray(s, dtype=float) for s in d["scores"])
    return ConformalPredictor(cfg, model, scores, binning, knn, tuple(d["feature_names"]),
                              d.get("model_ref", ""), d.get("calibration_size", 0))


def dumps(cp: ConformalPredictor) -> str:
    return json.dumps(predictor_to_dict(cp))


def loads(text: str, model=None) -> ConformalPredictor:
    return predictor_from_dict(json.loads(text), model)
