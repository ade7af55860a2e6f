"""PV quantile scenarios and the predictor interface used by the strategies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..conformal import ConformalPredictor
from ..data import Dataset, PriceSeries
from ..models import QuantileModel
from .clustering import DeltaClusterSet, MarketError


def scenario_levels(n: int = 99) -> np.ndarray:
    """``n`` equally spaced levels ``k / (n + 1)``; 0.01..0.99 for ``n = 99``."""
    if n < 1:
        raise MarketError("need at least one scenario")
    return np.arange(1, n + 1) / (n + 1.0)


def point_forecast(predictor, data) -> np.ndarray:
    """Unclamped point prediction (median for quantile models)."""
    if isinstance(predictor, ConformalPredictor):
        return predictor.point(data)
    return np.asarray(predictor.predict(data), dtype=float)


def quantile_forecast(predictor, data, taus) -> np.ndarray:
    """``(n, len(taus))`` quantile predictions, unclamped.

    Plain point models have no spread, so every level returns the point.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if isinstance(predictor, ConformalPredictor):
        return predictor.quantiles(data, taus)
    if isinstance(predictor, QuantileModel):
        return predictor.predict_quantile(data, taus).reshape(-1, taus.size)
    return np.repeat(point_forecast(predictor, data)[:, None], taus.size, axis=1)


def method_label(predictor) -> str:
    if isinstance(predictor, ConformalPredictor):
        return predictor.name
    if isinstance(predictor, QuantileModel):
        return "LQR"
    return "point"


@dataclass(frozen=True, eq=False)
class ScenarioMatrix:
    """``pred[t, n]``: sorted PV scenarios in [0, 1]; ``dam[t]``; shared price clusters."""

    timestamps: np.ndarray
    pred: np.ndarray
    dam: np.ndarray
    clusters: DeltaClusterSet
    method: str = ""

    def __post_init__(self):
        pred = np.atleast_2d(np.asarray(self.pred, dtype=float)).copy()
        dam = np.asarray(self.dam, dtype=float).copy()
        ts = np.asarray(self.timestamps).astype("datetime64[s]").copy()
        if not (len(pred) == len(dam) == len(ts)):
            raise MarketError("scenario rows, prices and timestamps must align")
        if np.any(pred < 0) or np.any(pred > 1) or np.any(np.diff(pred, axis=1) < 0):
            raise MarketError("scenarios must be sorted per timestep and lie in [0, 1]")
        for a in (pred, dam, ts):
            a.setflags(write=False)
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "dam", dam)
        object.__setattr__(self, "timestamps", ts)

    @property
    def n_steps(self) -> int:
        return self.pred.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.pred.shape[1]

    def window(self, start: int, stop: int) -> "ScenarioMatrix":
        return ScenarioMatrix(self.timestamps[start:stop], self.pred[start:stop], self.dam[start:stop],
                              self.clusters, self.method)


def build_scenarios(predictor, test: Dataset, prices: PriceSeries, clusters: DeltaClusterSet,
                    n_scenarios: int = 99) -> ScenarioMatrix:
    """Quantile scenarios at ``scenario_levels(n_scenarios)`` for every test hour."""
    q = quantile_forecast(predictor, test, scenario_levels(n_scenarios))
    q = np.clip(np.sort(q, axis=1), 0.0, 1.0)
    dam = prices.align(test.timestamps).dam
    return ScenarioMatrix(test.timestamps, q, dam, clusters, method_label(predictor))
