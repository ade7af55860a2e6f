"""Quantity-bidding strategies for the day-ahead market."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from .clustering import DeltaClusterSet, MarketError
from .scenarios import ScenarioMatrix, method_label, point_forecast, quantile_forecast

FRACTILE_BOUNDS = (0.01, 0.99)
WORST_CASE_TAU = 0.05


@dataclass(frozen=True, eq=False)
class BidSchedule:
    """Hourly quantity bids ``p_t`` in [0, 1] (fraction of capacity)."""

    timestamps: np.ndarray
    bids: np.ndarray
    strategy: str
    method: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.bids, dtype=float).copy()
        ts = np.asarray(self.timestamps).astype("datetime64[s]").copy()
        if b.shape != ts.shape:
            raise MarketError("one bid per timestamp")
        if np.any(~np.isfinite(b)) or np.any(b < 0) or np.any(b > 1):
            raise MarketError("bids must lie in [0, 1]")
        b.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "bids", b)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.bids.size


def _schedule(test: Dataset, bids, strategy: str, predictor=None, method=None, **info) -> BidSchedule:
    label = method if method is not None else method_label(predictor)
    return BidSchedule(test.timestamps, np.clip(bids, 0.0, 1.0), strategy, label, info)


def strategy_trust(predictor, test: Dataset) -> BidSchedule:
    """Bid the median of the predictive distribution."""
    q = quantile_forecast(predictor, test, [0.5])[:, 0]
    return _schedule(test, q, "trust", predictor)


def strategy_worst_case(predictor, test: Dataset, tau: float = WORST_CASE_TAU) -> BidSchedule:
    """Bid a low quantile (the lower end of the 90% interval by default)."""
    q = quantile_forecast(predictor, test, [tau])[:, 0]
    return _schedule(test, q, "worst_case", predictor, tau=tau)


def newsvendor_fractile(delta_up, delta_down):
    """Critical fractile ``delta_down / (delta_down + delta_up)`` clipped to [0.01, 0.99]."""
    up = np.asarray(delta_up, dtype=float)
    down = np.asarray(delta_down, dtype=float)
    den = up + down
    if np.any(den <= 0):
        raise MarketError("critical fractile needs delta_up + delta_down > 0")
    out = np.clip(down / den, *FRACTILE_BOUNDS)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NewsvendorConstraint:
    """``kind="prob"``: each fractile kept within ``0.5 +- c``.
    ``kind="dec"``: the bid kept within ``yhat * (1 +- c)``.
    """

    kind: str
    c: float

    def __post_init__(self):
        if self.kind not in ("prob", "dec"):
            raise MarketError(f"unknown constraint kind {self.kind!r}; use 'prob' or 'dec'")
        if self.c < 0 or (self.kind == "prob" and self.c > 0.5):
            raise MarketError(f"constraint width {self.c} out of range for {self.kind!r}")

    @property
    def label(self) -> str:
        return f"{self.kind}{round(100 * self.c):g}"


def newsvendor_level(clusters: DeltaClusterSet, constraint: NewsvendorConstraint | None = None) -> float:
    """Weight-averaged critical fractile over the price clusters."""
    nv = np.atleast_1d(newsvendor_fractile(clusters.delta_up, clusters.delta_down))
    if constraint is not None and constraint.kind == "prob":
        nv = np.clip(nv, 0.5 - constraint.c, 0.5 + constraint.c)
    return float(clusters.weights @ nv / clusters.total_weight)


def strategy_newsvendor(predictor, test: Dataset, clusters: DeltaClusterSet,
                        constraint: NewsvendorConstraint | None = None) -> BidSchedule:
    tau = newsvendor_level(clusters, constraint)
    p = quantile_forecast(predictor, test, [tau])[:, 0]
    if constraint is not None and constraint.kind == "dec":
        yhat = point_forecast(predictor, test)
        a, b = yhat * (1 - constraint.c), yhat * (1 + constraint.c)
        p = np.clip(p, np.minimum(a, b), np.maximum(a, b))
    name = "newsvendor" if constraint is None else f"newsvendor_{constraint.label}"
    return _schedule(test, p, name, predictor, tau=tau)


def strategy_perfect(test: Dataset) -> BidSchedule:
    """Bid the realized output."""
    return BidSchedule(test.timestamps, np.clip(test.pv, 0.0, 1.0), "perfect", "actual")


def scenario_profits(scen: ScenarioMatrix, bids) -> np.ndarray:
    """Profit of every ``(t, c, n)`` price/PV scenario at ``bids``."""
    p = np.asarray(bids, dtype=float)[:, None, None]
    x = scen.pred[:, None, :]
    dam = scen.dam[:, None, None]
    up = scen.clusters.delta_up[None, :, None]
    down = scen.clusters.delta_down[None, :, None]
    return (p * dam - np.maximum(p - x, 0.0) * (dam + up)
            + np.maximum(x - p, 0.0) * (dam - down))


def expected_profit(scen: ScenarioMatrix, bids) -> np.ndarray:
    """Per-timestep expected profit (cluster weights, equiprobable PV scenarios)."""
    pr = scenario_profits(scen, bids)
    return np.einsum("tcn,c->t", pr, scen.clusters.probabilities) / scen.n_scenarios


def eum_candidates(scen: ScenarioMatrix):
    """Candidate bids ``[0, pred_1..pred_N, 1]`` and the expected profit at each.

    Expected profit is piecewise linear in the bid with kinks at the
    scenarios, so one of these candidates is optimal. Sums over scenarios
    use prefix sums; ties between equal scenarios contribute zero.
    """
    x = scen.pred
    T, N = x.shape
    u_bar, d_bar = scen.clusters.expected_deltas()
    dam = scen.dam[:, None]
    S = np.concatenate([np.zeros((T, 1)), np.cumsum(x, axis=1)], axis=1)
    j = np.arange(N)[None, :]
    deficit = j * x - S[:, :N]
    surplus = (S[:, N:] - S[:, :N]) - (N - j) * x
    cand = np.concatenate([np.zeros((T, 1)), x, np.ones((T, 1))], axis=1)
    deficit = np.concatenate([np.zeros((T, 1)), deficit, N - S[:, N:]], axis=1)
    surplus = np.concatenate([S[:, N:], surplus, np.zeros((T, 1))], axis=1)
    value = dam * cand - (dam + u_bar) * deficit / N + (dam - d_bar) * surplus / N
    return cand, value


def eum_bids(scen: ScenarioMatrix):
    """Exact per-timestep maximizer of expected profit; ties go to the smallest bid."""
    cand, value = eum_candidates(scen)
    best = value.max(axis=1, keepdims=True)
    tol = 1e-12 * np.maximum(1.0, np.abs(best))
    idx = np.argmax(value >= best - tol, axis=1)
    rows = np.arange(len(cand))
    return cand[rows, idx], value[rows, idx]


def strategy_eum(scen: ScenarioMatrix) -> BidSchedule:
    p, val = eum_bids(scen)
    return BidSchedule(scen.timestamps, p, "eum", scen.method,
                       {"expected_profit": float(val.mean())})
