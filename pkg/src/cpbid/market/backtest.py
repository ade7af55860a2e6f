"""Settlement of bid schedules against realized output and prices."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from ..data import PriceSeries
from .clustering import MarketError
from .strategies import BidSchedule


@dataclass(frozen=True, eq=False)
class BacktestReport:
    """Realized profit in EUR and imbalance as % of produced energy.

    The per-hour ledger holds ``revenue = p * dam``,
    ``deficit_cost = max(p - actual, 0) * rtm_up`` and
    ``surplus_revenue = max(actual - p, 0) * rtm_down``, all scaled by
    ``capacity_mw``.
    """

    strategy: str
    method: str
    profit: float
    imbalance_pct: float
    revenue: np.ndarray
    deficit_cost: np.ndarray
    surplus_revenue: np.ndarray
    capacity_mw: float = 1.0

    @property
    def hourly_profit(self) -> np.ndarray:
        return self.revenue - self.deficit_cost + self.surplus_revenue

    def summary(self) -> dict:
        return {"strategy": self.strategy, "cp_method": self.method,
                "profit": self.profit, "imbalance_pct": self.imbalance_pct}


def backtest(bids: BidSchedule, actuals, prices: PriceSeries, capacity_mw: float = 1.0) -> BacktestReport:
    a = np.asarray(actuals, dtype=float)
    p = bids.bids
    if not (len(p) == len(a) == len(prices)):
        raise MarketError(f"misaligned lengths: {len(p)} bids, {len(a)} actuals, {len(prices)} prices")
    if len(prices) and not np.array_equal(prices.timestamps, bids.timestamps):
        raise MarketError("price timestamps do not match the bid schedule")
    total = a.sum()
    if total <= 0:
        raise MarketError("imbalance share undefined: no realized production")
    revenue = capacity_mw * p * prices.dam
    deficit = capacity_mw * np.maximum(p - a, 0.0) * prices.rtm_up
    surplus = capacity_mw * np.maximum(a - p, 0.0) * prices.rtm_down
    profit = float(np.sum(revenue - deficit + surplus))
    imb = float(100.0 * np.abs(p - a).sum() / total)
    return BacktestReport(bids.strategy, bids.method, profit, imb, revenue, deficit, surplus, capacity_mw)


def write_schedule_csv(report: BacktestReport, bids: BidSchedule, actuals, prices: PriceSeries, path) -> None:
    """One row per hour: ``timestamp, bid, actual, dam, rtm_up, rtm_down, profit``."""
    a = np.asarray(actuals, dtype=float)
    hp = report.hourly_profit
    ts = np.datetime_as_string(bids.timestamps, unit="s")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "bid", "actual", "dam", "rtm_up", "rtm_down", "profit"])
        for i in range(len(bids)):
            w.writerow([ts[i] + "Z", repr(float(bids.bids[i])), repr(float(a[i])),
                        repr(float(prices.dam[i])), repr(float(prices.rtm_up[i])),
                        repr(float(prices.rtm_down[i])), repr(float(hp[i]))])


def write_summary(reports, csv_path=None, json_path=None) -> None:
    """Profit/imbalance table: ``strategy, cp_method, profit, imbalance_pct``."""
    rows = [r.summary() for r in reports]
    cols = ["strategy", "cp_method", "profit", "imbalance_pct"]
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
