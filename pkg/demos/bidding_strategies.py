"""Backtest the bidding strategies for one conformal method.

Run: python demos/bidding_strategies.py
"""

import numpy as np

from cpbid.conformal import ConformalConfig, calibrate
from cpbid.data import SplitSpec, preprocess, split, synth_generate
from cpbid.market import (NewsvendorConstraint, backtest, build_scenarios, cluster_deltas,
                          strategy_eum, strategy_eum_cvar, strategy_newsvendor, strategy_perfect,
                          strategy_trust, strategy_worst_case)
from cpbid.models import fit_rfr

train_end, cal_end = np.datetime64("2015-01-01"), np.datetime64("2016-01-01")
ds, prices = synth_generate(seed=1, days=3 * 365, no_arbitrage=True)
train, cal, test = split(preprocess(ds), SplitSpec(train_end, cal_end))
pred = calibrate(fit_rfr(train, n_trees=30, seed=0), cal, ConformalConfig.method("M5"), reference=train)

clusters = cluster_deltas(prices.between(train_end, cal_end), 20, seed=0)
scen = build_scenarios(pred, test, prices, clusters)
test_prices = prices.align(test.timestamps)

schedules = [
    strategy_perfect(test),
    strategy_trust(pred, test),
    strategy_worst_case(pred, test),
    strategy_newsvendor(pred, test, clusters),
    strategy_newsvendor(pred, test, clusters, NewsvendorConstraint("dec", 0.1)),
    strategy_eum(scen),
    strategy_eum_cvar(scen, gamma=0.6, beta=0.1, window=168),
]
print(f"{'strategy':20} {'profit EUR':>11} {'imbalance %':>12}")
for s in schedules:
    r = backtest(s, test.pv, test_prices)
    print(f"{s.strategy:20} {r.profit:11.1f} {r.imbalance_pct:12.1f}")
