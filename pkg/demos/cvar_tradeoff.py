"""Trade expected profit against tail risk by sweeping beta on a small instance.

Both CVaR solvers are run so their objectives can be compared.

Run: python demos/cvar_tradeoff.py
"""

import numpy as np

from cpbid.market import DeltaClusterSet, ScenarioMatrix, cvar_exact, cvar_lp, cvar_objective

rng = np.random.default_rng(7)
T, N = 6, 9
pred = np.sort(rng.beta(2, 2, (T, N)), axis=1)
ts = np.datetime64("2016-06-01T10:00", "s") + np.arange(T) * np.timedelta64(3600, "s")
clusters = DeltaClusterSet([5.0, 40.0], [10.0, 2.0], [30.0, 10.0])
scen = ScenarioMatrix(ts, pred, rng.uniform(30, 60, T), clusters)

print(f"{'beta':>5} {'E[profit]':>10} {'CVaR':>8} {'lp obj':>9} {'exact obj':>10}  bids")
for beta in (0.0, 0.25, 0.5, 0.75, 1.0):
    p, info = cvar_lp(scen, 0.8, beta)
    _, ex = cvar_exact(scen, 0.8, beta)
    t = cvar_objective(scen, p, 0.8, beta)
    print(f"{beta:5.2f} {t['expected']:10.3f} {t['cvar']:8.3f} {info['objective']:9.4f} "
          f"{ex['objective']:10.4f}  {np.round(p, 3)}")
