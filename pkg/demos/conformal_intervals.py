"""Compare interval widths and coverage of M1-M5 on one synthetic year.

Run: python demos/conformal_intervals.py
"""

import numpy as np

from cpbid.conformal import ConformalConfig, calibrate
from cpbid.data import SplitSpec, preprocess, split, synth_generate
from cpbid.evaluation import coverage, wis
from cpbid.models import fit_rfr

ds, _ = synth_generate(seed=0, days=3 * 365)
train, cal, test = split(preprocess(ds), SplitSpec(np.datetime64("2015-01-01"), np.datetime64("2016-01-01")))
model = fit_rfr(train, n_trees=30, seed=0)

print(f"{'method':6} {'cov@0.1':>8} {'width@0.1':>10} {'WIS':>8}")
for m in ("M1", "M2", "M3", "M4", "M5"):
    pred = calibrate(model, cal, ConformalConfig.method(m), reference=train)
    iv = pred.interval(test, 0.1)
    print(f"{m:6} {coverage(pred, test, 0.1):8.3f} {np.mean(iv.width):10.4f} {wis(pred, test).wis:8.4f}")

# normalized methods widen intervals where neighbours were hard to predict
m2 = calibrate(model, cal, ConformalConfig.method("M2"), reference=train)
w = m2.interval(test, 0.1).width
yhat = m2.point(test)
lo, hi = yhat < np.quantile(yhat, 0.2), yhat > np.quantile(yhat, 0.8)
print(f"M2 mean width, lowest-fifth forecasts {w[lo].mean():.4f}, highest-fifth {w[hi].mean():.4f}")
