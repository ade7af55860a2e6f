"""Linear quantile regression (SLQR/MLQR) by pinball-loss linear programming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..lp import LpProblem, LpSolverError, solve_lp
from ._common import ModelError, design
from .linear import LinearModel

# The pinball optimum is a segment at levels where the fit jumps. Solving at
# tau - TAU_SHIFT picks its left end, the lower empirical quantile.
TAU_SHIFT = 1e-7


def pinball_loss(y, yhat, tau: float) -> float:
    r = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    return float(np.sum(np.maximum(tau * r, (tau - 1.0) * r)))


def _lqr_primal(Z: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    # min tau*1'u+ + (1-tau)*1'u-  s.t.  Z b + u+ - u- = y,  b free, u >= 0
    n, k = Z.shape
    A = np.hstack([Z, np.eye(n), -np.eye(n)])
    c = np.concatenate([np.zeros(k), np.full(n, tau), np.full(n, 1.0 - tau)])
    lower = np.concatenate([np.full(k, -np.inf), np.zeros(2 * n)])
    sol = solve_lp(LpProblem(c, A, ("=",) * n, y, lower, np.inf))
    if not sol.optimal:
        raise LpSolverError(f"quantile regression primal returned {sol.status}")
    return sol.x[:k]


def _lqr_dual(Z: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    # max y'a  s.t.  Z'a = (1-tau) Z'1,  0 <= a <= 1; coefficients are the row duals
    n, k = Z.shape
    t = max(tau - TAU_SHIFT, 0.5 * tau)
    prob = LpProblem(y, Z.T, ("=",) * k, (1.0 - t) * Z.sum(axis=0), np.zeros(n), np.ones(n),
                     maximize=True)
    sol = solve_lp(prob)
    if not sol.optimal:
        raise LpSolverError(f"quantile regression dual returned {sol.status}")
    return sol.duals


def fit_lqr(train: Dataset, features, tau: float, method: str = "dual") -> LinearModel:
    """Fit the ``tau`` conditional quantile as a linear function of ``features``.

    ``method="dual"`` solves the bounded dual (rows = number of
    coefficients), ``"primal"`` the slack-split primal (rows = samples).
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    features = tuple(features)
    X = train.columns(features) if features else np.empty((len(train), 0))
    Z = np.column_stack([np.ones(len(train)), X])
    if method == "dual":
        beta = _lqr_dual(Z, train.pv, tau)
    elif method == "primal":
        beta = _lqr_primal(Z, train.pv, tau)
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = train.pv - Z @ beta
    return LinearModel(beta[0], beta[1:], features, train.feature_names, resid)


@dataclass(frozen=True, eq=False)
class QuantileModel:
    """One linear quantile fit per level in ``taus``.

    Predictions at levels between fitted ones are linearly interpolated over
    the per-row sorted fitted quantiles, which also removes crossings.
    """

    taus: tuple
    models: tuple
    feature_names_in: tuple

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if len(taus) != len(self.models):
            raise ModelError("one model per quantile level")
        if any(not 0.0 < t < 1.0 for t in taus):
            raise ModelError("quantile levels must lie in (0, 1)")
        order = np.argsort(taus)
        object.__setattr__(self, "taus", tuple(taus[i] for i in order))
        object.__setattr__(self, "models", tuple(self.models[i] for i in order))
        object.__setattr__(self, "feature_names_in", tuple(self.feature_names_in))

    @property
    def selected_features(self) -> tuple:
        return self.models[0].selected_features if self.models else ()

    def predict_all(self, data) -> np.ndarray:
        """``(n, len(taus))`` sorted quantile predictions."""
        X = data if isinstance(data, Dataset) else design(data, self.feature_names_in)
        Q = np.column_stack([m.predict(X) for m in self.models])
        return np.sort(Q, axis=1)

    def predict_quantile(self, data, tau) -> np.ndarray:
        Q = self.predict_all(data)
        taus = np.asarray(self.taus)
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if np.any((tau < taus[0] - 1e-12) | (tau > taus[-1] + 1e-12)):
            raise ModelError(f"level outside fitted range [{taus[0]}, {taus[-1]}]")
        if len(taus) == 1:
            out = np.repeat(Q[:, :1], tau.size, axis=1)
        else:
            hi = np.clip(np.searchsorted(taus, tau, side="left"), 1, len(taus) - 1)
            lo = hi - 1
            w = np.clip((tau - taus[lo]) / (taus[hi] - taus[lo]), 0.0, 1.0)
            out = Q[:, lo] * (1.0 - w) + Q[:, hi] * w
        return out[:, 0] if out.shape[1] == 1 else out

    def predict(self, data) -> np.ndarray:
        return self.predict_quantile(data, 0.5)


def fit_quantile_model(train: Dataset, features, taus, method: str = "dual") -> QuantileModel:
    models = tuple(fit_lqr(train, features, t, method) for t in taus)
    return QuantileModel(tuple(taus), models, train.feature_names)
