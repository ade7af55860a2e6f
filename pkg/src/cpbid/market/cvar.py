"""Expected-profit bidding with a CVaR term.

All timesteps share one value-at-risk. Scenario atoms are ``(t, c, n)``
with probability ``w_c / (T_cw * N * T)``, and the objective is
``(1 - beta) * E[profit] + beta * CVaR_gamma[profit]``.

Two solvers are provided. ``cvar_lp`` builds the scenario LP and hands it
to :mod:`cpbid.lp`. It is exact but dense, so it only suits small
instances. ``cvar_exact`` exploits the structure: for a fixed VaR the
problem separates per timestep into a concave piecewise-linear function
of ``p_t`` whose kinks are known in closed form. The optimal VaR is then
found by a secant cutting-plane search on the concave value function of
VaR, which needs function values only.
"""

from __future__ import annotations

import numpy as np

from ..lp import LpProblem, LpSolverError, solve_lp
from .clustering import MarketError
from .scenarios import ScenarioMatrix
from .strategies import BidSchedule, eum_bids, expected_profit, scenario_profits

LP_ATOM_LIMIT = 400


def cvar_of(values, weights, gamma: float) -> float:
    """Mean of the worst ``1 - gamma`` probability mass of a discrete distribution."""
    v = np.asarray(values, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    w = w / w.sum()
    o = np.argsort(v, kind="stable")
    v, w = v[o], w[o]
    tail = 1.0 - gamma
    cum = np.cumsum(w)
    prev = np.concatenate([[0.0], cum[:-1]])
    take = np.clip(tail - prev, 0.0, w)
    return float(take @ v / tail)


def _atom_weights(scen: ScenarioMatrix) -> np.ndarray:
    """``(T, C, N)`` probabilities of the scenario atoms."""
    T, N = scen.pred.shape
    pc = scen.clusters.probabilities
    return np.broadcast_to(pc[None, :, None] / (N * T), (T, len(pc), N))


def cvar_objective(scen: ScenarioMatrix, bids, gamma: float, beta: float) -> dict:
    """Objective terms at ``bids`` with the tail mean computed by sorting."""
    pr = scenario_profits(scen, bids)
    w = _atom_weights(scen)
    e = float(np.sum(w * pr))
    cv = cvar_of(pr, w, gamma)
    return {"objective": (1 - beta) * e + beta * cv, "expected": e, "cvar": cv}


def _check(gamma, beta):
    if not 0.0 < gamma < 1.0:
        raise MarketError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0.0 <= beta <= 1.0:
        raise MarketError(f"beta must lie in [0, 1], got {beta}")


def cvar_lp_problem(scen: ScenarioMatrix, gamma: float, beta: float) -> LpProblem:
    """Variables: ``p[T], dpv[T*N], spv[T*N], var, sigma[T*C*N]``."""
    x = scen.pred
    T, N = x.shape
    cl = scen.clusters
    C = len(cl)
    pc = cl.probabilities
    u_bar, d_bar = cl.expected_deltas()
    n_var = T + 2 * T * N + 1 + T * C * N
    ip = np.arange(T)
    idpv = T + np.arange(T * N).reshape(T, N)
    ispv = T + T * N + np.arange(T * N).reshape(T, N)
    ivar = T + 2 * T * N
    isig = ivar + 1 + np.arange(T * C * N).reshape(T, C, N)

    c = np.zeros(n_var)
    c[ip] = (1 - beta) * scen.dam / T
    c[idpv] = -(1 - beta) * (scen.dam[:, None] + u_bar) / (N * T)
    c[ispv] = (1 - beta) * (scen.dam[:, None] - d_bar) / (N * T)
    c[ivar] = beta
    c[isig] = -beta / (1 - gamma) * pc[None, :, None] / (N * T)

    rows, rhs, senses = [], [], []
    for t in range(T):
        for n in range(N):
            r = np.zeros(n_var)
            r[idpv[t, n]], r[ispv[t, n]], r[ip[t]] = 1.0, -1.0, -1.0
            rows.append(r)
            rhs.append(-x[t, n])
            senses.append("=")
    for t in range(T):
        dam = scen.dam[t]
        for k in range(C):
            for n in range(N):
                # sigma + pr - var >= 0
                r = np.zeros(n_var)
                r[isig[t, k, n]] = 1.0
                r[ip[t]] = dam
                r[idpv[t, n]] = -(dam + cl.delta_up[k])
                r[ispv[t, n]] = dam - cl.delta_down[k]
                r[ivar] = -1.0
                rows.append(r)
                rhs.append(0.0)
                senses.append(">=")
    lower = np.zeros(n_var)
    upper = np.full(n_var, np.inf)
    upper[ip] = 1.0
    lower[ivar] = -np.inf
    return LpProblem(c, np.array(rows), tuple(senses), np.array(rhs), lower, upper, maximize=True)


def cvar_lp(scen: ScenarioMatrix, gamma: float, beta: float):
    """Solve the scenario LP. Returns ``(bids, info)``."""
    _check(gamma, beta)
    T, N = scen.pred.shape
    C = len(scen.clusters)
    sol = solve_lp(cvar_lp_problem(scen, gamma, beta))
    if not sol.optimal:
        raise LpSolverError(f"CVaR program returned {sol.status}")
    p = np.clip(sol.x[:T], 0.0, 1.0)
    var = float(sol.x[T + 2 * T * N])
    sig = sol.x[T + 2 * T * N + 1:].reshape(T, C, N)
    lp_cvar = var - float(np.sum(_atom_weights(scen) * sig)) / (1 - gamma)
    info = {"objective": float(sol.objective), "var": var, "cvar": lp_cvar,
            "iterations": sol.iterations, "solver": "lp"}
    return p, info


def _compact(mask, pos, step):
    """Row-wise packing of the masked ``(T, C, N)`` events, padded with +inf."""
    T = mask.shape[0]
    t, c, n = np.nonzero(mask)
    counts = np.bincount(t, minlength=T)
    width = int(counts.max()) if t.size else 0
    col = np.arange(t.size) - np.repeat(np.cumsum(counts) - counts, counts)
    out_pos = np.full((T, width), np.inf)
    out_d = np.zeros((T, width))
    out_pos[t, col] = pos[t, c, n]
    out_d[t, col] = step[0, c, 0]
    return out_pos, out_d


class _Kinks:
    """VaR-independent pieces of the per-timestep objective for one block."""

    def __init__(self, scen, gamma, beta):
        x = scen.pred
        T, N = x.shape
        dam = scen.dam[:, None, None]
        up = scen.clusters.delta_up[None, :, None]
        down = scen.clusters.delta_down[None, :, None]
        w = scen.clusters.probabilities[None, :, None]
        self.scen, self.gamma, self.beta = scen, gamma, beta
        self.T, self.N = T, N
        self.x = x
        self.xx = x[:, None, :]
        kappa = beta / (1 - gamma)
        with np.errstate(divide="ignore"):
            self.inv_down = np.where(down != 0, 1.0 / down, np.nan)
            self.inv_up = np.where(up != 0, 1.0 / up, np.nan)
        self.a_lo = self.xx * (dam - down)
        self.a_hi = self.xx * (dam + up)
        # slope far to the left: no deficit, in the tail iff profit rises with p
        s0 = float((((1 - beta) * down + kappa * np.maximum(down, 0.0)) * w).sum()) * N
        self.s0 = np.full((T, 1), s0)
        self.lo_step = -kappa * np.abs(down) * w
        self.hi_step = -kappa * np.abs(up) * w
        self.x_exp = float((-(1 - beta) * (down + up) * w).sum())
        self.left_w = kappa * down * w
        self.right_w = -kappa * up * w
        self.down_pos, self.down_neg = down > 0, down < 0
        self.up_pos, self.up_neg = up > 0, up < 0

    def best_bids(self, v):
        """Per-timestep maximizer for a fixed VaR ``v`` (smallest on ties).

        Each atom adds a concave piecewise-linear term in ``p``. Its slope
        changes at the scenario value ``x`` and where its profit crosses
        ``v``. The slope changes inside (0, 1) are sorted and integrated,
        giving the objective at every kink in one pass.
        """
        T, xx = self.T, self.xx
        with np.errstate(invalid="ignore"):
            r_lo = (v - self.a_lo) * self.inv_down
            r_hi = (self.a_hi - v) * self.inv_up
        lo_ev = r_lo < xx
        hi_ev = r_hi > xx
        # tail membership just left and just right of x
        left = (self.down_pos & ~lo_ev) | (self.down_neg & lo_ev)
        right = (self.up_pos & ~hi_ev) | (self.up_neg & hi_ev)
        x_d = self.x_exp + (right * self.right_w - left * self.left_w).sum(axis=1)
        # crossings at or left of p = 0 only shift the initial slope
        early = lo_ev & (r_lo <= 0)
        s0 = self.s0[:, 0] + (early * self.lo_step).sum(axis=(1, 2))
        lo_pos, lo_d = _compact(lo_ev & ~early & (r_lo < 1), r_lo, self.lo_step)
        hi_pos, hi_d = _compact(hi_ev & (r_hi < 1), r_hi, self.hi_step)
        pos = np.concatenate([self.x, lo_pos, hi_pos], axis=1)
        d = np.concatenate([x_d, lo_d, hi_d], axis=1)
        order = np.argsort(pos, axis=1)
        pos = np.take_along_axis(pos, order, axis=1)
        d = np.take_along_axis(d, order, axis=1)
        knots = np.concatenate([np.zeros((T, 1)), np.minimum(pos, 1.0), np.ones((T, 1))], axis=1)
        slopes = np.concatenate([s0[:, None], s0[:, None] + np.cumsum(d, axis=1)], axis=1)
        f = np.cumsum(slopes * np.diff(knots, axis=1), axis=1)
        f = np.concatenate([np.zeros((T, 1)), f], axis=1)
        best = f.max(axis=1, keepdims=True)
        tol = 1e-13 * np.maximum(np.abs(f).max(axis=1, keepdims=True), 1e-300)
        idx = np.argmax(f >= best - tol, axis=1)
        return knots[np.arange(T), idx]

    def value(self, v):
        """Value of the VaR-restricted problem and its maximizing bids."""
        p = self.best_bids(v)
        pr = scenario_profits(self.scen, p)
        w = _atom_weights(self.scen)
        tail = float(np.sum(w * np.maximum(v - pr, 0.0))) / (1 - self.gamma)
        return (1 - self.beta) * float(np.sum(w * pr)) + self.beta * (v - tail), p


def _interval_bound(pts, i, s_left, s_right):
    """Upper bound of the concave value function on ``[v_i, v_{i+1}]``.

    Secants of a concave function extended beyond their segment lie above
    it, so the bound is the crossing of the secants on either side.
    """
    (v0, h0), (v1, h1) = pts[i][:2], pts[i + 1][:2]
    sl = (h0 - pts[i - 1][1]) / (v0 - pts[i - 1][0]) if i > 0 else s_left
    sr = (pts[i + 2][1] - h1) / (pts[i + 2][0] - v1) if i + 2 < len(pts) else s_right
    if sl - sr <= 1e-15 * (abs(sl) + abs(sr) + 1.0):
        return max(h0, h1), None
    v = (h1 - h0 + sl * v0 - sr * v1) / (sl - sr)
    v = min(max(v, v0), v1)
    return min(h0 + sl * (v - v0), h1 + sr * (v - v1)), v


def cvar_exact(scen: ScenarioMatrix, gamma: float, beta: float, tol: float = 1e-9,
               max_iter: int = 200):
    """Structured solver. Returns ``(bids, info)``."""
    _check(gamma, beta)
    if beta == 0.0:
        p, _ = eum_bids(scen)
        return p, {"solver": "eum", **cvar_objective(scen, p, gamma, beta)}
    x = scen.pred
    dam = scen.dam[:, None, None]
    up = scen.clusters.delta_up[None, :, None]
    down = scen.clusters.delta_down[None, :, None]
    xx = x[:, None, :]
    # every atom profit lies between its values at p = 0, 1 and p = x, so
    # outside [a, b] the value function is linear with known slopes
    at0 = xx * (dam - down)
    at1 = dam - (1 - xx) * (dam + up)
    atx = xx * dam
    a = float(min(at0.min(), at1.min(), atx.min()))
    b = float(max(at0.max(), at1.max(), atx.max()))
    s_left, s_right = beta, beta * (1.0 - 1.0 / (1.0 - gamma))
    kinks = _Kinks(scen, gamma, beta)
    pts = [(a, *kinks.value(a)), (b, *kinks.value(b))]
    it = 0
    for it in range(max_iter):
        k = max(range(len(pts)), key=lambda j: pts[j][1])
        best = pts[k][1]
        cands = [(*_interval_bound(pts, i, s_left, s_right), i)
                 for i in (k - 1, k) if 0 <= i < len(pts) - 1]
        if not cands:
            break
        ub, v, i = max(cands, key=lambda z: z[0])
        if v is None or ub - best <= tol * (1.0 + abs(best)):
            break
        lo, hi = pts[i][0], pts[i + 1][0]
        if hi - lo <= tol * (1.0 + abs(lo)):
            break
        if not lo < v < hi:
            v = 0.5 * (lo + hi)
        pts.insert(i + 1, (v, *kinks.value(v)))
    k = max(range(len(pts)), key=lambda j: pts[j][1])
    p = pts[k][2]
    terms = cvar_objective(scen, p, gamma, beta)
    return p, {"solver": "exact", "var": float(pts[k][0]), "iterations": it + 1, **terms}


def strategy_eum_cvar(scen: ScenarioMatrix, gamma: float, beta: float, method: str = "auto",
                      window: int | None = None) -> BidSchedule:
    """Risk-adjusted expected-utility bids.

    ``window`` solves consecutive blocks of that many timesteps
    independently (each block has its own VaR). ``method`` is ``"lp"``,
    ``"exact"`` or ``"auto"`` (the LP for small blocks).
    """
    _check(gamma, beta)
    if method not in ("auto", "lp", "exact"):
        raise MarketError(f"unknown CVaR solver {method!r}")
    if beta == 0.0:
        p, val = eum_bids(scen)
        return BidSchedule(scen.timestamps, p, "eum_cvar", scen.method,
                           {"gamma": gamma, "beta": beta, "solver": "eum",
                            "expected_profit": float(val.mean())})
    T = scen.n_steps
    step = T if window is None else int(window)
    if step < 1:
        raise MarketError("window must be positive")
    bids, blocks = [], []
    for s in range(0, T, step):
        sub = scen.window(s, min(s + step, T))
        atoms = sub.n_steps * sub.n_scenarios * len(sub.clusters)
        use_lp = method == "lp" or (method == "auto" and atoms <= LP_ATOM_LIMIT)
        p, info = (cvar_lp if use_lp else cvar_exact)(sub, gamma, beta)
        bids.append(p)
        blocks.append(info)
    p = np.concatenate(bids) if bids else np.zeros(0)
    info = {"gamma": gamma, "beta": beta, "window": step, "blocks": blocks,
            "expected_profit": float(expected_profit(scen, p).mean()) if T else 0.0}
    return BidSchedule(scen.timestamps, p, "eum_cvar", scen.method, info)
