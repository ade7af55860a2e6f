"""Independent brute-force references used by the tests.

None of these import solver internals: they restate each problem from its
definition and search exhaustively (or on a fine grid).
"""

from itertools import combinations

import numpy as np


# ---------------------------------------------------------------- linear programs

def random_lp(rng, n_vars, n_rows, bounded=True):
    """``min c x`` over a mix of <= / >= / = rows with ``x >= 0``.

    A feasible point ``x0`` is planted so the instance is feasible; with
    ``bounded`` a row ``sum(x) <= U`` keeps the region compact.
    """
    A = rng.integers(-4, 5, size=(n_rows, n_vars)).astype(float)
    x0 = rng.uniform(0.0, 3.0, n_vars)
    senses = np.array(rng.choice(["<=", ">=", "="], size=n_rows, p=[0.5, 0.3, 0.2]))
    slack = rng.uniform(0.0, 2.0, n_rows)
    b = A @ x0
    b = np.where(senses == "<=", b + slack, np.where(senses == ">=", b - slack, b))
    senses = list(senses)
    if bounded:
        A = np.vstack([A, np.ones(n_vars)])
        b = np.append(b, x0.sum() + 5.0)
        senses.append("<=")
    c = rng.integers(-5, 6, size=n_vars).astype(float)
    return c, A, tuple(str(s) for s in senses), b


def _satisfies(A, senses, b, x, tol=1e-7):
    lhs = A @ x
    for i, s in enumerate(senses):
        if s == "<=" and lhs[i] > b[i] + tol:
            return False
        if s == ">=" and lhs[i] < b[i] - tol:
            return False
        if s == "=" and abs(lhs[i] - b[i]) > tol:
            return False
    return True


def bfs_enumeration(c, A, senses, b, maximize=False):
    """Optimum of ``c x`` over ``{x >= 0, A x (senses) b}`` by enumerating
    every basic solution of the slack-augmented standard form.

    Returns ``(objective, x)`` or ``(None, None)`` when no basic feasible
    solution exists. Valid for bounded feasible regions.
    """
    m, n = A.shape
    cols = [A]
    for i, s in enumerate(senses):
        if s != "=":
            e = np.zeros((m, 1))
            e[i, 0] = 1.0 if s == "<=" else -1.0
            cols.append(e)
    M = np.hstack(cols)
    rows = []
    for i in range(m):
        if np.linalg.matrix_rank(M[rows + [i]]) == len(rows) + 1:
            rows.append(i)
    M, rhs = M[rows], b[rows]
    k, N = M.shape
    sign = -1.0 if maximize else 1.0
    best, best_x = None, None
    for basis in combinations(range(N), k):
        B = M[:, basis]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        xb = np.linalg.solve(B, rhs)
        if np.any(xb < -1e-9):
            continue
        z = np.zeros(N)
        z[list(basis)] = xb
        x = np.maximum(z[:n], 0.0)
        if not _satisfies(A, senses, b, x):
            continue
        val = sign * float(c @ x)
        if best is None or val < best - 1e-12:
            best, best_x = val, x
    if best is None:
        return None, None
    return sign * best, best_x


# ---------------------------------------------------------------- bidding

def scenario_profit(p, x, dam, up, down):
    """Profit per unit capacity of bidding ``p`` when ``x`` is produced."""
    return p * dam - np.maximum(p - x, 0.0) * (dam + up) + np.maximum(x - p, 0.0) * (dam - down)


def expected_step_profit(p, x_row, dam, up, down, w):
    """Expected profit of bid(s) ``p`` at one step: equiprobable ``x_row``, clusters weighted ``w``."""
    p = np.atleast_1d(np.asarray(p, float))[:, None, None]
    wn = np.asarray(w, float) / np.sum(w)
    pr = scenario_profit(p, np.asarray(x_row)[None, None, :], dam,
                         np.asarray(up)[None, :, None], np.asarray(down)[None, :, None])
    return np.einsum("gcn,c->g", pr, wn) / len(x_row)


def eum_grid(pred, dam, up, down, w, step=1e-4):
    """Per-step grid maximum of expected profit; returns ``(bids, values)``."""
    g = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    bids, vals = [], []
    for t in range(len(pred)):
        v = expected_step_profit(g, pred[t], dam[t], up, down, w)
        i = int(np.argmax(v))
        bids.append(g[i])
        vals.append(v[i])
    return np.array(bids), np.array(vals)


def atoms(pred, dam, up, down, w, p):
    """Profit and probability of every ``(t, c, n)`` atom at bids ``p``."""
    T, N = pred.shape
    wn = np.asarray(w, float) / np.sum(w)
    vals, probs = [], []
    for t in range(T):
        for c in range(len(up)):
            for n in range(N):
                vals.append(scenario_profit(p[t], pred[t, n], dam[t], up[c], down[c]))
                probs.append(wn[c] / (N * T))
    return np.array(vals), np.array(probs)


def tail_mean(values, probs, gamma):
    """Mean of the worst ``1 - gamma`` probability mass (lower tail)."""
    order = np.argsort(values, kind="stable")
    v, pr = np.asarray(values)[order], np.asarray(probs)[order] / np.sum(probs)
    need = 1.0 - gamma
    acc, total = 0.0, 0.0
    for vi, pi in zip(v, pr):
        take = min(pi, need - acc)
        if take <= 0:
            break
        total += take * vi
        acc += take
    return total / need


def cvar_objective(pred, dam, up, down, w, p, gamma, beta):
    """``(1 - beta) E + beta CVaR`` with atom weights ``w_c / (N T)``."""
    vals, probs = atoms(pred, dam, up, down, w, p)
    e = float(vals @ probs)
    cv = tail_mean(vals, probs, gamma)
    return (1 - beta) * e + beta * cv, e, cv


def cvar_grid_max(pred, dam, up, down, w, gamma, beta, step=1e-3):
    """Maximum of the CVaR objective over ``p`` in the product grid of spacing ``step``.

    Uses ``CVaR = max_v v - E[(v - profit)+] / (1 - gamma)``: for a fixed
    ``v`` the objective separates per step, and at the grid optimum ``v``
    equals one of the atom profits. Every atom profit attainable on the
    grid is tried as ``v``. Per step the function of ``p_t`` is a concave
    sequence on the grid, so its maximum is found by bisection on the
    forward difference. Returns ``(objective, bids)``.
    """
    T, N = pred.shape
    C = len(up)
    g = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    wn = np.asarray(w, float) / np.sum(w)
    pi = (wn[:, None] / (N * T)).repeat(N, axis=1).ravel()          # (C*N,)
    up_a = np.repeat(np.asarray(up, float), N)
    dn_a = np.repeat(np.asarray(down, float), N)
    x_a = [np.tile(pred[t], C) for t in range(T)]
    table = [scenario_profit(g[:, None], x_a[t][None, :], dam[t], up_a[None, :], dn_a[None, :])
             for t in range(T)]                                        # (G, C*N) each
    V = np.unique(np.concatenate([tb.ravel() for tb in table]))

    def h(t, i, v):
        pr = table[t][i]                                               # (m, C*N)
        e = pr @ pi
        short = np.maximum(v[:, None] - pr, 0.0) @ pi
        return (1 - beta) * e - beta * short / (1 - gamma)

    total = beta * V
    best_idx = []
    for t in range(T):
        lo = np.zeros(len(V), int)
        hi = np.full(len(V), len(g) - 1)
        while np.any(lo < hi):
            mid = (lo + hi) // 2
            up_ok = h(t, np.minimum(mid + 1, len(g) - 1), V) > h(t, mid, V)
            lo = np.where((lo < hi) & up_ok, mid + 1, lo)
            hi = np.where((lo < hi) & ~up_ok, mid, hi)
        total = total + h(t, lo, V)
        best_idx.append(lo)
    k = int(np.argmax(total))
    bids = np.array([g[best_idx[t][k]] for t in range(T)])
    return float(total[k]), bids
