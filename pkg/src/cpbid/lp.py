"""Dense two-phase simplex for bounded-variable linear programs.

Problems are stated as::

    min/max  c @ x
    s.t.     A[i] @ x  (<=, =, >=)  b[i]
             lower <= x <= upper        (infinite bounds allowed)

Variables are shifted/reflected/split into ``0 <= z <= u`` form. Nonbasic
variables rest at either bound, so finite upper bounds never become rows.
The basis inverse is carried in the tableau columns of the starting basis,
which also yields the row duals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LpProblem",
    "LpSolution",
    "ResidualReport",
    "LpSolverError",
    "LpValidationError",
    "solve_lp",
    "validate",
    "to_lp_format",
]

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
REFACTOR_EVERY = 50

_SENSES = {"<=": "<=", "=<": "<=", "=": "=", "==": "=", ">=": ">=", "=>": ">="}


class LpSolverError(RuntimeError):
    """Raised when the simplex fails to terminate or to certify its answer."""


class LpValidationError(ValueError):
    pass


@dataclass(frozen=True)
class LpProblem:
    """A linear program with row relations and variable bounds.

    ``lower``/``upper`` default to ``0``/``+inf``. Use ``-np.inf`` and
    ``np.inf`` for free variables.
    """

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False
    names: tuple | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise ValueError(f"constraint matrix must have {n} columns, got shape {A.shape}")
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size != A.shape[0]:
            raise ValueError("one right-hand side per row required")
        senses = tuple(self.senses)
        if len(senses) != A.shape[0]:
            raise ValueError("one relation per row required")
        try:
            senses = tuple(_SENSES[s] for s in senses)
        except KeyError as exc:
            raise ValueError(f"unknown relation {exc.args[0]!r}") from None
        lo = np.zeros(n) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        up = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(lo > up):
            j = int(np.flatnonzero(lo > up)[0])
            raise ValueError(f"variable {j}: lower bound {lo[j]} exceeds upper bound {up[j]}")
        if np.any(lo == np.inf) or np.any(up == -np.inf):
            raise ValueError("bounds must not exclude every finite value")
        if self.names is not None and len(self.names) != n:
            raise ValueError("one name per variable required")
        for name, val in (("c", c), ("A", A), ("b", b), ("senses", senses),
                          ("lower", lo), ("upper", up)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class ResidualReport:
    max_constraint_violation: float
    max_bound_violation: float
    duality_gap: float
    tol: float = FEAS_TOL
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return (self.max_constraint_violation <= self.tol
                and self.max_bound_violation <= self.tol
                and abs(self.duality_gap) <= self.tol * max(1.0, self.details.get("scale", 1.0)))


class _StandardForm:
    """``min cost @ z  s.t.  M z = rhs,  0 <= z <= ub`` plus the map back to x."""

    def __init__(self, p: LpProblem):
        m, n = p.n_rows, p.n_vars
        cols, cost, ub = [], [], []
        # per original variable: list of (std column, coefficient), constant offset
        self.xmap = []
        rhs = p.b.copy()
        c = -p.c if p.maximize else p.c
        self.offset = 0.0
        for j in range(n):
            lo, up, a = p.lower[j], p.upper[j], p.A[:, j]
            if np.isfinite(lo):
                k = len(cols)
                cols.append(a)
                cost.append(c[j])
                ub.append(up - lo)
                rhs = rhs - a * lo
                self.offset += c[j] * lo
                self.xmap.append(([(k, 1.0)], lo))
            elif np.isfinite(up):
                k = len(cols)
                cols.append(-a)
                cost.append(-c[j])
                ub.append(np.inf)
                rhs = rhs - a * up
                self.offset += c[j] * up
                self.xmap.append(([(k, -1.0)], up))
            else:
                k = len(cols)
                cols.extend([a, -a])
                cost.extend([c[j], -c[j]])
                ub.extend([np.inf, np.inf])
                self.xmap.append(([(k, 1.0), (k + 1, -1.0)], 0.0))
        self.n_struct = len(cols)

        sign = np.where(rhs < 0, -1.0, 1.0)
        slack_cols, slack_of_row = [], {}
        for i, s in enumerate(p.senses):
            if s == "=":
                continue
            e = np.zeros(m)
            e[i] = 1.0 if s == "<=" else -1.0
            slack_of_row[i] = self.n_struct + len(slack_cols)
            slack_cols.append(e)
        n_slack = len(slack_cols)

        body = np.column_stack(cols + slack_cols) if (cols or slack_cols) else np.zeros((m, 0))
        body = body * sign[:, None]
        rhs = rhs * sign

        # rows whose slack enters with +1 start with that slack basic
        basis = np.empty(m, dtype=int)
        art_rows = []
        for i in range(m):
            k = slack_of_row.get(i)
            if k is not None and body[i, k] > 0:
                basis[i] = k
            else:
                art_rows.append(i)
        n_art = len(art_rows)
        art = np.zeros((m, n_art))
        for a_idx, i in enumerate(art_rows):
            art[i, a_idx] = 1.0
            basis[i] = self.n_struct + n_slack + a_idx

        self.M = np.hstack([body, art])
        self.rhs = rhs
        self.row_sign = sign
        self.cost = np.concatenate([cost, np.zeros(n_slack + n_art)])
        self.ub = np.concatenate([ub, np.full(n_slack, np.inf), np.full(n_art, np.inf)])
        self.art_start = self.n_struct + n_slack
        self.n_art = n_art
        self.init_basis = basis.copy()

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = np.empty(len(self.xmap))
        for j, (terms, const) in enumerate(self.xmap):
            x[j] = const + sum(coef * z[k] for k, coef in terms)
        return x


class _Tableau:
    def __init__(self, sf: _StandardForm, max_iter: int):
        self.sf = sf
        self.M = sf.M
        self.ub = sf.ub.copy()
        self.basis = sf.init_basis.copy()
        self.at_upper = np.zeros(self.M.shape[1], dtype=bool)
        self.blocked = np.zeros(self.M.shape[1], dtype=bool)
        self.iterations = 0
        self.max_iter = max_iter
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        if B.shape[0] == 0:
            self.T = np.zeros((0, self.M.shape[1]))
            self.xB = np.zeros(0)
            return
        self.Binv = np.linalg.inv(B)
        self.T = self.Binv @ self.M
        upper_vals = np.where(self.at_upper, self.ub, 0.0)
        upper_vals[self.basis] = 0.0
        self.xB = self.Binv @ (self.sf.rhs - self.M @ upper_vals)

    def values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.ub, 0.0)
        z[self.basis] = self.xB
        return z

    def pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        colj = T[:, j].copy()
        colj[r] = 0.0
        T -= np.outer(colj, T[r])

    def run(self, cost: np.ndarray) -> str:
        m = self.T.shape[0]
        n_cols = self.M.shape[1]
        degenerate_run = 0
        bland = False
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iter:
                raise LpSolverError(f"pivot limit exceeded after {self.iterations} iterations")
            d = cost - cost[self.basis] @ self.T if m else cost.copy()
            movable = ~self.blocked & (self.ub > PIVOT_TOL)
            movable[self.basis] = False
            improving = movable & (
                (~self.at_upper & (d < -OPT_TOL)) | (self.at_upper & (d > OPT_TOL)))
            cand = np.flatnonzero(improving)
            if cand.size == 0:
                return "optimal"
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            delta = -1.0 if self.at_upper[j] else 1.0
            alpha = delta * self.T[:, j] if m else np.zeros(0)

            theta, r = np.inf, -1
            if m:
                ratios = np.full(m, np.inf)
                dec = alpha > PIVOT_TOL
                ratios[dec] = np.maximum(self.xB[dec], 0.0) / alpha[dec]
                ub_b = self.ub[self.basis]
                inc = (alpha < -PIVOT_TOL) & np.isfinite(ub_b)
                ratios[inc] = np.maximum(ub_b[inc] - self.xB[inc], 0.0) / -alpha[inc]
                theta = ratios.min()
                if np.isfinite(theta):
                    ties = np.flatnonzero(ratios <= theta + 1e-12)
                    if bland:
                        r = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(alpha[ties]))])
            flip = self.ub[j]
            if not np.isfinite(theta) and not np.isfinite(flip):
                return "unbounded"

            self.iterations += 1
            if flip <= theta:
                if m:
                    self.xB -= flip * alpha
                self.at_upper[j] = not self.at_upper[j]
                degenerate_run = 0
                continue

            leave = self.basis[r]
            to_upper = alpha[r] < 0
            enter_val = theta if delta > 0 else self.ub[j] - theta
            self.xB -= theta * alpha
            self.pivot(r, j)
            self.xB[r] = enter_val
            self.basis[r] = j
            self.at_upper[j] = False
            self.at_upper[leave] = bool(to_upper)

            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run > 3 * n_cols:
                    bland = True
            else:
                degenerate_run = 0
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0

    def drive_out_artificials(self):
        start = self.sf.art_start
        for r in range(self.T.shape[0]):
            if self.basis[r] < start:
                continue
            row = np.abs(self.T[r, :start])
            nonbasic = np.ones(start, dtype=bool)
            nonbasic[self.basis[self.basis < start]] = False
            row[~nonbasic] = 0.0
            if row.size == 0 or row.max() <= 1e-7:
                continue  # redundant row; the artificial stays basic at zero
            j = int(np.argmax(row))
            val = self.ub[j] if self.at_upper[j] else 0.0
            leave = self.basis[r]
            self.pivot(r, j)
            self.xB[r] = val
            self.basis[r] = j
            self.at_upper[j] = False
            self.at_upper[leave] = False
        self.refactor()


def solve_lp(problem: LpProblem, max_iter: int | None = None, certify: bool = True) -> LpSolution:
    """Solve ``problem`` with the two-phase bounded-variable simplex.

    Returns an :class:`LpSolution` with status ``"optimal"``, ``"infeasible"``
    or ``"unbounded"``. ``duals[i]`` is the sensitivity of the optimal
    objective to ``b[i]``.

    Raises
    ------
    LpSolverError
        If the pivot limit is hit, or the optimum fails the residual check.
    """
    sf = _StandardForm(problem)
    m, n_cols = sf.M.shape
    if max_iter is None:
        max_iter = 50 * (m + n_cols) + 1000
    tab = _Tableau(sf, max_iter)

    if sf.n_art:
        phase1 = np.zeros(n_cols)
        phase1[sf.art_start:] = 1.0
        tab.run(phase1)
        tab.refactor()
        infeas = float(np.sum(tab.values()[sf.art_start:]))
        if infeas > FEAS_TOL * max(1.0, float(np.abs(sf.rhs).max(initial=0.0))):
            return LpSolution("infeasible", iterations=tab.iterations)
        tab.drive_out_artificials()
        tab.ub[sf.art_start:] = 0.0
        tab.blocked[sf.art_start:] = True

    status = tab.run(sf.cost)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations)
    tab.refactor()

    z = np.clip(tab.values(), 0.0, tab.ub)
    x = sf.recover(z)
    x = np.clip(x, problem.lower, problem.upper)
    obj = float(problem.c @ x)
    duals = np.zeros(m)
    if m:
        y_std = sf.cost[tab.basis] @ tab.Binv
        duals = y_std * sf.row_sign
        if problem.maximize:
            duals = -duals
    sol = LpSolution("optimal", x=x, objective=obj, duals=duals, iterations=tab.iterations)
    if certify:
        rep = validate(sol, problem)
        if rep.max_constraint_violation > FEAS_TOL or rep.max_bound_violation > FEAS_TOL:
            raise LpSolverError(
                f"residual check failed after {tab.iterations} iterations: "
                f"constraint {rep.max_constraint_violation:.3g}, bound {rep.max_bound_violation:.3g}")
    return sol


def validate(solution: LpSolution, problem: LpProblem, tol: float = FEAS_TOL,
             strict: bool = False) -> ResidualReport:
    """Residuals of ``solution`` against ``problem``.

    Reports the largest row violation, the largest bound violation and the
    primal-dual objective gap implied by ``solution.duals``. With
    ``strict=True`` a violation beyond ``tol`` raises
    :class:`LpValidationError`.
    """
    if solution.status != "optimal" or solution.x is None:
        raise LpValidationError(f"cannot validate a solution with status {solution.status!r}")
    x = np.asarray(solution.x, dtype=float)
    lhs = problem.A @ x if problem.n_rows else np.zeros(0)
    viol = np.zeros(problem.n_rows)
    for i, s in enumerate(problem.senses):
        diff = lhs[i] - problem.b[i]
        viol[i] = max(diff, 0.0) if s == "<=" else (max(-diff, 0.0) if s == ">=" else abs(diff))
    bound_viol = np.maximum(problem.lower - x, 0.0)
    bound_viol = np.maximum(bound_viol, x - problem.upper)
    max_c = float(viol.max(initial=0.0))
    max_b = float(bound_viol.max(initial=0.0))

    gap = np.nan
    scale = 1.0
    if solution.duals is not None:
        sgn = -1.0 if problem.maximize else 1.0
        c = sgn * problem.c
        y = sgn * np.asarray(solution.duals, dtype=float)
        d = c - problem.A.T @ y if problem.n_rows else c.copy()
        dual_obj = float(problem.b @ y) if problem.n_rows else 0.0
        for j in range(problem.n_vars):
            if abs(d[j]) <= 1e-9:
                continue
            bound = problem.lower[j] if d[j] > 0 else problem.upper[j]
            dual_obj += d[j] * bound if np.isfinite(bound) else -np.inf
        primal = float(c @ x)
        gap = primal - dual_obj if np.isfinite(dual_obj) else np.inf
        scale = max(1.0, abs(primal))
    rep = ResidualReport(max_c, max_b, float(gap), tol, {"scale": scale})
    if strict and not rep.ok:
        raise LpValidationError(
            f"validation failed: constraint {max_c:.3g}, bound {max_b:.3g}, gap {gap:.3g}")
    return rep


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) else str(int(v))


def to_lp_format(problem: LpProblem, name: str = "cpbid") -> str:
    """Render ``problem`` in CPLEX LP text format (for cross-checking elsewhere)."""
    names = problem.names or tuple(f"x{j}" for j in range(problem.n_vars))

    def expr(coefs):
        terms = []
        for v, nm in zip(coefs, names):
            if v == 0:
                continue
            sign = "-" if v < 0 else "+"
            terms.append(f"{sign} {_fmt(abs(v))} {nm}")
        if not terms:
            return "0 " + names[0] if names else "0"
        out = " ".join(terms)
        return out[2:] if out.startswith("+ ") else out

    lines = [f"\\ {name}", "Maximize" if problem.maximize else "Minimize", f" obj: {expr(problem.c)}",
             "Subject To"]
    for i in range(problem.n_rows):
        rel = {"<=": "<=", ">=": ">=", "=": "="}[problem.senses[i]]
        lines.append(f" r{i}: {expr(problem.A[i])} {rel} {_fmt(problem.b[i])}")
    lines.append("Bounds")
    for j, nm in enumerate(names):
        lo, up = problem.lower[j], problem.upper[j]
        if np.isneginf(lo) and np.isposinf(up):
            lines.append(f" {nm} free")
        elif np.isneginf(lo):
            lines.append(f" -inf <= {nm} <= {_fmt(up)}")
        elif np.isposinf(up):
            if lo != 0:
                lines.append(f" {nm} >= {_fmt(lo)}")
        else:
            lines.append(f" {_fmt(lo)} <= {nm} <= {_fmt(up)}")
    lines.append("End")
    return "\n".join(lines) + "\n"
