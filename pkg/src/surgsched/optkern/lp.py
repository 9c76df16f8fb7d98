"""Dense revised-simplex LP solver with dual values.

Bounded-variable two-phase primal simplex for cold solves; inequalities
become equalities through signed slacks, and rows whose residual the slack
cannot absorb get a phase-1 artificial. Pricing is Dantzig's rule with an
automatic switch to Bland's rule after a degenerate streak, which
guarantees termination.

For repeated solves that differ only in variable bounds (branch-and-bound
nodes), a SimplexEngine re-solves warm with a bounded-variable dual
simplex starting from the parent basis; any numerical trouble falls back
to the cold path, so the warm path is a pure accelerator.

Dual values follow the shadow-price convention: the dual of a row is the
derivative of the optimal objective with respect to its right-hand side.
For a MIN problem that puts duals of <= rows at <= 0, of >= rows at >= 0,
and leaves equality rows free; for MAX the signs flip accordingly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

MIN = "min"
MAX = "max"
LE = "<="
EQ = "=="
GE = ">="

FEAS_TOL = 1e-9
RC_TOL = 1e-9

OPTIMAL = "OPTIMAL"
INFEASIBLE = "INFEASIBLE"
UNBOUNDED = "UNBOUNDED"

INF = math.inf

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE_NB = 3


class KernelError(RuntimeError):
    """Internal solver invariant failed (numerical breakdown)."""


@dataclass
class LinearProgram:
    """A linear program over named variables.

    Variables are declared with bounds and an objective coefficient;
    constraints are sparse coefficient mappings over declared names.
    Coefficients may be ints, Fractions, or floats; the solver works in
    floating point, callers needing exactness re-verify outside.
    """

    sense: str = MIN
    objective_offset: object = 0

    def __post_init__(self):
        self._var_index: dict[object, int] = {}
        self.var_ids: list[object] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.obj: list[object] = []
        self.rows: list[dict[object, object]] = []
        self.senses: list[str] = []
        self.rhs: list[object] = []
        self.row_names: list[object] = []

    def add_var(self, vid, lb=0.0, ub=None, obj=0) -> int:
        if vid in self._var_index:
            raise ValueError(f"duplicate variable {vid!r}")
        idx = len(self.var_ids)
        self._var_index[vid] = idx
        self.var_ids.append(vid)
        self.lb.append(-INF if lb is None else float(lb))
        self.ub.append(INF if ub is None else float(ub))
        self.obj.append(obj)
        return idx

    def set_objective(self, coeffs: Mapping[object, object], offset=0):
        for j in range(len(self.obj)):
            self.obj[j] = 0
        for vid, c in coeffs.items():
            self.obj[self._var_index[vid]] = c
        self.objective_offset = offset

    def add_constr(self, coeffs: Mapping[object, object], sense: str, rhs, name=None) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {sense!r}")
        for vid in coeffs:
            if vid not in self._var_index:
                raise ValueError(f"constraint references undeclared variable {vid!r}")
        self.rows.append(dict(coeffs))
        self.senses.append(sense)
        self.rhs.append(rhs)
        self.row_names.append(name)
        return len(self.rows) - 1

    def var_index(self, vid) -> int:
        return self._var_index[vid]

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    @property
    def n_constrs(self) -> int:
        return len(self.rows)

    def dense(self):
        """Materialize (c, A, senses, b, l, u) as float arrays."""
        n, m = self.n_vars, self.n_constrs
        c = np.array([float(v) for v in self.obj], dtype=float)
        A = np.zeros((m, n), dtype=float)
        for i, row in enumerate(self.rows):
            for vid, coeff in row.items():
                A[i, self._var_index[vid]] = float(coeff)
        b = np.array([float(v) for v in self.rhs], dtype=float)
        l = np.array(self.lb, dtype=float)
        u = np.array(self.ub, dtype=float)
        return c, A, list(self.senses), b, l, u


@dataclass
class LpSolution:
    status: str
    objective: float
    primal: dict = field(default_factory=dict)
    duals: list = field(default_factory=list)

    def value(self, vid) -> float:
        return self.primal.get(vid, 0.0)


@dataclass
class EngineResult:
    status: str
    x: np.ndarray | None = None  # structural values
    duals: np.ndarray | None = None
    objective: float = math.nan
    basis: list | None = None  # reusable warm-start state
    flags: np.ndarray | None = None
    reduced: np.ndarray | None = None  # structural reduced costs at optimum


class SimplexEngine:
    """One LP matrix, many solves under changing variable bounds.

    Columns are indexed structural-first, then one slack per row (the
    slack of row i is column n + i, stable under row appends). Cold solves
    run the two-phase primal; warm solves run the dual simplex from a
    caller-provided basis and fall back to cold on any trouble.
    """

    def __init__(self, c, A, senses, b):
        self.n = A.shape[1]
        self.m = 0
        self.c = np.asarray(c, dtype=float)
        self._A_ext = np.zeros((0, self.n))
        self.senses: list[str] = []
        self.b = np.zeros(0)
        self.slack_lb = np.zeros(0)
        self.slack_ub = np.zeros(0)
        for i in range(A.shape[0]):
            self.add_row(A[i], senses[i], b[i])

    def add_row(self, row, sense, rhs) -> None:
        self._A_ext = np.vstack([self._A_ext, np.asarray(row, dtype=float)[None, :]])
        self.senses.append(sense)
        self.b = np.append(self.b, float(rhs))
        self.slack_lb = np.append(self.slack_lb, 0.0 if sense in (LE, EQ) else -INF)
        self.slack_ub = np.append(self.slack_ub, 0.0 if sense in (EQ, GE) else INF)
        self.m += 1
        self._full = None

    def _full_matrix(self):
        if getattr(self, "_full", None) is None:
            self._full = np.hstack([self._A_ext, np.eye(self.m)])
        return self._full

    def solve(self, l, u, warm=None) -> EngineResult:
        if self.m == 0:
            return self._solve_unconstrained(l, u)
        if warm is not None:
            res = self._dual_warm(l, u, warm[0], warm[1])
            if res is not None:
                return res
        return self._cold(l, u)

    # -- trivial case --------------------------------------------------------

    def _solve_unconstrained(self, l, u) -> EngineResult:
        x = np.where(self.c > 0, l, np.where(self.c < 0, u, np.where(np.isfinite(l), l, 0.0)))
        if np.any(~np.isfinite(x)):
            return EngineResult(UNBOUNDED)
        if np.any(x < l - FEAS_TOL) or np.any(x > u + FEAS_TOL):
            return EngineResult(INFEASIBLE)
        return EngineResult(OPTIMAL, x, np.zeros(0), float(self.c @ x), [], np.zeros(0, np.int8))

    # -- shared pieces -------------------------------------------------------

    def _ext_bounds(self, l, u):
        return np.concatenate([l, self.slack_lb]), np.concatenate([u, self.slack_ub])

    def _finish(self, A, cx, x, basis, flags, l_ext, u_ext, Binv=None) -> EngineResult:
        m = self.m
        if Binv is None:
            Binv = np.linalg.inv(A[:, basis])
        y = cx[basis] @ Binv
        xs = x[: self.n]
        res = self._A_ext @ xs
        for i in range(m):
            v = res[i] - self.b[i]
            scale = 1.0 + abs(self.b[i])
            s = self.senses[i]
            if (s == LE and v > 1e-7 * scale) or (s == GE and v < -1e-7 * scale) or (
                s == EQ and abs(v) > 1e-7 * scale
            ):
                raise KernelError(f"row {i} violated by {v}")
        if np.any(xs < l_ext[: self.n] - 1e-7) or np.any(xs > u_ext[: self.n] + 1e-7):
            raise KernelError("variable bound violated in reported solution")
        reduced = self.c - y @ self._A_ext
        return EngineResult(
            OPTIMAL, xs.copy(), y, float(self.c @ xs), list(basis), flags.copy(), reduced
        )

    # -- cold path: two-phase primal ------------------------------------------

    def _cold(self, l, u) -> EngineResult:
        n, m = self.n, self.m
        A_full = self._full_matrix()
        l_ext, u_ext = self._ext_bounds(l, u)
        nn = n + m

        x = np.zeros(nn)
        flags = np.full(nn, AT_LOWER, dtype=np.int8)
        for j in range(nn):
            lo, hi = l_ext[j], u_ext[j]
            if np.isfinite(lo) and np.isfinite(hi):
                if abs(lo) <= abs(hi):
                    x[j], flags[j] = lo, AT_LOWER
                else:
                    x[j], flags[j] = hi, AT_UPPER
            elif np.isfinite(lo):
                x[j], flags[j] = lo, AT_LOWER
            elif np.isfinite(hi):
                x[j], flags[j] = hi, AT_UPPER
            else:
                x[j], flags[j] = 0.0, FREE_NB

        resid = self.b - A_full[:, :n] @ x[:n]
        basis = np.empty(m, dtype=int)
        art_rows = [
            i
            for i in range(m)
            if not (self.slack_lb[i] - FEAS_TOL <= resid[i] <= self.slack_ub[i] + FEAS_TOL)
        ]
        n_art = len(art_rows)
        ntot = nn + n_art
        Ax = A_full
        if n_art:
            Ax = np.hstack([A_full, np.zeros((m, n_art))])
            l_ext = np.concatenate([l_ext, np.zeros(n_art)])
            u_ext = np.concatenate([u_ext, np.full(n_art, INF)])
            x = np.concatenate([x, np.zeros(n_art)])
            flags = np.concatenate([flags, np.full(n_art, AT_LOWER, dtype=np.int8)])
        art_of_row = {i: nn + k for k, i in enumerate(art_rows)}
        for i in range(m):
            sj = n + i
            if i not in art_of_row:
                basis[i] = sj
                x[sj] = resid[i]
            else:
                if resid[i] > self.slack_ub[i]:
                    x[sj], flags[sj] = self.slack_ub[i], AT_UPPER
                else:
                    x[sj], flags[sj] = self.slack_lb[i], AT_LOWER
                rem = resid[i] - x[sj]
                aj = art_of_row[i]
                Ax[i, aj] = 1.0 if rem >= 0 else -1.0
                x[aj] = abs(rem)
                basis[i] = aj
        for i in range(m):
            flags[basis[i]] = BASIC

        max_iters = 2000 + 60 * (m + ntot)
        state = _PrimalState(Ax, l_ext, u_ext, x, basis, flags, ntot)

        if n_art:
            c1 = np.zeros(ntot)
            c1[nn:] = 1.0
            st = state.run(c1, max_iters, allow_unbounded=False)
            if st != OPTIMAL:
                raise KernelError("phase-1 simplex did not terminate cleanly")
            if float(c1 @ state.x) > 1e-7 * (1.0 + np.abs(self.b).max(initial=0.0)):
                return EngineResult(INFEASIBLE)
            state.l[nn:] = 0.0
            state.u[nn:] = 0.0
            state.x[nn:] = 0.0

        c2 = np.zeros(ntot)
        c2[:n] = self.c
        st = state.run(c2, max_iters, allow_unbounded=True)
        if st == UNBOUNDED:
            return EngineResult(UNBOUNDED)
        if st != OPTIMAL:
            raise KernelError("phase-2 simplex did not terminate cleanly")

        # A basis still holding an artificial (at zero) is not reusable.
        reusable = all(j < nn for j in state.basis)
        flags_out = state.flags[:nn].copy()
        basis_out = list(state.basis) if reusable else None
        y = c2[state.basis] @ state.Binv
        xs = state.x[:n].copy()
        res = self._A_ext @ xs
        for i in range(m):
            v = res[i] - self.b[i]
            scale = 1.0 + abs(self.b[i])
            s = self.senses[i]
            if (s == LE and v > 1e-7 * scale) or (s == GE and v < -1e-7 * scale) or (
                s == EQ and abs(v) > 1e-7 * scale
            ):
                raise KernelError(f"row {i} violated by {v}")
        y = np.asarray(y)
        return EngineResult(
            OPTIMAL,
            xs,
            y,
            float(self.c @ xs),
            basis_out,
            flags_out if reusable else None,
            self.c - y @ self._A_ext,
        )

    # -- warm path: bounded dual simplex ---------------------------------------

    def _dual_warm(self, l, u, basis, flags) -> EngineResult | None:
        """Dual simplex from a parent basis after bound changes; returns
        None to request a cold fallback."""
        n, m = self.n, self.m
        A = self._full_matrix()
        nn = n + m
        l_ext, u_ext = self._ext_bounds(l, u)

        basis = list(basis)
        flags = np.array(flags, dtype=np.int8, copy=True)
        if len(flags) < nn:  # rows appended since the state was stored
            extra = nn - len(flags)
            flags = np.concatenate([flags, np.full(extra, AT_LOWER, dtype=np.int8)])
        if len(basis) < m:
            for i in range(len(basis), m):
                basis.append(n + i)
        for i in range(m):
            flags[basis[i]] = BASIC

        try:
            Binv = np.linalg.inv(A[:, basis])
        except np.linalg.LinAlgError:
            return None

        x = np.zeros(nn)
        nonbasic = flags != BASIC
        x[nonbasic & (flags == AT_LOWER)] = l_ext[nonbasic & (flags == AT_LOWER)]
        x[nonbasic & (flags == AT_UPPER)] = u_ext[nonbasic & (flags == AT_UPPER)]
        if np.any(~np.isfinite(x)):
            return None
        cx = np.zeros(nn)
        cx[:n] = self.c

        basis_arr = np.array(basis)
        xb = Binv @ (self.b - A @ (x * nonbasic))
        x[basis_arr] = xb

        y = cx[basis_arr] @ Binv
        d = cx - y @ A
        lower_nb = nonbasic & (flags == AT_LOWER)
        upper_nb = nonbasic & (flags == AT_UPPER)
        free_nb = nonbasic & (flags == FREE_NB)
        fixed = l_ext == u_ext
        if (
            np.any(d[lower_nb & ~fixed] < -1e-6)
            or np.any(d[upper_nb & ~fixed] > 1e-6)
            or np.any(np.abs(d[free_nb]) > 1e-6)
        ):
            return None  # parent basis is not dual feasible here

        max_iters = 500 + 30 * m
        for _ in range(max_iters):
            below = l_ext[basis_arr] - x[basis_arr]
            above = x[basis_arr] - u_ext[basis_arr]
            worst_below = below.max(initial=-INF)
            worst_above = above.max(initial=-INF)
            if max(worst_below, worst_above) <= FEAS_TOL * 10:
                flags_out = flags.copy()
                for i in range(m):
                    flags_out[basis_arr[i]] = BASIC
                try:
                    return self._finish(
                        A, cx, x, list(basis_arr), flags_out, l_ext, u_ext, Binv=Binv
                    )
                except KernelError:
                    return None
            if worst_above >= worst_below:
                r = int(np.argmax(above))
                sigma = 1.0
                target = u_ext[basis_arr[r]]
            else:
                r = int(np.argmax(below))
                sigma = -1.0
                target = l_ext[basis_arr[r]]

            alpha = Binv[r] @ A
            eligible = np.zeros(nn, dtype=bool)
            eligible |= (flags == AT_LOWER) & (sigma * alpha > 1e-9)
            eligible |= (flags == AT_UPPER) & (sigma * alpha < -1e-9)
            eligible |= (flags == FREE_NB) & (np.abs(alpha) > 1e-9)
            eligible &= ~fixed
            eligible[basis_arr] = False
            if not eligible.any():
                return EngineResult(INFEASIBLE)
            idx = np.nonzero(eligible)[0]
            ratios = d[idx] / (sigma * alpha[idx])
            ratios = np.maximum(ratios, 0.0)
            e = int(idx[np.argmin(ratios)])

            w = Binv @ A[:, e]
            if abs(w[r]) < 1e-10:
                return None
            leaving = basis_arr[r]
            delta_e = (x[leaving] - target) / w[r]
            x[basis_arr] = x[basis_arr] - delta_e * w
            x[leaving] = target
            flags[leaving] = AT_UPPER if sigma > 0 else AT_LOWER
            x[e] = x[e] + delta_e
            flags[e] = BASIC
            basis_arr[r] = e

            piv = w[r]
            Binv[r] /= piv
            other = np.arange(m) != r
            Binv[other] -= np.outer(w[other], Binv[r])

            y = cx[basis_arr] @ Binv
            d = cx - y @ A
        return None  # iteration cap: fall back


class _PrimalState:
    """Mutable primal-simplex state shared by the two cold phases."""

    def __init__(self, A, l, u, x, basis, flags, ntot):
        self.A = A
        self.l = l
        self.u = u
        self.x = x
        self.basis = basis
        self.flags = flags
        self.ntot = ntot
        self.m = A.shape[0]
        self.Binv = None
        self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as e:  # pragma: no cover - defensive
            raise KernelError("singular basis") from e

    def run(self, c, max_iters, allow_unbounded):
        m = self.m
        degen_streak = 0
        bland = False
        since_refactor = 0
        for _ in range(max_iters):
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            fl = self.flags
            viol = np.zeros(self.ntot)
            lower_mask = fl == AT_LOWER
            upper_mask = fl == AT_UPPER
            free_mask = fl == FREE_NB
            viol[lower_mask] = np.minimum(d[lower_mask], 0.0)
            viol[upper_mask] = -np.maximum(d[upper_mask], 0.0)
            viol[free_mask] = -np.abs(d[free_mask])
            fixed = self.l == self.u
            viol[fixed & ~(fl == BASIC)] = 0.0
            eligible = viol < -RC_TOL
            if not eligible.any():
                return OPTIMAL
            if bland:
                e = int(np.nonzero(eligible)[0][0])
            else:
                e = int(np.argmin(viol))
            if fl[e] == AT_LOWER:
                tdir = 1.0
            elif fl[e] == AT_UPPER:
                tdir = -1.0
            else:
                tdir = 1.0 if d[e] < 0 else -1.0

            w = self.Binv @ self.A[:, e]
            xb = self.x[self.basis]
            lb_b = self.l[self.basis]
            ub_b = self.u[self.basis]
            eff = tdir * w
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = np.where(eff > 1e-11, (xb - lb_b) / eff, INF)
                inc = np.where(eff < -1e-11, (ub_b - xb) / (-eff), INF)
            limits = np.minimum(dec, inc)
            basic_limit = float(limits.min(initial=INF))
            own_limit = self.u[e] - self.l[e]
            delta = min(basic_limit, own_limit)
            if not np.isfinite(delta):
                if allow_unbounded:
                    return UNBOUNDED
                raise KernelError("phase-1 unbounded: inconsistent state")
            delta = max(delta, 0.0)

            if np.isfinite(own_limit) and own_limit <= basic_limit + 1e-12:
                # Bound flip: entering variable crosses to its other bound.
                self.x[self.basis] = xb - delta * eff
                self.x[e] = self.x[e] + tdir * delta
                self.flags[e] = AT_UPPER if tdir > 0 else AT_LOWER
                degen_streak = 0
                continue

            cand = np.nonzero(limits <= delta + 1e-12)[0]
            if cand.size == 0:  # pragma: no cover - defensive
                raise KernelError("ratio test found no leaving row")
            r = int(cand[np.argmin(self.basis[cand])])
            delta = float(max(limits[r], 0.0))

            self.x[self.basis] = xb - delta * eff
            leaving = self.basis[r]
            if eff[r] > 0:
                self.x[leaving] = self.l[leaving]
                self.flags[leaving] = AT_LOWER
            else:
                self.x[leaving] = self.u[leaving]
                self.flags[leaving] = AT_UPPER
            self.x[e] = self.x[e] + tdir * delta
            self.flags[e] = BASIC
            self.basis[r] = e

            piv = w[r]
            if abs(piv) < 1e-11:
                self._refactor()
            else:
                self.Binv[r] /= piv
                other = np.arange(m) != r
                self.Binv[other] -= np.outer(w[other], self.Binv[r])
            since_refactor += 1
            if since_refactor >= 100:
                self._refactor()
                since_refactor = 0

            if delta <= 1e-12:
                degen_streak += 1
                if degen_streak > 2 * (m + self.ntot):
                    bland = True
            else:
                degen_streak = 0
                bland = False
        raise KernelError("simplex iteration limit exceeded")


def _simplex(c, A, senses, b, l, u):
    """One-shot solve; returns (status, x, duals, objective)."""
    engine = SimplexEngine(c, A, senses, b)
    res = engine.solve(np.asarray(l, dtype=float), np.asarray(u, dtype=float))
    if res.status != OPTIMAL:
        return res.status, None, None, None
    return OPTIMAL, res.x, list(res.duals), res.objective


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve to a basic optimal solution with duals, or report
    INFEASIBLE / UNBOUNDED."""
    c, A, senses, b, l, u = lp.dense()
    if lp.sense == MAX:
        c = -c
    status, x, y, obj = _simplex(c, A, senses, b, l, u)
    if status != OPTIMAL:
        return LpSolution(status=status, objective=math.nan)
    if lp.sense == MAX:
        obj = -obj
        y = [-v for v in y]
    primal = {vid: float(x[j]) for j, vid in enumerate(lp.var_ids)}
    return LpSolution(
        status=OPTIMAL,
        objective=obj + float(lp.objective_offset),
        primal=primal,
        duals=list(y),
    )
