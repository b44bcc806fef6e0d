"""Small dense LP/MILP solver.

``solve_lp`` is a two-phase bounded-variable primal simplex on an explicit
tableau with Harris ratio test and a Bland fallback against cycling.
``solve_milp`` runs best-bound branch-and-bound over binary variables on top
of it.  Sized for restoration windows of a few hundred rows and columns.
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

log = logging.getLogger(__name__)

INF = math.inf
FEAS_TOL = 1e-7
INT_TOL = 1e-6
_PIV_TOL = 1e-9
_DJ_TOL = 1e-9
_REFACTOR_EVERY = 100


class Sense(enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class VarKind(enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    GAP_LIMIT = "gap_limit"
    ERROR = "error"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    lb: float = 0.0
    ub: float = INF
    kind: VarKind = VarKind.CONTINUOUS
    name: str = ""


@dataclass(frozen=True)
class Constraint:
    coefs: dict[int, float]
    sense: Sense
    rhs: float
    name: str = ""


class MilpModel:
    """Variables, linear constraints and a linear objective.

    Built incrementally with :meth:`add_var` / :meth:`add_constraint`.
    """

    def __init__(self, maximize: bool = True):
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.maximize = maximize
        self.obj_offset = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binaries(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.kind is VarKind.BINARY]

    def add_var(self, lb=0.0, ub=INF, kind=VarKind.CONTINUOUS, name="") -> int:
        lb, ub = float(lb), float(ub)
        if kind is VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if math.isnan(lb) or math.isnan(ub) or lb == INF or ub == -INF:
            raise ModelError(f"invalid bounds [{lb}, {ub}] for variable {name!r}")
        self.variables.append(Variable(lb, ub, kind, name or f"x{len(self.variables)}"))
        return len(self.variables) - 1

    def _clean(self, coefs) -> dict[int, float]:
        items = coefs.items() if isinstance(coefs, dict) else coefs
        out: dict[int, float] = {}
        for j, a in items:
            j, a = int(j), float(a)
            if not 0 <= j < self.n_vars:
                raise ModelError(f"coefficient index {j} out of range")
            if not math.isfinite(a):
                raise ModelError(f"non-finite coefficient on variable {j}")
            out[j] = out.get(j, 0.0) + a
        return {j: a for j, a in out.items() if a != 0.0}

    def add_constraint(self, coefs, sense: Sense | str, rhs: float, name="") -> int:
        sense = Sense(sense)
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ModelError(f"non-finite right-hand side in {name!r}")
        self.constraints.append(
            Constraint(self._clean(coefs), sense, rhs, name or f"c{len(self.constraints)}")
        )
        return len(self.constraints) - 1

    def set_objective(self, coefs, maximize: bool | None = None, offset: float = 0.0):
        self.objective = self._clean(coefs)
        if maximize is not None:
            self.maximize = maximize
        self.obj_offset = float(offset)

    # dense views ------------------------------------------------------------

    def arrays(self):
        n, m = self.n_vars, self.n_constraints
        c = np.zeros(n)
        for j, a in self.objective.items():
            c[j] = a
        A = np.zeros((m, n))
        b = np.empty(m)
        senses = []
        for i, con in enumerate(self.constraints):
            for j, a in con.coefs.items():
                A[i, j] = a
            b[i] = con.rhs
            senses.append(con.sense)
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        return c, A, senses, b, lb, ub

    def evaluate(self, x) -> float:
        return self.obj_offset + sum(a * x[j] for j, a in self.objective.items())

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for j, v in enumerate(self.variables):
            worst = max(worst, v.lb - x[j], x[j] - v.ub)
        for con in self.constraints:
            lhs = sum(a * x[j] for j, a in con.coefs.items())
            if con.sense is Sense.LE:
                worst = max(worst, lhs - con.rhs)
            elif con.sense is Sense.GE:
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    def to_lp(self) -> str:
        """CPLEX LP text for cross-checking with external solvers."""

        def term(a, j, first):
            sign = "-" if a < 0 else ("" if first else "+")
            return f"{sign} {abs(a):.17g} {self.variables[j].name}".strip()

        def expr(coefs):
            if not coefs:
                return "0 " + self.variables[0].name if self.variables else "0"
            return " ".join(term(a, j, i == 0) for i, (j, a) in enumerate(sorted(coefs.items())))

        ops = {Sense.LE: "<=", Sense.GE: ">=", Sense.EQ: "="}
        lines = ["Maximize" if self.maximize else "Minimize", f" obj: {expr(self.objective)}"]
        lines.append("Subject To")
        for con in self.constraints:
            lines.append(f" {con.name}: {expr(con.coefs)} {ops[con.sense]} {con.rhs:.17g}")
        lines.append("Bounds")
        for v in self.variables:
            if v.kind is VarKind.BINARY:
                continue
            lo = "-inf" if v.lb == -INF else f"{v.lb:.17g}"
            hi = "+inf" if v.ub == INF else f"{v.ub:.17g}"
            lines.append(f" {lo} <= {v.name} <= {hi}")
        bins = [v.name for v in self.variables if v.kind is VarKind.BINARY]
        if bins:
            lines.append("Binary")
            lines.extend(f" {name}" for name in bins)
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class MilpSolution:
    status: Status
    values: np.ndarray | None = None
    objective: float = math.nan
    gap: float = 0.0
    node_count: int = 0
    bound: float = math.nan
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.GAP_LIMIT) and self.values is not None


# ---------------------------------------------------------------------------
# LP core


@dataclass
class _LpResult:
    status: Status
    x: np.ndarray | None = None
    obj: float = math.nan
    iterations: int = 0


class _Tableau:
    """Bounded primal simplex on ``[A I] (x, s) = b`` (minimization)."""

    def __init__(self, A, b, lo, hi):
        m, n = A.shape
        self.m, self.n = m, n
        self.full = np.hstack([A, np.eye(m)])
        self.b = b
        self.lo, self.hi = lo, hi
        N = n + m
        x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        self.x = x
        resid = b - self.full @ x
        self.basis = np.full(m, -1, dtype=int)
        self.sign = np.ones(m)
        self.is_basic = np.zeros(N, dtype=bool)
        self.xB = np.empty(m)
        T = self.full.copy()
        for i in range(m):
            s = n + i
            val = x[s] + resid[i]
            if lo[s] - FEAS_TOL <= val <= hi[s] + FEAS_TOL:
                self.basis[i] = s
                self.is_basic[s] = True
                self.xB[i] = val
            else:
                sg = 1.0 if resid[i] >= 0 else -1.0
                self.sign[i] = sg
                T[i] *= sg
                self.xB[i] = abs(resid[i])
        self.T = T
        self.art_hi = INF
        self.iterations = 0
        self.pivots_since_refactor = 0

    def basic_bounds(self):
        lo = np.where(self.basis >= 0, self.lo[np.maximum(self.basis, 0)], 0.0)
        hi = np.where(self.basis >= 0, self.hi[np.maximum(self.basis, 0)], self.art_hi)
        return lo, hi

    def refactor(self):
        m = self.m
        if m == 0:
            return
        B = np.empty((m, m))
        for i in range(m):
            j = self.basis[i]
            if j >= 0:
                B[:, i] = self.full[:, j]
            else:
                B[:, i] = 0.0
                B[i, i] = self.sign[i]
        nb = ~self.is_basic
        rhs = self.b - self.full[:, nb] @ self.x[nb]
        try:
            sol = np.linalg.solve(B, np.column_stack([rhs, self.full]))
        except np.linalg.LinAlgError:
            return
        self.xB = sol[:, 0]
        self.T = sol[:, 1:]
        self.pivots_since_refactor = 0

    def reduced_costs(self, cost, art_cost):
        cb = np.where(self.basis >= 0, cost[np.maximum(self.basis, 0)], art_cost)
        d = cost - cb @ self.T
        d[self.is_basic] = 0.0
        return d

    def run(self, cost, art_cost, max_iter, bland_after):
        """Iterate to optimality for ``cost``; returns 'optimal', 'unbounded' or 'limit'."""
        d = self.reduced_costs(cost, art_cost)
        fixed = self.hi - self.lo <= 0
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= max_iter:
                return "limit"
            can_inc = (d < -_DJ_TOL) & (self.x < self.hi - 1e-12)
            can_dec = (d > _DJ_TOL) & (self.x > self.lo + 1e-12)
            elig = (can_inc | can_dec) & ~self.is_basic & ~fixed
            if not elig.any():
                return "optimal"
            if bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                j = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            dirn = 1.0 if d[j] < 0 else -1.0
            alpha = dirn * self.T[:, j]
            loB, hiB = self.basic_bounds()
            theta_flip = self.hi[j] - self.lo[j]

            dec = alpha > _PIV_TOL
            inc = alpha < -_PIV_TOL
            ratio = np.full(self.m, INF)
            relax = np.full(self.m, INF)
            with np.errstate(invalid="ignore", divide="ignore"):
                room = self.xB - loB
                ratio = np.where(dec, room / alpha, ratio)
                relax = np.where(dec, (room + FEAS_TOL * 0.1) / alpha, relax)
                room = hiB - self.xB
                ratio = np.where(inc, room / -alpha, ratio)
                relax = np.where(inc, (room + FEAS_TOL * 0.1) / -alpha, relax)
            ratio = np.where(np.isnan(ratio), INF, ratio)
            relax = np.where(np.isnan(relax), INF, relax)
            r = -1
            theta = INF
            if (dec | inc).any():
                if bland:
                    tmin = ratio.min()
                    if math.isfinite(tmin):
                        ties = np.flatnonzero(ratio <= tmin + 1e-12)
                        keys = np.where(self.basis[ties] >= 0, self.basis[ties], self.n + self.m + ties)
                        r = int(ties[np.argmin(keys)])
                        theta = max(ratio[r], 0.0)
                else:
                    tr = relax.min()
                    if math.isfinite(tr):
                        cand = np.flatnonzero(ratio <= tr)
                        r = int(cand[np.argmax(np.abs(alpha[cand]))])
                        theta = max(ratio[r], 0.0)
            if theta_flip <= theta:
                if not math.isfinite(theta_flip):
                    return "unbounded"
                self.xB -= theta_flip * alpha
                self.x[j] = self.hi[j] if dirn > 0 else self.lo[j]
                self.iterations += 1
                degenerate = 0
                continue
            if r < 0:
                return "unbounded"
            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > bland_after:
                    bland = True
            else:
                degenerate = 0
            self.xB -= theta * alpha
            leaving = self.basis[r]
            if leaving >= 0:
                self.x[leaving] = loB[r] if alpha[r] > 0 else hiB[r]
                self.is_basic[leaving] = False
            enter_val = self.x[j] + dirn * theta
            self._pivot(r, j)
            self.xB[r] = enter_val
            self.x[j] = enter_val
            d -= d[j] * self.T[r]
            d[j] = 0.0
            if self.pivots_since_refactor >= _REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost, art_cost)

    def _pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.is_basic[j] = True
        self.pivots_since_refactor += 1

    def drive_out_artificials(self):
        fixed = self.hi - self.lo <= 0
        for i in np.flatnonzero(self.basis < 0):
            row = np.where(~self.is_basic & ~fixed, np.abs(self.T[i]), 0.0)
            j = int(np.argmax(row)) if row.size else 0
            if row.size and row[j] > 1e-7:
                self._pivot(i, j)
                self.xB[i] = self.x[j]

    def solution(self):
        x = self.x.copy()
        real = self.basis >= 0
        x[self.basis[real]] = self.xB[real]
        return x


def _lp_arrays(c, A, senses, b, lo, hi, maximize):
    """Scale and convert to min c'x', [A' I](x', s) = b'."""
    m, n = A.shape
    rs = np.abs(A).max(axis=1) if n else np.zeros(m)
    rs = np.where(rs > 0, 1.0 / np.where(rs > 0, rs, 1.0), 1.0)
    A1 = A * rs[:, None]
    cs = np.abs(A1).max(axis=0) if m else np.zeros(n)
    cs = np.where(cs > 0, 1.0 / np.where(cs > 0, cs, 1.0), 1.0)
    As = A1 * cs[None, :]
    bs = b * rs
    slo = np.array([0.0 if s is not Sense.GE else -INF for s in senses])
    shi = np.array([INF if s is Sense.LE else 0.0 for s in senses])
    lo_s = np.concatenate([lo / cs, slo])
    hi_s = np.concatenate([hi / cs, shi])
    cost = np.concatenate([(-c if maximize else c) * cs, np.zeros(m)])
    return As, bs, lo_s, hi_s, cost, cs


def _simplex(c, A, senses, b, lo, hi, maximize) -> _LpResult:
    m, n = A.shape
    if np.any(lo > hi + 1e-12):
        return _LpResult(Status.INFEASIBLE)
    As, bs, lo_s, hi_s, cost, cs = _lp_arrays(c, A, senses, b, lo, hi, maximize)
    tab = _Tableau(As, bs, lo_s, hi_s)
    N = n + m
    max_iter = 50 * (m + N) + 1000
    bland_after = 3 * (m + N)
    if (tab.basis < 0).any():
        phase1 = np.zeros(N)
        st = tab.run(phase1, 1.0, max_iter, bland_after)
        if st == "limit":
            return _LpResult(Status.ERROR, iterations=tab.iterations)
        tab.refactor()
        infeas = tab.xB[tab.basis < 0].sum()
        if infeas > FEAS_TOL:
            return _LpResult(Status.INFEASIBLE, iterations=tab.iterations)
        tab.art_hi = 0.0
        tab.drive_out_artificials()
        tab.xB[tab.basis < 0] = 0.0
    st = tab.run(cost, 0.0, max_iter, bland_after)
    if st == "limit":
        return _LpResult(Status.ERROR, iterations=tab.iterations)
    if st == "unbounded":
        return _LpResult(Status.UNBOUNDED, iterations=tab.iterations)
    tab.refactor()
    xs = tab.solution()
    x = xs[:n] * cs
    # snap onto bounds violated only by round-off
    x = np.where((x < lo) & (x > lo - FEAS_TOL), lo, x)
    x = np.where((x > hi) & (x < hi + FEAS_TOL), hi, x)
    return _LpResult(Status.OPTIMAL, x, float(c @ x), tab.iterations)


def _trivial_rows(A, senses, b):
    """Drop empty rows; return (keep mask, infeasible flag)."""
    empty = ~np.any(A != 0, axis=1)
    bad = False
    for i in np.flatnonzero(empty):
        s = senses[i]
        if (s is Sense.LE and b[i] < -FEAS_TOL) or (s is Sense.GE and b[i] > FEAS_TOL) or (
            s is Sense.EQ and abs(b[i]) > FEAS_TOL
        ):
            bad = True
    return ~empty, bad


class _Dense:
    def __init__(self, model: MilpModel):
        c, A, senses, b, lb, ub = model.arrays()
        keep, bad = _trivial_rows(A, senses, b) if len(b) else (np.zeros(0, bool), False)
        self.c = c
        self.A = A[keep]
        self.senses = [s for s, k in zip(senses, keep) if k]
        self.b = b[keep]
        self.lb, self.ub = lb, ub
        self.infeasible_rows = bad
        self.maximize = model.maximize
        self.offset = model.obj_offset

    def lp(self, lb=None, ub=None) -> _LpResult:
        if self.infeasible_rows:
            return _LpResult(Status.INFEASIBLE)
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        res = _simplex(self.c, self.A, self.senses, self.b, lb, ub, self.maximize)
        if res.status is Status.OPTIMAL:
            res.obj += self.offset
        return res


def solve_lp(model: MilpModel) -> MilpSolution:
    """Solve the continuous relaxation (binaries relaxed to [0, 1])."""
    res = _Dense(model).lp()
    if res.status is not Status.OPTIMAL:
        return MilpSolution(res.status, iterations=res.iterations, message=res.status.value)
    return MilpSolution(
        Status.OPTIMAL, res.x, res.obj, 0.0, 1, res.obj, res.iterations
    )


# ---------------------------------------------------------------------------
# branch and bound


def _granularity(model: MilpModel, dense: _Dense) -> float:
    """Step size of the objective over integer points, or 0 if not lattice-valued."""
    bins = set(model.binaries)
    coefs = []
    for j, a in model.objective.items():
        if j not in bins:
            if dense.lb[j] == dense.ub[j]:
                continue
            return 0.0
        coefs.append(abs(a))
    if not coefs:
        return 0.0
    fracs = [Fraction(a).limit_denominator(10**6) for a in coefs]
    if any(abs(float(f) - a) > 1e-12 * max(1.0, a) for f, a in zip(fracs, coefs)):
        return 0.0
    den = math.lcm(*[f.denominator for f in fracs])
    g = 0
    for f in fracs:
        g = math.gcd(g, f.numerator * (den // f.denominator))
    return g / den if g else 0.0


@dataclass(order=True)
class _Node:
    key: float
    seq: int
    bound: float = field(compare=False)
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    x: np.ndarray = field(compare=False)
    depth: int = field(compare=False, default=0)


def solve_milp(
    model: MilpModel,
    abs_gap: float = 1e-6,
    node_limit: int = 200_000,
    heuristic_every: int = 25,
) -> MilpSolution:
    """Best-bound branch-and-bound on the binary variables.

    Branches on the most fractional binary (lowest index on ties); open nodes
    are explored best bound first, FIFO among equal bounds.
    """
    dense = _Dense(model)
    bins = np.array(model.binaries, dtype=int)
    root = dense.lp()
    if root.status is not Status.OPTIMAL:
        return MilpSolution(root.status, node_count=1, iterations=root.iterations,
                            message=f"root relaxation {root.status.value}")
    if bins.size == 0:
        return MilpSolution(Status.OPTIMAL, root.x, root.obj, 0.0, 1, root.obj, root.iterations)

    sgn = 1.0 if model.maximize else -1.0
    step = _granularity(model, dense)

    def tighten(bound):
        # internal (maximization) bound -> best value an integer point can reach
        if step > 0:
            return step * math.floor((bound - dense.offset * sgn) / step + 1e-6) + dense.offset * sgn
        return bound

    best_x = None
    best = -INF
    iterations = root.iterations
    nodes = 1
    seq = 0

    def fractional(x):
        v = x[bins]
        f = np.abs(v - np.round(v))
        return f > INT_TOL

    def try_incumbent(x):
        nonlocal best, best_x
        xr = x.copy()
        xr[bins] = np.round(xr[bins])
        val = sgn * model.evaluate(xr)
        if val > best + 1e-12:
            best, best_x = val, xr

    def rounding_heuristic(x, lb, ub):
        nonlocal iterations, nodes
        for mode in ("floor", "nearest"):
            v = np.floor(x[bins] + INT_TOL) if mode == "floor" else np.round(x[bins])
            v = np.clip(v, lb[bins], ub[bins])
            hl, hu = lb.copy(), ub.copy()
            hl[bins] = v
            hu[bins] = v
            res = dense.lp(hl, hu)
            iterations += res.iterations
            nodes += 1
            if res.status is Status.OPTIMAL:
                try_incumbent(res.x)

    heap: list[_Node] = []

    def consider(res, lb, ub, depth):
        nonlocal seq
        if res.status is not Status.OPTIMAL:
            return
        bound = tighten(sgn * res.obj)
        if not fractional(res.x).any():
            try_incumbent(res.x)
            return
        if bound <= best + abs_gap:
            return
        seq += 1
        heapq.heappush(heap, _Node(-bound, seq, bound, lb, ub, res.x, depth))

    consider(root, dense.lb.copy(), dense.ub.copy(), 0)
    root_bound = tighten(sgn * root.obj)
    if heap and heuristic_every:
        rounding_heuristic(root.x, dense.lb, dense.ub)

    processed = 0
    while heap:
        top_bound = heap[0].bound
        if top_bound <= best + abs_gap:
            heap.clear()
            break
        if nodes >= node_limit:
            gap = top_bound - best
            return _finish(model, best_x, best, sgn, Status.GAP_LIMIT, gap, nodes,
                           top_bound, iterations)
        node = heapq.heappop(heap)
        processed += 1
        frac = fractional(node.x)
        v = node.x[bins]
        closeness = np.where(frac, np.abs(v - np.floor(v) - 0.5), INF)
        k = int(np.argmin(closeness))
        j = int(bins[k])
        for val in (0.0, 1.0):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[j] = ub[j] = val
            res = dense.lp(lb, ub)
            iterations += res.iterations
            nodes += 1
            if res.status is Status.OPTIMAL and sgn * res.obj > node.bound + 1e-6 * max(1.0, abs(node.bound)) and step == 0:
                log.debug("child bound exceeds parent bound by %g", sgn * res.obj - node.bound)
            consider(res, lb, ub, node.depth + 1)
        if heuristic_every and processed % heuristic_every == 0:
            rounding_heuristic(node.x, node.lb, node.ub)

    if best_x is None:
        return MilpSolution(Status.INFEASIBLE, node_count=nodes, iterations=iterations,
                            message="no integer-feasible point")
    bound = max(best, min(root_bound, best)) if not heap else heap[0].bound
    return _finish(model, best_x, best, sgn, Status.OPTIMAL, 0.0, nodes, bound, iterations)


def _finish(model, x, best, sgn, status, gap, nodes, bound, iterations):
    if x is None:
        return MilpSolution(status, None, math.nan, gap, nodes, sgn * bound, iterations,
                            "node limit reached without incumbent")
    return MilpSolution(status, x, model.evaluate(x), max(gap, 0.0), nodes, sgn * bound, iterations)


# ---------------------------------------------------------------------------
# optional external backend


BACKENDS = ("native", "highs")


def _highs_arrays(model: MilpModel):
    from scipy.optimize import Bounds, LinearConstraint

    c, A, senses, b, lb, ub = model.arrays()
    lo = np.array([-INF if s is Sense.LE else v for s, v in zip(senses, b)])
    hi = np.array([INF if s is Sense.GE else v for s, v in zip(senses, b)])
    cons = [LinearConstraint(A, lo, hi)] if len(b) else []
    cost = -c if model.maximize else c
    return cost, cons, Bounds(lb, ub)


def solve_milp_highs(model: MilpModel, abs_gap: float = 1e-6, relax: bool = False,
                     time_limit: float | None = None) -> MilpSolution:
    """Same contract as ``solve_milp`` but delegated to HiGHS through scipy."""
    from scipy.optimize import milp

    cost, cons, bounds = _highs_arrays(model)
    integrality = np.zeros(model.n_vars)
    if not relax:
        integrality[model.binaries] = 1
    opts = {"mip_rel_gap": 0.0, "presolve": True}
    if time_limit:
        opts["time_limit"] = time_limit
    res = milp(cost, constraints=cons, integrality=integrality, bounds=bounds, options=opts)
    if res.status == 2:
        return MilpSolution(Status.INFEASIBLE, message=res.message)
    if res.status == 3:
        return MilpSolution(Status.UNBOUNDED, message=res.message)
    if res.x is None:
        return MilpSolution(Status.ERROR, message=res.message)
    x = np.asarray(res.x, dtype=float)
    if not relax:
        x[model.binaries] = np.round(x[model.binaries])
    obj = model.evaluate(x)
    dual = getattr(res, "mip_dual_bound", None)
    bound = obj if dual is None or not np.isfinite(dual) else float(-dual if model.maximize else dual)
    status = Status.OPTIMAL if res.status == 0 else Status.GAP_LIMIT
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    return MilpSolution(status, x, obj, abs(bound - obj) if status is Status.GAP_LIMIT else 0.0,
                        nodes, bound, 0, str(res.message))


def solve(model: MilpModel, backend: str = "native", **kw) -> MilpSolution:
    if backend == "native":
        return solve_milp(model, **kw)
    if backend == "highs":
        kw.pop("node_limit", None)
        kw.pop("heuristic_every", None)
        return solve_milp_highs(model, **kw)
    raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def solve_relaxation(model: MilpModel, backend: str = "native") -> MilpSolution:
    if backend == "highs":
        return solve_milp_highs(model, relax=True)
    return solve_lp(model)
