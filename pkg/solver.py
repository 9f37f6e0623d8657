"""
Linear and mixed-binary programming for the scheduling and control problems.

The LP engine is a two-phase dense tableau simplex with implicit variable upper
bounds (bound flipping), Dantzig pricing and a switch to Bland's rule when the
objective stalls. Binary variables are handled by best-bound branch-and-bound
with most-fractional branching and a simple-rounding incumbent heuristic.
"""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidModel, ResourceExhausted

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEFAULT_NODE_LIMIT = 5000


class Relation(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class Variable:
    """Decision variable with box bounds"""

    name: str
    lower: float = 0.0
    upper: float = math.inf
    is_binary: bool = False


@dataclass
class Constraint:
    """Sparse linear constraint ``coefficients · x (relation) rhs``"""

    coefficients: Dict[str, float]
    relation: Relation
    rhs: float
    name: str = ""


@dataclass
class Solution:
    """Result of solve_lp / solve_milp

    Args:
        status (Status): Optimal, Infeasible or Unbounded
        values (Dict[str, float]): Variable values, empty unless Optimal
        objective (float): Objective value including the constant term
        iterations (int): Simplex pivots and bound flips performed
        nodes (int): Branch-and-bound nodes solved (1 for a plain LP)
    """

    status: Status
    values: Dict[str, float] = field(default_factory=dict)
    objective: float = math.nan
    iterations: int = 0
    nodes: int = 1

    @property
    def is_optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def vector(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self.values[n] for n in names], dtype=float)


class LinearProgram:
    """Minimisation program over named variables

    Variables are added in order; that order is the column order of the dense
    form and therefore also decides tie-breaking, which keeps solves
    deterministic.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective: Dict[str, float] = {}
        self.objective_constant = 0.0
        self._index: Dict[str, int] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def has_binaries(self) -> bool:
        return any(v.is_binary for v in self.variables)

    def variable(self, name: str) -> Variable:
        return self.variables[self._index[name]]

    def add_variable(self, name: str, lower: float = 0.0, upper: float = math.inf, is_binary: bool = False) -> str:
        if name in self._index:
            raise InvalidModel(f"duplicate variable {name}")
        if is_binary:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lower), float(upper), is_binary))
        return name

    def add_variables(self, prefix: str, count: int, lower: float = 0.0, upper: float = math.inf,
                      is_binary: bool = False) -> List[str]:
        return [self.add_variable(f"{prefix}[{i}]", lower, upper, is_binary) for i in range(count)]

    def fix(self, name: str, value: float):
        var = self.variable(name)
        var.lower = var.upper = float(value)

    def add_constraint(self, coefficients: Dict[str, float], relation: Relation, rhs: float, name: str = ""):
        terms = {k: float(v) for k, v in coefficients.items() if v != 0.0}
        self.constraints.append(Constraint(terms, Relation(relation), float(rhs), name))

    def add_objective(self, coefficients: Dict[str, float], constant: float = 0.0):
        for k, v in coefficients.items():
            self.objective[k] = self.objective.get(k, 0.0) + float(v)
        self.objective_constant += float(constant)

    def validate(self):
        """Raise InvalidModel when the program is malformed"""
        for var in self.variables:
            if math.isnan(var.lower) or math.isnan(var.upper):
                raise InvalidModel(f"variable {var.name} has a NaN bound")
            if var.is_binary and (var.lower < 0.0 or var.upper > 1.0):
                raise InvalidModel(f"binary {var.name} must stay within [0, 1]")
        for k, con in enumerate(self.constraints):
            label = con.name or f"c{k}"
            if not math.isfinite(con.rhs):
                raise InvalidModel(f"constraint {label} has a non-finite right-hand side")
            for name, value in con.coefficients.items():
                if name not in self._index:
                    raise InvalidModel(f"constraint {label} references unknown variable {name}")
                if not math.isfinite(value):
                    raise InvalidModel(f"constraint {label} has a non-finite coefficient on {name}")
        for name, value in self.objective.items():
            if name not in self._index:
                raise InvalidModel(f"objective references unknown variable {name}")
            if not math.isfinite(value):
                raise InvalidModel(f"objective coefficient on {name} is not finite")
        if not math.isfinite(self.objective_constant):
            raise InvalidModel("objective constant is not finite")

    def to_dense(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Dense arrays (c, A, senses, b, lower, upper, binary_mask)"""
        n, m = len(self.variables), len(self.constraints)
        c = np.zeros(n)
        for name, value in self.objective.items():
            c[self._index[name]] += value
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = np.empty(m, dtype="<U1")
        for i, con in enumerate(self.constraints):
            for name, value in con.coefficients.items():
                A[i, self._index[name]] += value
            b[i] = con.rhs
            senses[i] = {Relation.LE: "L", Relation.EQ: "E", Relation.GE: "G"}[con.relation]
        lower = np.array([v.lower for v in self.variables])
        upper = np.array([v.upper for v in self.variables])
        binary = np.array([v.is_binary for v in self.variables], dtype=bool)
        return c, A, senses, b, lower, upper, binary


class _BoundedSimplex:
    """Tableau simplex on ``A y = b, 0 <= y <= u`` with a given starting basis

    Nonbasic variables sit at zero in their current representation; a
    variable whose column is flipped stands for ``u - y``.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, upper: np.ndarray, basis: np.ndarray, max_iterations: int):
        m, n = A.shape
        self.m, self.n = m, n
        self.M = np.zeros((m + 1, n + 1))
        self.M[:m, :n] = A
        self.M[:m, n] = b
        self.upper = upper.astype(float).copy()
        self.basis = np.asarray(basis, dtype=int).copy()
        self.flipped = np.zeros(n, dtype=bool)
        self.is_basic = np.zeros(n, dtype=bool)
        self.is_basic[self.basis] = True
        self.iterations = 0
        self.max_iterations = max_iterations

    @property
    def objective(self) -> float:
        return -self.M[self.m, self.n]

    def set_costs(self, costs: np.ndarray):
        m, n = self.m, self.n
        current = np.where(self.flipped, -costs, costs)
        row = np.zeros(n + 1)
        row[:n] = current
        row[n] = -float(np.dot(costs[self.flipped], self.upper[self.flipped]))
        basic_costs = current[self.basis]
        nz = np.nonzero(basic_costs)[0]
        if nz.size:
            row -= basic_costs[nz] @ self.M[nz, :]
        self.M[m] = row

    def _pivot(self, i: int, j: int):
        M = self.M
        M[i] /= M[i, j]
        col = M[:, j].copy()
        col[i] = 0.0
        rows = np.nonzero(col)[0]
        if rows.size:
            M[rows] -= np.outer(col[rows], M[i])
        M[:, j] = 0.0
        M[i, j] = 1.0
        self.is_basic[self.basis[i]] = False
        self.is_basic[j] = True
        self.basis[i] = j

    def _flip_column(self, j: int):
        M = self.M
        M[:, self.n] -= self.upper[j] * M[:, j]
        M[:, j] *= -1.0
        self.flipped[j] = not self.flipped[j]

    def _flip_row(self, i: int):
        b = self.basis[i]
        M = self.M
        M[i, :self.n] *= -1.0
        M[i, b] = 1.0
        M[i, self.n] = self.upper[b] - M[i, self.n]
        self.flipped[b] = not self.flipped[b]

    def run(self) -> Status:
        m, n = self.m, self.n
        M = self.M
        movable = self.upper > PIVOT_TOL
        best = self.objective
        stall, bland = 0, False
        stall_limit = 2 * (m + n)
        while True:
            if self.iterations >= self.max_iterations:
                raise ResourceExhausted(f"simplex iteration limit of {self.max_iterations} reached")
            d = M[m, :n]
            candidates = np.nonzero((d < -OPT_TOL) & ~self.is_basic & movable)[0]
            if candidates.size == 0:
                return Status.OPTIMAL
            j = int(candidates[0]) if bland else int(candidates[np.argmin(d[candidates])])

            col = M[:m, j]
            beta = M[:m, n]
            ratios = np.full(m, np.inf)
            pos = col > PIVOT_TOL
            ratios[pos] = np.maximum(beta[pos], 0.0) / col[pos]
            basic_upper = self.upper[self.basis]
            neg = (col < -PIVOT_TOL) & np.isfinite(basic_upper)
            ratios[neg] = np.maximum(basic_upper[neg] - beta[neg], 0.0) / -col[neg]

            theta_own = self.upper[j]
            r_min = ratios.min() if m else np.inf
            if r_min < theta_own:
                ties = np.nonzero(ratios <= r_min + 1e-12)[0]
                if bland:
                    i = int(ties[np.argmin(self.basis[ties])])
                else:
                    i = int(ties[np.argmax(np.abs(col[ties]))])
                if neg[i]:
                    self._flip_row(i)
                self._pivot(i, j)
            elif np.isfinite(theta_own):
                self._flip_column(j)
            else:
                return Status.UNBOUNDED

            self.iterations += 1
            obj = self.objective
            if obj < best - 1e-12 * max(1.0, abs(best)):
                best, stall = obj, 0
            else:
                stall += 1
                if not bland and stall > stall_limit:
                    logger.debug(f"objective stalled for {stall} iterations, switching to Bland's rule")
                    bland = True

    def drop_columns_from(self, first_dropped: int) -> np.ndarray:
        """Pivot artificial columns out of the basis and delete them

        Returns:
            np.ndarray: Indices of the tableau rows that were kept
        """
        keep = []
        for i in range(self.m):
            if self.basis[i] >= first_dropped:
                row = self.M[i, :first_dropped]
                cand = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
                if cand.size == 0:
                    continue  # redundant row
                self._pivot(i, int(cand[np.argmax(np.abs(row[cand]))]))
            keep.append(i)
        keep = np.array(keep, dtype=int)
        cols = np.r_[np.arange(first_dropped), self.n]
        self.M = self.M[np.r_[keep, self.m]][:, cols]
        self.basis = self.basis[keep]
        self.m, self.n = len(keep), first_dropped
        self.upper = self.upper[:first_dropped]
        self.flipped = self.flipped[:first_dropped]
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basis] = True
        return keep

    def values(self) -> np.ndarray:
        y = np.zeros(self.n)
        y[self.basis] = self.M[:self.m, self.n]
        return np.where(self.flipped, self.upper - y, y)


def _activity_bounds(A: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    with np.errstate(invalid="ignore"):
        hi = np.where(A > 0.0, A * upper, np.where(A < 0.0, A * lower, 0.0)).sum(axis=1)
        lo = np.where(A > 0.0, A * lower, np.where(A < 0.0, A * upper, 0.0)).sum(axis=1)
    return lo, hi


def _solve_dense(c: np.ndarray, A: np.ndarray, senses: np.ndarray, b: np.ndarray,
                 lower: np.ndarray, upper: np.ndarray) -> Tuple[Status, Optional[np.ndarray], int]:
    """Solve min c·x over the dense program; returns (status, x, iterations)

    Fixed columns are substituted out and rows that cannot bind within the
    variable bounds are dropped before the simplex runs.
    """
    if np.any(lower > upper + FEAS_TOL):
        return Status.INFEASIBLE, None, 0
    fixed = upper - lower <= 1e-12
    x = np.where(fixed, lower, 0.0)
    free = ~fixed
    b_red = b - A[:, fixed] @ x[fixed]
    A_red = A[:, free]
    lo_act, hi_act = _activity_bounds(A_red, lower[free], upper[free])
    tol = 1e-9 * (1.0 + np.abs(b_red))
    slack_rows = ((senses == "L") & (hi_act <= b_red + tol)) | ((senses == "G") & (lo_act >= b_red - tol))
    if np.any((senses == "L") & (lo_act > b_red + FEAS_TOL)) or np.any((senses == "G") & (hi_act < b_red - FEAS_TOL)):
        return Status.INFEASIBLE, None, 0
    rows = ~slack_rows
    if not np.any(free):
        ok = _row_ok(A @ x, senses, b)
        return (Status.OPTIMAL, x, 0) if np.all(ok) else (Status.INFEASIBLE, None, 0)
    status, x_free, iterations = _solve_reduced(c[free], A_red[rows], senses[rows], b_red[rows], lower[free], upper[free])
    if status != Status.OPTIMAL:
        return status, None, iterations
    x[free] = x_free
    x[np.abs(x) < 1e-9] = 0.0
    return Status.OPTIMAL, x, iterations


def _solve_reduced(c: np.ndarray, A: np.ndarray, senses: np.ndarray, b: np.ndarray,
                   lower: np.ndarray, upper: np.ndarray) -> Tuple[Status, Optional[np.ndarray], int]:
    n = c.size

    # Column transform x = offset + S y with 0 <= y <= u
    columns: List[Tuple[int, float, float]] = []
    offset = np.zeros(n)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            columns.append((j, 1.0, max(hi - lo, 0.0) if np.isfinite(hi) else np.inf))
        elif np.isfinite(hi):
            offset[j] = hi
            columns.append((j, -1.0, np.inf))
        else:
            columns.extend([(j, 1.0, np.inf), (j, -1.0, np.inf)])
    orig, signs, ucols = (list(v) for v in zip(*columns))
    ny = len(orig)
    S = np.zeros((n, ny))
    S[orig, np.arange(ny)] = signs
    Ay = A @ S
    by = b - A @ offset
    cy = S.T @ c

    # Row normalisation: every row becomes L/G/E with a non-negative rhs
    rows_A, rows_b, kinds = [], [], []
    for i in range(A.shape[0]):
        a, rhs, kind = Ay[i].copy(), by[i], senses[i]
        if kind == "G":
            a, rhs, kind = -a, -rhs, "L"
        if not np.any(np.abs(a) > 0.0):
            if (kind == "L" and rhs < -FEAS_TOL) or (kind == "E" and abs(rhs) > FEAS_TOL):
                return Status.INFEASIBLE, None, 0
            continue
        if rhs < 0.0:
            a, rhs = -a, -rhs
            kind = "G" if kind == "L" else "E"
        rows_A.append(a)
        rows_b.append(rhs)
        kinds.append(kind)

    m = len(rows_A)
    if m == 0:
        # Only bounds: each column sits at whichever bound its cost prefers
        u = np.array(ucols)
        if np.any((cy < 0.0) & ~np.isfinite(u)):
            return Status.UNBOUNDED, None, 0
        y = np.where(cy < 0.0, u, 0.0)
        return Status.OPTIMAL, np.clip(offset + S @ y, lower, upper), 0

    kinds_arr = np.array(kinds)
    n_slack = int(np.sum(kinds_arr != "E"))
    n_art = int(np.sum(kinds_arr != "L"))
    width = ny + n_slack + n_art
    T = np.zeros((m, width))
    T[:, :ny] = np.array(rows_A)
    basis = np.zeros(m, dtype=int)
    s_col, a_col = ny, ny + n_slack
    for i, kind in enumerate(kinds):
        if kind == "L":
            T[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if kind == "G":
                T[i, s_col] = -1.0
                s_col += 1
            T[i, a_col] = 1.0
            basis[i] = a_col
            a_col += 1
    upper_all = np.r_[np.array(ucols), np.full(n_slack + n_art, np.inf)]
    rhs = np.array(rows_b)

    tab = _BoundedSimplex(T, rhs, upper_all, basis, max_iterations=max(10000, 20 * (m + width)))
    n_struct = ny + n_slack
    if n_art:
        phase1 = np.zeros(width)
        phase1[n_struct:] = 1.0
        tab.set_costs(phase1)
        tab.run()
        if tab.objective > FEAS_TOL * max(1.0, float(np.max(rhs))):
            return Status.INFEASIBLE, None, tab.iterations
        tab.drop_columns_from(n_struct)

    tab.set_costs(np.r_[cy, np.zeros(n_slack)])
    status = tab.run()
    if status != Status.OPTIMAL:
        return status, None, tab.iterations

    y = _polish(tab, T[:, :n_struct], rhs, tab.values())[:ny]
    x = np.clip(offset + S @ y, lower, upper)
    return Status.OPTIMAL, x, tab.iterations


def _polish(tab: _BoundedSimplex, A_std: np.ndarray, b_std: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Recompute basic values from the original rows to shed pivoting drift"""
    nonbasic = np.ones(tab.n, dtype=bool)
    nonbasic[tab.basis] = False
    rhs = b_std - A_std[:, nonbasic] @ y[nonbasic]
    B = A_std[:, tab.basis]
    try:
        if B.shape[0] == B.shape[1]:
            basic = np.linalg.solve(B, rhs)
        else:
            basic, *_ = np.linalg.lstsq(B, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return y
    polished = y.copy()
    polished[tab.basis] = basic
    before = np.abs(A_std @ y - b_std).max()
    after = np.abs(A_std @ polished - b_std).max()
    return polished if after <= before else y


def _objective(c: np.ndarray, x: np.ndarray, constant: float) -> float:
    return float(c @ x) + constant


def _cutoff(best_obj: float) -> float:
    """Objective a node must beat to stay open; no pruning until there is an incumbent"""
    if not math.isfinite(best_obj):
        return math.inf
    return best_obj - 1e-9 * max(1.0, abs(best_obj))


def solve_lp(lp: LinearProgram, relax_binaries: bool = False) -> Solution:
    """Solve a linear program

    Args:
        lp (LinearProgram): Program without binaries
        relax_binaries (bool, optional): Treat binaries as continuous in [0, 1]. Defaults to False

    Returns:
        Solution: Optimal basic solution, or the Infeasible/Unbounded status
    """
    lp.validate()
    if lp.has_binaries and not relax_binaries:
        raise InvalidModel("solve_lp was given binary variables; use solve_milp")
    c, A, senses, b, lower, upper, _ = lp.to_dense()
    status, x, iterations = _solve_dense(c, A, senses, b, lower, upper)
    if status != Status.OPTIMAL:
        logger.debug(f"{lp.name}: LP {status.value} after {iterations} iterations")
        return Solution(status, iterations=iterations)
    obj = _objective(c, x, lp.objective_constant)
    logger.debug(f"{lp.name}: LP optimal {obj:.6f} after {iterations} iterations")
    return Solution(Status.OPTIMAL, dict(zip((v.name for v in lp.variables), x.tolist())), obj, iterations)


def _row_ok(activity: np.ndarray, senses: np.ndarray, b: np.ndarray) -> np.ndarray:
    tol = 1e-9 * (1.0 + np.abs(b))
    ok = np.ones(b.size, dtype=bool)
    ok[senses == "L"] = activity[senses == "L"] <= b[senses == "L"] + tol[senses == "L"]
    ok[senses == "G"] = activity[senses == "G"] >= b[senses == "G"] - tol[senses == "G"]
    ok[senses == "E"] = np.abs(activity[senses == "E"] - b[senses == "E"]) <= tol[senses == "E"]
    return ok


def _simple_rounding(x: np.ndarray, fractional: np.ndarray, A: np.ndarray, senses: np.ndarray,
                     b: np.ndarray) -> Optional[np.ndarray]:
    """Round fractional binaries one at a time, keeping every touched row satisfied"""
    trial = x.copy()
    for j in fractional:
        touched = np.nonzero(A[:, j])[0]
        first = float(round(x[j]))
        for value in (first, 1.0 - first):
            trial[j] = value
            if np.all(_row_ok(A[touched] @ trial, senses[touched], b[touched])):
                break
        else:
            return None
    return trial if np.all(_row_ok(A @ trial, senses, b)) else None


def _fix_and_resolve(c: np.ndarray, A: np.ndarray, senses: np.ndarray, b: np.ndarray, lower: np.ndarray,
                     upper: np.ndarray, x: np.ndarray, bin_idx: np.ndarray) -> Tuple[Optional[np.ndarray], int]:
    """Fix every binary at its rounded value and re-solve the continuous part"""
    lo, hi = lower.copy(), upper.copy()
    lo[bin_idx] = hi[bin_idx] = np.round(x[bin_idx])
    status, fixed_x, iterations = _solve_dense(c, A, senses, b, lo, hi)
    return (fixed_x if status == Status.OPTIMAL else None), iterations


def solve_milp(lp: LinearProgram, node_limit: int = DEFAULT_NODE_LIMIT) -> Solution:
    """Solve a mixed-binary program by best-bound branch-and-bound

    Args:
        lp (LinearProgram): Program, binaries flagged
        node_limit (int, optional): Maximum LP relaxations to solve. Defaults to DEFAULT_NODE_LIMIT

    Returns:
        Solution: Optimal solution with binaries exactly 0 or 1
    """
    lp.validate()
    if not lp.has_binaries:
        return solve_lp(lp)

    c, A, senses, b, lower, upper, binary = lp.to_dense()
    names = [v.name for v in lp.variables]
    bin_idx = np.nonzero(binary)[0]
    const = lp.objective_constant

    def finish(x: np.ndarray, obj: float, iterations: int, nodes: int) -> Solution:
        x = x.copy()
        x[bin_idx] = np.round(x[bin_idx])
        return Solution(Status.OPTIMAL, dict(zip(names, x.tolist())), obj, iterations, nodes)

    status, x, iterations = _solve_dense(c, A, senses, b, lower, upper)
    nodes = 1
    if status != Status.OPTIMAL:
        return Solution(status, iterations=iterations, nodes=nodes)

    incumbent: Optional[np.ndarray] = None
    best_obj = math.inf
    counter = itertools.count()
    heap: List[Tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = []
    heapq.heappush(heap, (_objective(c, x, const), next(counter), lower, upper, x))

    while heap:
        bound, _, lo, hi, x = heapq.heappop(heap)
        if bound >= _cutoff(best_obj):
            break
        frac_gap = np.abs(x[bin_idx] - np.round(x[bin_idx]))
        fractional = bin_idx[frac_gap > INT_TOL]
        if fractional.size == 0:
            incumbent, best_obj = x, bound
            continue
        rounded = _simple_rounding(x, fractional, A, senses, b)
        if rounded is None and incumbent is None and nodes < node_limit:
            rounded, its = _fix_and_resolve(c, A, senses, b, lo, hi, x, bin_idx)
            iterations += its
            nodes += 1
        if rounded is not None:
            obj = _objective(c, rounded, const)
            if obj < best_obj:
                incumbent, best_obj = rounded, obj
                if obj <= bound + 1e-9 * max(1.0, abs(bound)):
                    continue
        distance = np.minimum(x[fractional], 1.0 - x[fractional])
        j = int(fractional[np.argmax(distance)])
        for value in (0.0, 1.0):
            if nodes >= node_limit:
                best = None if incumbent is None else finish(incumbent, best_obj, iterations, nodes)
                logger.warning(f"{lp.name}: branch-and-bound node limit {node_limit} reached")
                raise ResourceExhausted(f"node limit {node_limit} reached", incumbent=best)
            child_lo, child_hi = lo.copy(), hi.copy()
            child_lo[j] = child_hi[j] = value
            status, cx, its = _solve_dense(c, A, senses, b, child_lo, child_hi)
            iterations += its
            nodes += 1
            if status == Status.OPTIMAL:
                cobj = _objective(c, cx, const)
                if cobj < _cutoff(best_obj):
                    heapq.heappush(heap, (cobj, next(counter), child_lo, child_hi, cx))

    if incumbent is None:
        logger.debug(f"{lp.name}: MILP infeasible after {nodes} nodes")
        return Solution(Status.INFEASIBLE, iterations=iterations, nodes=nodes)
    logger.debug(f"{lp.name}: MILP optimal {best_obj:.6f} after {nodes} nodes")
    return finish(incumbent, best_obj, iterations, nodes)


def _lp_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")")


def _lp_terms(coefficients: Dict[str, float]) -> str:
    if not coefficients:
        return "0"
    parts = []
    for k, (name, value) in enumerate(coefficients.items()):
        sign = "-" if value < 0 else "+"
        if k == 0:
            parts.append(f"{'-' if value < 0 else ''}{abs(value):.12g} {_lp_name(name)}")
        else:
            parts.append(f"{sign} {abs(value):.12g} {_lp_name(name)}")
    return " ".join(parts)


def to_lp_text(lp: LinearProgram) -> str:
    """Render the program in CPLEX LP format for cross-checking elsewhere"""
    lines = [f"\\ {lp.name}", "Minimize", f" obj: {_lp_terms(lp.objective)}"]
    if lp.objective_constant:
        lines.append(f"\\ objective constant {lp.objective_constant:.12g}")
    lines.append("Subject To")
    for k, con in enumerate(lp.constraints):
        if not con.coefficients:
            continue
        label = _lp_name(con.name) if con.name else f"c{k}"
        lines.append(f" {label}: {_lp_terms(con.coefficients)} {con.relation.value} {con.rhs:.12g}")
    lines.append("Bounds")
    for var in lp.variables:
        lo = "-inf" if var.lower == -math.inf else f"{var.lower:.12g}"
        hi = "+inf" if var.upper == math.inf else f"{var.upper:.12g}"
        lines.append(f" {lo} <= {_lp_name(var.name)} <= {hi}")
    binaries = [_lp_name(v.name) for v in lp.variables if v.is_binary]
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"
