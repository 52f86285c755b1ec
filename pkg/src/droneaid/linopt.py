"""Linear and mixed-integer optimization engine.

LP relaxations are delegated to the HiGHS backend that ships with scipy
(``scipy.optimize.linprog``); integer programs are solved by a best-first
branch-and-bound built on top of it, branching on the most fractional
integer variable (ties broken by lowest variable id).

Dual sign convention (minimization): the dual of a ``>=`` row is
nonnegative, the dual of a ``<=`` row is nonpositive, and the dual of an
``=`` row is free.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

INF = math.inf
FEAS_TOL = 1e-6
INT_TOL = 1e-6

RELATIONS = ("<=", "=", ">=")


class LinOptError(Exception):
    pass


@dataclass
class _Var:
    name: str
    lb: float
    ub: float
    integer: bool
    obj: float


@dataclass
class _Constr:
    name: str
    terms: dict[int, float]
    relation: str
    rhs: float


class LinearModel:
    """A sparse linear model (minimization). Immutable once sealed."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[_Var] = []
        self.constraints: list[_Constr] = []
        self.obj_offset = 0.0
        self._sealed = False
        self._cache = None

    # -- construction ------------------------------------------------------

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                obj: float = 0.0, integer: bool = False) -> int:
        if self._sealed:
            raise LinOptError("model is sealed; cannot add variables")
        if math.isnan(lb) or math.isnan(ub) or math.isnan(obj):
            raise LinOptError(f"variable {name}: NaN in bounds or objective")
        if lb > ub:
            raise LinOptError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables.append(_Var(name, float(lb), float(ub), bool(integer), float(obj)))
        return len(self.variables) - 1

    def add_constr(self, name: str, terms, relation: str, rhs: float) -> int:
        if self._sealed:
            raise LinOptError("model is sealed; cannot add constraints")
        if relation not in RELATIONS:
            raise LinOptError(f"constraint {name}: bad relation {relation!r}")
        if math.isnan(rhs):
            raise LinOptError(f"constraint {name}: NaN right-hand side")
        row: dict[int, float] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for idx, coef in items:
            if not 0 <= idx < len(self.variables):
                raise LinOptError(f"constraint {name}: unknown variable index {idx}")
            if math.isnan(coef) or math.isinf(coef):
                raise LinOptError(f"constraint {name}: bad coefficient {coef}")
            if coef != 0.0:
                row[idx] = row.get(idx, 0.0) + float(coef)
        self.constraints.append(_Constr(name, row, relation, float(rhs)))
        return len(self.constraints) - 1

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constrs(self) -> int:
        return len(self.constraints)

    def seal(self) -> None:
        self._sealed = True

    # -- solver-facing arrays ----------------------------------------------

    def arrays(self):
        """Cached (c, lb, ub, A_ub, b_ub, A_eq, b_eq, row_map). Seals the model.

        ``row_map[k] = (kind, position, flip)`` locates constraint k in the
        scipy matrices; ``flip`` is -1 for ``>=`` rows (stored negated).
        """
        if self._cache is None:
            self.seal()
            n = self.num_vars
            c = np.array([v.obj for v in self.variables], dtype=float)
            lb = np.array([v.lb for v in self.variables], dtype=float)
            ub = np.array([v.ub for v in self.variables], dtype=float)

            ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
            eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
            row_map: list[tuple[str, int, int]] = []
            for con in self.constraints:
                if con.relation == "=":
                    pos = len(b_eq)
                    for idx, coef in con.terms.items():
                        eq_rows.append(pos)
                        eq_cols.append(idx)
                        eq_vals.append(coef)
                    b_eq.append(con.rhs)
                    row_map.append(("eq", pos, 1))
                else:
                    flip = 1 if con.relation == "<=" else -1
                    pos = len(b_ub)
                    for idx, coef in con.terms.items():
                        ub_rows.append(pos)
                        ub_cols.append(idx)
                        ub_vals.append(flip * coef)
                    b_ub.append(flip * con.rhs)
                    row_map.append(("ub", pos, flip))
            A_ub = sparse.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), n)) if b_ub else None
            A_eq = sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), n)) if b_eq else None
            self._cache = (c, lb, ub, A_ub, np.array(b_ub), A_eq, np.array(b_eq), row_map)
        return self._cache

    def integer_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.integer]

    # -- sparse text dump ---------------------------------------------------

    def dump(self, path) -> None:
        """Write the model in the documented sparse text format.

        Line 1: ``linmodel 1 <num_vars> <num_constrs> <obj_offset>``.
        Then one ``var`` line per variable: ``var <name> <lb> <ub> <int flag>
        <obj coef>``; then one ``con`` line per constraint: ``con <name>
        <relation> <rhs> <nnz> [<var index> <coef>]...``. Infinities are
        written as ``inf``/``-inf``.
        """
        def num(x):
            if x == INF:
                return "inf"
            if x == -INF:
                return "-inf"
            return repr(x)

        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"linmodel 1 {self.num_vars} {self.num_constrs} {num(self.obj_offset)}\n")
            for v in self.variables:
                fh.write(f"var {v.name} {num(v.lb)} {num(v.ub)} {int(v.integer)} {num(v.obj)}\n")
            for con in self.constraints:
                parts = [f"con {con.name} {con.relation} {num(con.rhs)} {len(con.terms)}"]
                for idx in sorted(con.terms):
                    parts.append(f"{idx} {num(con.terms[idx])}")
                fh.write(" ".join(parts) + "\n")

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 5 or header[0] != "linmodel" or header[1] != "1":
                raise LinOptError(f"{path}: not a linmodel v1 file")
            m = cls()
            m.obj_offset = float(header[4])
            for line in fh:
                tok = line.split()
                if not tok:
                    continue
                if tok[0] == "var":
                    m.add_var(tok[1], lb=float(tok[2]), ub=float(tok[3]),
                              integer=bool(int(tok[4])), obj=float(tok[5]))
                elif tok[0] == "con":
                    nnz = int(tok[4])
                    terms = [(int(tok[5 + 2 * k]), float(tok[6 + 2 * k])) for k in range(nnz)]
                    m.add_constr(tok[1], terms, tok[2], float(tok[3]))
                else:
                    raise LinOptError(f"{path}: bad record {tok[0]!r}")
            return m


@dataclass
class LpSolution:
    status: str                     # optimal | infeasible | unbounded | failed
    x: np.ndarray | None = None
    duals: np.ndarray | None = None        # one per constraint, sign convention above
    lb_duals: np.ndarray | None = None     # multipliers of variable lower bounds (>= 0)
    ub_duals: np.ndarray | None = None     # multipliers of variable upper bounds (<= 0)
    objective: float | None = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


_LP_STATUS = {0: "optimal", 1: "failed", 2: "infeasible", 3: "unbounded", 4: "failed"}


def solve_lp(model: LinearModel, lower: np.ndarray | None = None,
             upper: np.ndarray | None = None) -> LpSolution:
    """Solve the continuous relaxation (integrality flags ignored).

    ``lower``/``upper`` optionally override variable bounds (used by
    branch-and-bound and by callers that fix variables).
    """
    c, lb, ub, A_ub, b_ub, A_eq, b_eq, row_map = model.arrays()
    if lower is not None:
        lb = lower
    if upper is not None:
        ub = upper
    if np.any(lb > ub + 1e-12):
        return LpSolution(status="infeasible", message="contradictory bounds")
    bounds = np.column_stack([lb, ub])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub if A_ub is not None else None,
                  A_eq=A_eq, b_eq=b_eq if A_eq is not None else None,
                  bounds=bounds, method="highs")
    status = _LP_STATUS.get(res.status, "failed")
    if status != "optimal":
        return LpSolution(status=status, message=res.message)

    duals = np.zeros(model.num_constrs)
    ineq_marg = res.ineqlin.marginals if A_ub is not None else None
    eq_marg = res.eqlin.marginals if A_eq is not None else None
    for k, (kind, pos, flip) in enumerate(row_map):
        marg = eq_marg[pos] if kind == "eq" else ineq_marg[pos]
        # scipy reports the dual of the (possibly negated) <= row; flipping a
        # >= row negates its dual back to the stated convention
        duals[k] = flip * marg
    return LpSolution(
        status="optimal",
        x=np.asarray(res.x, dtype=float),
        duals=duals,
        lb_duals=np.asarray(res.lower.marginals, dtype=float),
        ub_duals=np.asarray(res.upper.marginals, dtype=float),
        objective=float(res.fun) + model.obj_offset,
    )


def dual_objective(model: LinearModel, sol: LpSolution,
                   lower: np.ndarray | None = None,
                   upper: np.ndarray | None = None) -> float:
    """Dual objective value computed from the returned multipliers.

    Equals sum of rhs * row dual plus finite-bound terms; strong duality
    says this matches the primal objective at an optimum.
    """
    _, lb, ub, *_ = model.arrays()
    if lower is not None:
        lb = lower
    if upper is not None:
        ub = upper
    total = model.obj_offset
    for con, y in zip(model.constraints, sol.duals):
        total += con.rhs * y
    for j in range(model.num_vars):
        if np.isfinite(lb[j]):
            total += lb[j] * sol.lb_duals[j]
        if np.isfinite(ub[j]):
            total += ub[j] * sol.ub_duals[j]
    return total


@dataclass
class MipSolution:
    status: str                     # optimal | infeasible | unbounded | limit | failed
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None      # best proven lower bound on the optimum
    gap: float | None = None
    nodes: int = 0
    bound_history: list[float] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _fractional(x: np.ndarray, int_idx: list[int]):
    """Most fractional integer variable, or None if integral within INT_TOL."""
    best_j, best_f = None, INT_TOL
    for j in int_idx:
        f = abs(x[j] - round(x[j]))
        if f > best_f:
            best_j, best_f = j, f
    return best_j


def _reduced_cost_tighten(root, lb, ub, int_idx, gap) -> None:
    """Shrink integer bounds that the root reduced costs prove unusable.

    A variable sitting at a bound with reduced cost r cannot move more than
    gap/r before the relaxation exceeds the incumbent, so integer bounds
    tighten to that radius (classic reduced-cost fixing; in-place on lb/ub).
    """
    if gap < 0:
        gap = 0.0
    for j in int_idx:
        r_lo = root.lb_duals[j]
        r_hi = root.ub_duals[j]
        if root.x[j] - lb[j] <= 1e-7 and r_lo > 1e-12:
            ub[j] = min(ub[j], lb[j] + math.floor(gap / r_lo + 1e-9))
        elif ub[j] - root.x[j] <= 1e-7 and r_hi < -1e-12:
            lb[j] = max(lb[j], ub[j] - math.floor(gap / -r_hi + 1e-9))


def _dive(model, lb, ub, root, int_idx, max_steps=400):
    """Round-and-fix dive for an initial incumbent; flips a fix on infeasibility.

    Returns (x, objective) at an integral leaf, or (None, inf). Only used to
    seed the incumbent; the search tree itself stays best-first.
    """
    lb, ub = lb.copy(), ub.copy()
    x, obj = root.x, root.objective
    for _ in range(max_steps):
        j = _fractional(x, int_idx)
        if j is None:
            return x, obj
        val = round(x[j])
        lb[j], ub[j] = val, val
        sol = solve_lp(model, lower=lb, upper=ub)
        if sol.status != "optimal":
            flipped = 1.0 - val if val in (0.0, 1.0) else val + (1 if x[j] > val else -1)
            lb[j], ub[j] = flipped, flipped
            sol = solve_lp(model, lower=lb, upper=ub)
            if sol.status != "optimal":
                return None, INF
        x, obj = sol.x, sol.objective
    return None, INF


def solve_mip(model: LinearModel, lower: np.ndarray | None = None,
              upper: np.ndarray | None = None,
              integer_override: list[int] | None = None,
              node_limit: int = 200_000,
              time_limit: float | None = None,
              incumbent: tuple[np.ndarray, float] | None = None) -> MipSolution:
    """Best-first branch-and-bound over the LP relaxation.

    ``integer_override`` restricts which variables are branched on (others
    keep continuous relaxations even if flagged integer); ``lower``/``upper``
    override bounds, which is how callers fix variables. ``incumbent`` may
    seed a known feasible point (values, objective), e.g. a warm start from
    a previous solve.
    """
    _, lb0, ub0, *_ = model.arrays()
    lb0 = np.array(lower if lower is not None else lb0, dtype=float)
    ub0 = np.array(upper if upper is not None else ub0, dtype=float)
    int_idx = sorted(integer_override) if integer_override is not None else model.integer_indices()

    t0 = time.monotonic()
    root = solve_lp(model, lower=lb0, upper=ub0)
    if root.status in ("infeasible", "unbounded", "failed"):
        return MipSolution(status=root.status, nodes=1)

    incumbent_x = None
    incumbent_obj = INF
    if incumbent is not None:
        incumbent_x, incumbent_obj = incumbent
    if _fractional(root.x, int_idx) is not None:
        dive_x, dive_obj = _dive(model, lb0, ub0, root, int_idx)
        if dive_obj < incumbent_obj:
            incumbent_x, incumbent_obj = dive_x, dive_obj
        # iterate root fixing: tightened bounds sharpen the duals, which
        # in turn may fix more variables
        node = root
        for _ in range(3):
            if incumbent_obj >= INF:
                break
            before = (lb0.sum(), ub0.sum())
            _reduced_cost_tighten(node, lb0, ub0, int_idx,
                                  incumbent_obj - 1e-9 - node.objective)
            if (lb0.sum(), ub0.sum()) == before:
                break
            resolved = solve_lp(model, lower=lb0, upper=ub0)
            if resolved.status == "infeasible":
                # fixing removed every point that could beat the incumbent
                x = incumbent_x.copy()
                for j in int_idx:
                    x[j] = round(x[j])
                return MipSolution(status="optimal", x=x, objective=incumbent_obj,
                                   bound=incumbent_obj, gap=0.0, nodes=1,
                                   bound_history=[incumbent_obj])
            if resolved.status != "optimal":
                break
            node = root = resolved
    heap: list = []
    seq = 0
    heapq.heappush(heap, (root.objective, seq, lb0, ub0, root.x))
    nodes = 0
    history: list[float] = []
    status = "optimal"

    while heap:
        bound, _, lb, ub, x = heapq.heappop(heap)
        nodes += 1
        history.append(bound)
        if bound >= incumbent_obj - 1e-9:
            # best-first: nothing left can improve the incumbent
            heap.clear()
            break
        j = _fractional(x, int_idx)
        if j is None:
            if bound < incumbent_obj - 1e-9:
                incumbent_obj = bound
                incumbent_x = x
            continue
        if nodes >= node_limit or (time_limit is not None and time.monotonic() - t0 > time_limit):
            status = "limit"
            break
        if nodes % 256 == 0:
            # occasional dive from the live node to refresh the incumbent
            node_sol = LpSolution(status="optimal", x=x, objective=bound)
            dx, dobj = _dive(model, lb, ub, node_sol, int_idx, max_steps=60)
            if dobj < incumbent_obj - 1e-9:
                incumbent_obj, incumbent_x = dobj, dx
        # branch down / up on the most fractional variable
        for side in ("down", "up"):
            clb, cub = lb.copy(), ub.copy()
            if side == "down":
                cub[j] = math.floor(x[j])
            else:
                clb[j] = math.ceil(x[j])
            child = solve_lp(model, lower=clb, upper=cub)
            if child.status != "optimal":
                continue
            if child.objective >= incumbent_obj - 1e-9:
                continue
            cj = _fractional(child.x, int_idx)
            if cj is None and child.objective < incumbent_obj - 1e-9:
                incumbent_obj = child.objective
                incumbent_x = child.x
                continue
            if incumbent_obj < INF:
                _reduced_cost_tighten(child, clb, cub, int_idx,
                                      incumbent_obj - 1e-9 - child.objective)
            seq += 1
            heapq.heappush(heap, (child.objective, seq, clb, cub, child.x))

    remaining = min((h[0] for h in heap), default=INF)
    best_bound = min(remaining, incumbent_obj)
    if incumbent_x is None:
        if status == "limit":
            return MipSolution(status="limit", bound=best_bound, nodes=nodes, bound_history=history)
        return MipSolution(status="infeasible", nodes=nodes, bound_history=history)
    x = incumbent_x.copy()
    for j in int_idx:
        x[j] = round(x[j])
    return MipSolution(
        status=status,
        x=x,
        objective=incumbent_obj,
        bound=best_bound,
        gap=max(0.0, incumbent_obj - best_bound),
        nodes=nodes,
        bound_history=history,
    )
