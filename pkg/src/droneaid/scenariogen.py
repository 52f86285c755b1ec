"""Worst-case demand scenario generation.

The adversary picks which communities deviate to their maximum extra
demand, subject to a total budget and per-region budgets. Because the
recourse is simple (per-community shortage with a linear penalty), the
bilevel max-min collapses: the inner minimum dualizes into the outer
maximization, and products of the deviation flag with the inner dual are
linearized, leaving a single small MILP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linopt import LinearModel, solve_mip
from .model import Instance


class ScenarioGenError(Exception):
    pass


@dataclass(frozen=True)
class Scenario:
    """One demand realization: deviation flags and realized quantities."""

    deviated: tuple[int, ...]    # 0/1 per community, instance order
    demands: tuple[float, ...]   # realized units per community, instance order
    tag: str                     # "nominal" or "generated"

    def demand_of(self, inst: Instance) -> dict[int, float]:
        return {c.id: q for c, q in zip(inst.communities, self.demands)}


def nominal_scenario(inst: Instance) -> Scenario:
    return Scenario(
        deviated=tuple(0 for _ in inst.communities),
        demands=tuple(c.nominal_demand for c in inst.communities),
        tag="nominal",
    )


def make_scenario(inst: Instance, deviated, tag: str = "generated") -> Scenario:
    deviated = tuple(int(round(v)) for v in deviated)
    demands = tuple(c.nominal_demand + y * c.max_deviation
                    for c, y in zip(inst.communities, deviated))
    return Scenario(deviated=deviated, demands=demands, tag=tag)


def in_uncertainty_set(inst: Instance, deviated) -> bool:
    if any(y not in (0, 1) for y in deviated):
        return False
    if sum(deviated) > inst.gamma_total:
        return False
    for a in inst.regions:
        used = sum(y for c, y in zip(inst.communities, deviated) if c.region == a)
        if used > inst.gamma_region.get(a, 0):
            return False
    return True


def total_delivered(inst: Instance, delivered_table: dict) -> dict[int, float]:
    """Sum a per-(satellite, slot, community) delivered-quantity table by community."""
    out = {c.id: 0.0 for c in inst.communities}
    for (_s, _slot, c), qty in delivered_table.items():
        out[c] += qty
    return out


@dataclass
class WorstCaseModel:
    model: LinearModel
    inst: Instance
    delivered: dict[int, float]     # per-community totals baked into the objective
    y_idx: list[int]
    pi_idx: list[int]
    delta_idx: list[int]


@dataclass
class WorstCaseResult:
    objective: float                 # worst-case shortage cost for the given deliveries
    scenario: Scenario
    pi: tuple[float, ...]            # inner dual per community ($/unit)
    delta: tuple[float, ...]         # linearized deviation * dual products


def build_worst_case(inst: Instance, delivered_table: dict) -> WorstCaseModel:
    """MILP whose optimum is the worst-case shortage cost for fixed deliveries.

    ``delivered_table`` maps (satellite, slot, community) to the best-case
    delivered units (see master.delivered_quantities). The engine minimizes,
    so the maximization objective is negated here and flipped back on read.
    """
    delivered = total_delivered(inst, delivered_table)
    m = LinearModel(name="worst_case")
    y_idx, pi_idx, delta_idx = [], [], []
    for k, c in enumerate(inst.communities):
        y_idx.append(m.add_var(f"y[{c.id}]", lb=0, ub=1, integer=True))
        # coefficient of pi: nominal demand minus what the plan delivers
        pi_idx.append(m.add_var(f"pi[{c.id}]", lb=0, ub=c.shortage_cost,
                                obj=-(c.nominal_demand - delivered[c.id])))
        delta_idx.append(m.add_var(f"dd[{c.id}]", lb=0, obj=-c.max_deviation))
    for a in inst.regions:
        members = [k for k, c in enumerate(inst.communities) if c.region == a]
        m.add_constr(f"region[{a}]", [(y_idx[k], 1.0) for k in members], "<=",
                     float(inst.gamma_region.get(a, 0)))
    m.add_constr("budget", [(y_idx[k], 1.0) for k in range(len(inst.communities))],
                 "<=", float(inst.gamma_total))
    for k, c in enumerate(inst.communities):
        m.add_constr(f"lin_a[{c.id}]", [(delta_idx[k], 1.0), (pi_idx[k], -1.0)], "<=", 0.0)
        m.add_constr(f"lin_b[{c.id}]", [(delta_idx[k], 1.0), (y_idx[k], -c.shortage_cost)], "<=", 0.0)
        m.add_constr(f"lin_c[{c.id}]",
                     [(delta_idx[k], 1.0), (pi_idx[k], -1.0), (y_idx[k], -c.shortage_cost)],
                     ">=", -c.shortage_cost)
    return WorstCaseModel(model=m, inst=inst, delivered=delivered,
                          y_idx=y_idx, pi_idx=pi_idx, delta_idx=delta_idx)


def solve_worst_case(wc: WorstCaseModel) -> WorstCaseResult:
    """Solve the worst-case MILP; ties broken by lexicographically smallest flags."""
    inst = wc.inst
    mip = solve_mip(wc.model)
    if not mip.optimal:
        raise ScenarioGenError(f"worst-case MILP did not solve: {mip.status}")
    opt = -mip.objective
    tol = 1e-6 + 1e-9 * abs(opt)

    # lexicographic refinement: force each flag to 0 when an equally bad
    # completion exists, otherwise pin it to 1
    _, lb0, ub0, *_ = wc.model.arrays()
    lower, upper = np.array(lb0), np.array(ub0)
    for k in range(len(inst.communities)):
        j = wc.y_idx[k]
        upper[j] = 0.0
        trial = solve_mip(wc.model, lower=lower, upper=upper)
        if trial.optimal and -trial.objective >= opt - tol:
            continue
        upper[j] = 1.0
        lower[j] = 1.0
    final = solve_mip(wc.model, lower=lower, upper=upper)
    if not final.optimal:
        raise ScenarioGenError(f"worst-case refinement failed: {final.status}")
    y = [int(round(final.x[j])) for j in wc.y_idx]
    # exact objective via the closed-form inner recourse, free of LP noise
    value = shortage_cost(inst, y, wc.delivered)
    return WorstCaseResult(
        objective=value,
        scenario=make_scenario(inst, y),
        pi=tuple(float(final.x[j]) for j in wc.pi_idx),
        delta=tuple(float(final.x[j]) for j in wc.delta_idx),
    )


def shortage_cost(inst: Instance, deviated, delivered: dict[int, float]) -> float:
    """Closed-form inner recourse cost for fixed deviation flags."""
    total = 0.0
    for c, y in zip(inst.communities, deviated):
        realized = c.nominal_demand + y * c.max_deviation
        total += c.shortage_cost * max(0.0, realized - delivered.get(c.id, 0.0))
    return total


def enumerate_worst_case(inst: Instance, delivered_table: dict, max_size: int = 14) -> float:
    """Brute-force worst case: enumerate every budget-feasible deviation vector.

    Only for small instances; refuses when |C| exceeds ``max_size``.
    """
    n = len(inst.communities)
    if n > max_size:
        raise ScenarioGenError(f"enumeration limited to {max_size} communities, got {n}")
    delivered = total_delivered(inst, delivered_table)
    region_of = [c.region for c in inst.communities]
    budgets = dict(inst.gamma_region)

    best = -1.0
    y = [0] * n

    def recurse(k: int, used_total: int, used_region: dict[int, int]) -> None:
        nonlocal best
        if k == n:
            val = shortage_cost(inst, y, delivered)
            if val > best:
                best = val
            return
        # y[k] = 0 first: the first maximizer found is lexicographically smallest
        y[k] = 0
        recurse(k + 1, used_total, used_region)
        a = region_of[k]
        if used_total + 1 <= inst.gamma_total and used_region.get(a, 0) + 1 <= budgets.get(a, 0):
            y[k] = 1
            used_region[a] = used_region.get(a, 0) + 1
            recurse(k + 1, used_total + 1, used_region)
            used_region[a] -= 1
            y[k] = 0

    recurse(0, 0, {})
    return best
