"""Restricted main problem: truck tours, route selection, and recourse.

Builds one minimization model over truck arc binaries, route-selection
binaries per (satellite, drone slot, pooled route), miss flags, timing
variables, and per-scenario shortage variables. The LP relaxation yields
the dual prices that drive pricing; integer solutions come from a
two-phase relax-and-fix heuristic (truck arcs first, then routes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linopt import LinearModel, LpSolution, solve_lp, solve_mip
from .model import DEPOT, Instance, Reachability
from .pricing import DroneRoute


class MasterError(Exception):
    pass


@dataclass(frozen=True)
class DualPrices:
    """Dual values of the master rows that price out new routes.

    ``fleet``: drones-dispatched cap per satellite; ``slot``: one route per
    drone slot; ``idle``: route duration vs truck idle link; ``cover``:
    visit-or-miss balance per community; ``timing``: service-time rows per
    (satellite, community in range); ``demand``: scenario demand rows per
    (scenario index, community).
    """

    fleet: dict[int, float]
    slot: dict[tuple[int, int], float]
    idle: dict[tuple[int, int], float]
    cover: dict[int, float]
    timing: dict[tuple[int, int], float]
    demand: dict[tuple[int, int], float]
    n_scenarios: int


@dataclass
class SelectedRoute:
    satellite: int
    slot: int
    pool_index: int
    route: DroneRoute


@dataclass
class MasterSolution:
    truck_arcs: list[tuple[int, int]]
    arrivals: dict[int, float]              # minutes until the truck reaches s
    idles: dict[int, float]                 # minutes the truck waits at s
    selected: list[SelectedRoute]
    unreached: list[int]                    # communities left without a visit
    service_times: dict[tuple[int, int], float]
    shortages: dict[tuple[int, int], float]  # (scenario index, community) -> units
    recourse_cost: float
    objective: float
    z_values: dict[tuple[int, int, int], float]  # (satellite, slot, pool index)

    def stage_cost(self, inst: Instance) -> tuple[float, float]:
        """(delay $, miss $) recomputed from the solution fields."""
        delay = sum(inst.community(c).delay_cost * v for (s, c), v in self.service_times.items())
        miss = sum(inst.community(c).miss_cost for c in self.unreached)
        return delay, miss


@dataclass
class MasterModel:
    model: LinearModel
    inst: Instance
    reach: Reachability
    pools: dict[int, list[DroneRoute]]
    scenarios: list
    arcs: list[tuple[int, int, float]]
    x_idx: dict[tuple[int, int], int] = field(default_factory=dict)
    z_idx: dict[tuple[int, int, int], int] = field(default_factory=dict)
    j_idx: dict[int, int] = field(default_factory=dict)
    t_idx: dict[int, int] = field(default_factory=dict)
    delta_idx: dict[int, int] = field(default_factory=dict)
    td_idx: dict[tuple[int, int], int] = field(default_factory=dict)
    r_idx: dict[tuple[int, int], int] = field(default_factory=dict)
    y_idx: int = -1
    row_fleet: dict[int, int] = field(default_factory=dict)
    row_slot: dict[tuple[int, int], int] = field(default_factory=dict)
    row_idle: dict[tuple[int, int], int] = field(default_factory=dict)
    row_cover: dict[int, int] = field(default_factory=dict)
    row_timing: dict[tuple[int, int], int] = field(default_factory=dict)
    row_demand: dict[tuple[int, int], int] = field(default_factory=dict)


def build_master(inst: Instance, reach: Reachability, pools: dict[int, list[DroneRoute]],
                 scenarios) -> MasterModel:
    """Assemble the restricted main problem for the given pools and scenarios."""
    n_w = len(scenarios)
    for s, pool in pools.items():
        for p, route in enumerate(pool):
            if route.satellite != s:
                raise MasterError(f"pool {s} holds a route for satellite {route.satellite}")
            stray = [c for c in route.sequence if c not in reach.reachable[s]]
            if stray:
                raise MasterError(f"route {p} at satellite {s} visits out-of-range {stray}")
            missing = [w for w in range(n_w) if w not in route.deliveries]
            if missing:
                raise MasterError(f"route {p} at satellite {s} lacks plans for scenarios {missing}")

    m = LinearModel(name="master")
    mm = MasterModel(model=m, inst=inst, reach=reach, pools=pools,
                     scenarios=list(scenarios), arcs=inst.directed_truck_arcs())
    M = inst.big_m
    slots = range(inst.drones_per_truck)

    for (i, j, _tau) in mm.arcs:
        mm.x_idx[(i, j)] = m.add_var(f"x[{i},{j}]", lb=0, ub=1, integer=True)
    for s in inst.satellite_ids:
        for ell in slots:
            for p in range(len(pools.get(s, []))):
                mm.z_idx[(s, ell, p)] = m.add_var(f"z[{s},{ell},{p}]", lb=0, ub=1, integer=True)
    for c in inst.communities:
        mm.j_idx[c.id] = m.add_var(f"miss[{c.id}]", lb=0, ub=1, obj=c.miss_cost, integer=True)
    for s in inst.satellite_ids:
        mm.t_idx[s] = m.add_var(f"arrive[{s}]", lb=0)
        mm.delta_idx[s] = m.add_var(f"idle[{s}]", lb=0)
        for c in reach.reachable[s]:
            mm.td_idx[(s, c)] = m.add_var(f"serve[{s},{c}]", lb=0,
                                          obj=inst.community(c).delay_cost)
    for w in range(n_w):
        for c in inst.communities:
            mm.r_idx[(w, c.id)] = m.add_var(f"short[{w},{c.id}]", lb=0)
    mm.y_idx = m.add_var("recourse", lb=0, obj=1.0)

    # truck count and flow preservation
    m.add_constr("trucks", [(mm.x_idx[(i, j)], 1.0) for (i, j, _t) in mm.arcs if i == DEPOT],
                 "<=", float(inst.num_trucks))
    for s in inst.satellite_ids:
        terms = [(mm.x_idx[(i, j)], 1.0) for (i, j, _t) in mm.arcs if i == s]
        terms += [(mm.x_idx[(i, j)], -1.0) for (i, j, _t) in mm.arcs if j == s]
        m.add_constr(f"flow[{s}]", terms, "=", 0.0)

    # truck timing; arrival at the depot is untimed, departure time is 0
    for (i, j, tau) in mm.arcs:
        if j == DEPOT:
            continue
        lo = [(mm.t_idx[j], 1.0), (mm.x_idx[(i, j)], -M)]
        hi = [(mm.t_idx[j], 1.0), (mm.x_idx[(i, j)], M)]
        if i != DEPOT:
            lo += [(mm.t_idx[i], -1.0), (mm.delta_idx[i], -1.0)]
            hi += [(mm.t_idx[i], -1.0), (mm.delta_idx[i], -1.0)]
        m.add_constr(f"t_lo[{i},{j}]", lo, ">=", tau - M)
        m.add_constr(f"t_hi[{i},{j}]", hi, "<=", tau + M)

    for s in inst.satellite_ids:
        pool = pools.get(s, [])
        in_arcs = [(i, j) for (i, j, _t) in mm.arcs if j == s]
        fleet_terms = [(mm.z_idx[(s, ell, p)], 1.0) for ell in slots for p in range(len(pool))]
        fleet_terms += [(mm.x_idx[a], -float(inst.drones_per_truck)) for a in in_arcs]
        mm.row_fleet[s] = m.add_constr(f"fleet[{s}]", fleet_terms, "<=", 0.0)
        for ell in slots:
            slot_terms = [(mm.z_idx[(s, ell, p)], 1.0) for p in range(len(pool))]
            slot_terms += [(mm.x_idx[a], -1.0) for a in in_arcs]
            mm.row_slot[(s, ell)] = m.add_constr(f"slot[{s},{ell}]", slot_terms, "<=", 0.0)
            idle_terms = [(mm.z_idx[(s, ell, p)], pool[p].duration) for p in range(len(pool))]
            idle_terms.append((mm.delta_idx[s], -1.0))
            mm.row_idle[(s, ell)] = m.add_constr(f"idle[{s},{ell}]", idle_terms, "<=", 0.0)

    for c in inst.communities:
        terms = [(mm.j_idx[c.id], 1.0)]
        for s in inst.satellite_ids:
            for ell in slots:
                for p, route in enumerate(pools.get(s, [])):
                    if c.id in route.coverage:
                        terms.append((mm.z_idx[(s, ell, p)], 1.0))
        mm.row_cover[c.id] = m.add_constr(f"cover[{c.id}]", terms, "=", 1.0)

    # service-time definition for every in-range (satellite, community) pair
    for s in inst.satellite_ids:
        pool = pools.get(s, [])
        for c in reach.reachable[s]:
            terms = [(mm.t_idx[s], 1.0), (mm.td_idx[(s, c)], -1.0)]
            for ell in slots:
                for p, route in enumerate(pool):
                    if c in route.coverage:
                        tbar = route.visit_times[route.sequence.index(c)]
                        terms.append((mm.z_idx[(s, ell, p)], tbar + M))
            mm.row_timing[(s, c)] = m.add_constr(f"serve[{s},{c}]", terms, "<=", M)

    for w, scenario in enumerate(scenarios):
        demand = scenario.demand_of(inst)
        terms = [(mm.y_idx, 1.0)]
        terms += [(mm.r_idx[(w, c.id)], -c.shortage_cost) for c in inst.communities]
        m.add_constr(f"recourse[{w}]", terms, ">=", 0.0)
        for c in inst.communities:
            terms = [(mm.r_idx[(w, c.id)], 1.0)]
            for s in inst.satellite_ids:
                for ell in slots:
                    for p, route in enumerate(pools.get(s, [])):
                        qty = route.delivered(w, c.id)
                        if qty:
                            terms.append((mm.z_idx[(s, ell, p)], qty))
            mm.row_demand[(w, c.id)] = m.add_constr(f"demand[{w},{c.id}]", terms, ">=", demand[c.id])
    return mm


def solve_relaxed(mm: MasterModel) -> tuple[LpSolution, DualPrices]:
    """LP relaxation plus the dual prices used by pricing."""
    sol = solve_lp(mm.model)
    if not sol.optimal:
        raise MasterError(f"relaxed master is {sol.status}; recourse should make it feasible")
    d = sol.duals
    n_w = len(mm.scenarios)
    duals = DualPrices(
        fleet={s: d[r] for s, r in mm.row_fleet.items()},
        slot={k: d[r] for k, r in mm.row_slot.items()},
        idle={k: d[r] for k, r in mm.row_idle.items()},
        cover={c: d[r] for c, r in mm.row_cover.items()},
        timing={k: d[r] for k, r in mm.row_timing.items()},
        demand={k: d[r] for k, r in mm.row_demand.items()},
        n_scenarios=n_w,
    )
    return sol, duals


def _extract_solution(mm: MasterModel, x: np.ndarray, objective: float) -> MasterSolution:
    inst = mm.inst
    truck_arcs = [a for a, idx in mm.x_idx.items() if x[idx] > 0.5]
    selected = []
    z_values = {}
    for (s, ell, p), idx in mm.z_idx.items():
        val = float(x[idx])
        if val > 0.5:
            selected.append(SelectedRoute(s, ell, p, mm.pools[s][p]))
            z_values[(s, ell, p)] = 1.0
        elif val > 1e-9:
            z_values[(s, ell, p)] = val
    selected.sort(key=lambda r: (r.satellite, r.slot, r.pool_index))
    visited_sats = {j for (_i, j) in truck_arcs}
    return MasterSolution(
        truck_arcs=sorted(truck_arcs),
        arrivals={s: float(x[mm.t_idx[s]]) for s in inst.satellite_ids if s in visited_sats},
        idles={s: float(x[mm.delta_idx[s]]) for s in inst.satellite_ids if s in visited_sats},
        selected=selected,
        unreached=sorted(c.id for c in inst.communities if x[mm.j_idx[c.id]] > 0.5),
        service_times={k: float(x[idx]) for k, idx in mm.td_idx.items() if x[idx] > 1e-9},
        shortages={k: float(x[idx]) for k, idx in mm.r_idx.items() if x[idx] > 1e-9},
        recourse_cost=float(x[mm.y_idx]),
        objective=float(objective),
        z_values=z_values,
    )


def solve_relax_and_fix(mm: MasterModel, time_limit: float | None = None,
                        warm: MasterSolution | None = None) -> MasterSolution:
    """Two-phase integer heuristic.

    Phase 1 keeps truck arcs and miss flags integral with route selection
    relaxed; phase 2 fixes the truck arcs at their phase-1 values and
    restores route integrality. Miss flags stay integral in both phases.
    Phase 2 is solved on a slot-free reformulation (drone slots are
    interchangeable, so selecting a route set and assigning slots in pool
    order is equivalent and avoids a symmetric search tree); if that
    cannot be expanded back, the slotted model is solved directly.
    ``warm`` seeds phase 1 with a previous solution's truck/miss choices.
    """
    model = mm.model
    phase1_ints = sorted([idx for idx in mm.x_idx.values()] + [idx for idx in mm.j_idx.values()])
    incumbent = _phase1_warm_incumbent(mm, warm) if warm is not None else None
    mip1 = solve_mip(model, integer_override=phase1_ints, time_limit=time_limit,
                     incumbent=incumbent)
    if mip1.x is None:
        raise MasterError(f"relax-and-fix phase 1 failed: {mip1.status}")
    x_fixed = {arc: int(round(mip1.x[idx])) for arc, idx in mm.x_idx.items()}

    sol = _solve_phase2_aggregated(mm, x_fixed, time_limit)
    if sol is not None:
        return sol
    return _solve_phase2_slotted(mm, x_fixed, time_limit)


def _phase1_warm_incumbent(mm: MasterModel, warm: MasterSolution):
    """Evaluate a previous solution's truck/miss choices in the new model.

    Fixing those binaries and re-solving the continuous rest gives a
    feasible phase-1 point (recourse variables absorb any new scenario),
    whose value seeds the branch-and-bound incumbent.
    """
    _, lb0, ub0, *_ = mm.model.arrays()
    lower, upper = np.array(lb0), np.array(ub0)
    warm_arcs = set(warm.truck_arcs)
    for arc, idx in mm.x_idx.items():
        val = 1.0 if arc in warm_arcs else 0.0
        lower[idx] = val
        upper[idx] = val
    missed = set(warm.unreached)
    for c, idx in mm.j_idx.items():
        val = 1.0 if c in missed else 0.0
        lower[idx] = val
        upper[idx] = val
    sol = solve_lp(mm.model, lower=lower, upper=upper)
    if not sol.optimal:
        return None
    return sol.x, sol.objective


def _solve_phase2_slotted(mm: MasterModel, x_fixed, time_limit) -> MasterSolution:
    model = mm.model
    _, lb0, ub0, *_ = model.arrays()
    lower, upper = np.array(lb0), np.array(ub0)
    for arc, idx in mm.x_idx.items():
        lower[idx] = x_fixed[arc]
        upper[idx] = x_fixed[arc]
    phase2_ints = sorted([idx for idx in mm.z_idx.values()] + [idx for idx in mm.j_idx.values()])
    mip2 = solve_mip(model, lower=lower, upper=upper, integer_override=phase2_ints,
                     time_limit=time_limit)
    if mip2.x is None:
        raise MasterError(f"relax-and-fix phase 2 failed: {mip2.status}")
    return _extract_solution(mm, mip2.x, mip2.objective)


def _solve_phase2_aggregated(mm: MasterModel, x_fixed, time_limit) -> MasterSolution | None:
    """Phase 2 on route-set variables, expanded back to slot assignments."""
    inst = mm.inst
    M = inst.big_m
    n_w = len(mm.scenarios)
    in_count = {s: 0 for s in inst.satellite_ids}
    for (i, j), val in x_fixed.items():
        if j != DEPOT and val:
            in_count[j] += val

    m = LinearModel(name="master_phase2")
    y_idx: dict[tuple[int, int], int] = {}
    for s in inst.satellite_ids:
        for p in range(len(mm.pools.get(s, []))):
            y_idx[(s, p)] = m.add_var(f"y[{s},{p}]", lb=0, ub=1, integer=True)
    j_idx = {c.id: m.add_var(f"miss[{c.id}]", lb=0, ub=1, obj=c.miss_cost, integer=True)
             for c in inst.communities}
    t_idx = {s: m.add_var(f"arrive[{s}]", lb=0) for s in inst.satellite_ids}
    delta_idx = {s: m.add_var(f"idle[{s}]", lb=0) for s in inst.satellite_ids}
    td_idx = {}
    for s in inst.satellite_ids:
        for c in mm.reach.reachable[s]:
            td_idx[(s, c)] = m.add_var(f"serve[{s},{c}]", lb=0,
                                       obj=inst.community(c).delay_cost)
    r_idx = {}
    for w in range(n_w):
        for c in inst.communities:
            r_idx[(w, c.id)] = m.add_var(f"short[{w},{c.id}]", lb=0)
    yy = m.add_var("recourse", lb=0, obj=1.0)

    # arrival equalities along the fixed tours
    for (i, j, tau) in mm.arcs:
        if j == DEPOT or not x_fixed.get((i, j)):
            continue
        terms = [(t_idx[j], 1.0)]
        if i != DEPOT:
            terms += [(t_idx[i], -1.0), (delta_idx[i], -1.0)]
        m.add_constr(f"t[{i},{j}]", terms, "=", tau)
    for s in inst.satellite_ids:
        pool = mm.pools.get(s, [])
        m.add_constr(f"fleet[{s}]", [(y_idx[(s, p)], 1.0) for p in range(len(pool))],
                     "<=", float(inst.drones_per_truck * in_count[s]))
        for p, route in enumerate(pool):
            m.add_constr(f"idle[{s},{p}]",
                         [(y_idx[(s, p)], route.duration), (delta_idx[s], -1.0)], "<=", 0.0)
    for c in inst.communities:
        terms = [(j_idx[c.id], 1.0)]
        for s in inst.satellite_ids:
            for p, route in enumerate(mm.pools.get(s, [])):
                if c.id in route.coverage:
                    terms.append((y_idx[(s, p)], 1.0))
        m.add_constr(f"cover[{c.id}]", terms, "=", 1.0)
    for s in inst.satellite_ids:
        pool = mm.pools.get(s, [])
        for c in mm.reach.reachable[s]:
            terms = [(t_idx[s], 1.0), (td_idx[(s, c)], -1.0)]
            for p, route in enumerate(pool):
                if c in route.coverage:
                    tbar = route.visit_times[route.sequence.index(c)]
                    terms.append((y_idx[(s, p)], tbar + M))
            m.add_constr(f"serve[{s},{c}]", terms, "<=", M)
    for w, scenario in enumerate(mm.scenarios):
        demand = scenario.demand_of(inst)
        terms = [(yy, 1.0)]
        terms += [(r_idx[(w, c.id)], -c.shortage_cost) for c in inst.communities]
        m.add_constr(f"recourse[{w}]", terms, ">=", 0.0)
        for c in inst.communities:
            terms = [(r_idx[(w, c.id)], 1.0)]
            for s in inst.satellite_ids:
                for p, route in enumerate(mm.pools.get(s, [])):
                    qty = route.delivered(w, c.id)
                    if qty:
                        terms.append((y_idx[(s, p)], qty))
            m.add_constr(f"demand[{w},{c.id}]", terms, ">=", demand[c.id])

    mip = solve_mip(m, time_limit=time_limit)
    if mip.x is None:
        return None

    # expand route sets to drone slots in pool order
    chosen: dict[int, list[int]] = {s: [] for s in inst.satellite_ids}
    for (s, p), idx in y_idx.items():
        if mip.x[idx] > 0.5:
            chosen[s].append(p)
    if any(len(ps) > inst.drones_per_truck for ps in chosen.values()):
        return None
    selected = []
    z_values = {}
    for s in inst.satellite_ids:
        for slot, p in enumerate(sorted(chosen[s])):
            selected.append(SelectedRoute(s, slot, p, mm.pools[s][p]))
            z_values[(s, slot, p)] = 1.0
    visited = {s for s, cnt in in_count.items() if cnt}
    x = mip.x
    return MasterSolution(
        truck_arcs=sorted(a for a, v in x_fixed.items() if v),
        arrivals={s: float(x[t_idx[s]]) for s in visited},
        idles={s: float(x[delta_idx[s]]) for s in visited},
        selected=selected,
        unreached=sorted(c.id for c in inst.communities if x[j_idx[c.id]] > 0.5),
        service_times={k: float(x[idx]) for k, idx in td_idx.items() if x[idx] > 1e-9},
        shortages={k: float(x[idx]) for k, idx in r_idx.items() if x[idx] > 1e-9},
        recourse_cost=float(x[yy]),
        objective=float(mip.objective),
        z_values=z_values,
    )


def delivered_quantities(sol: MasterSolution, pools: dict[int, list[DroneRoute]],
                         scenarios) -> dict[tuple[int, int, int], float]:
    """Best-case delivered units per (satellite, slot, community).

    For each slot, the maximum over scenarios of the selected routes'
    deliveries; this is what the worst-case adversary plays against.
    """
    table: dict[tuple[int, int, int], float] = {}
    by_slot: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for (s, ell, p), zval in sol.z_values.items():
        by_slot.setdefault((s, ell), []).append((p, zval))
    for (s, ell), entries in by_slot.items():
        communities = set()
        for p, _z in entries:
            communities.update(pools[s][p].coverage)
        for c in communities:
            best = 0.0
            for w in range(len(scenarios)):
                total = sum(zval * pools[s][p].delivered(w, c) for p, zval in entries)
                best = max(best, total)
            if best > 0.0:
                table[(s, ell, c)] = best
    return table


def lower_bound(sol: MasterSolution, inst: Instance) -> float:
    """Objective recomputed from the solution fields: delay + miss + recourse."""
    delay, miss = sol.stage_cost(inst)
    return delay + miss + sol.recourse_cost
