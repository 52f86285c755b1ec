"""Model-free re-evaluation of solver output.

Takes a plain solution record (the same structure the report file stores)
and recomputes every constraint and cost term from instance data alone:
no LP machinery is involved, so this is an independent check on anything
the optimization stack produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import DEPOT, Instance, geodesic_minutes
from .pricing import DroneRoute, validate_route

TIME_TOL = 1e-5
COST_TOL = 1e-4


def solution_record(sol, n_scenarios: int) -> dict:
    """JSON-ready record of a master solution (see report file schema)."""
    return {
        "objective": sol.objective,
        "truck_arcs": [list(a) for a in sol.truck_arcs],
        "arrivals": {str(s): v for s, v in sorted(sol.arrivals.items())},
        "idles": {str(s): v for s, v in sorted(sol.idles.items())},
        "routes": [
            {
                "satellite": sel.satellite,
                "slot": sel.slot,
                "sequence": list(sel.route.sequence),
                "duration": sel.route.duration,
                "visit_times": list(sel.route.visit_times),
                "deliveries": [
                    {str(c): q for c, q in sorted(sel.route.deliveries.get(w, {}).items())}
                    for w in range(n_scenarios)
                ],
            }
            for sel in sol.selected
        ],
        "unreached": list(sol.unreached),
        "service_times": [
            {"satellite": s, "community": c, "minutes": v}
            for (s, c), v in sorted(sol.service_times.items())
        ],
        "shortages": [
            {str(c): q for (w2, c), q in sorted(sol.shortages.items()) if w2 == w}
            for w in range(n_scenarios)
        ],
        "recourse_cost": sol.recourse_cost,
    }


def _routes_from_record(record, n_scenarios: int) -> list[tuple[int, DroneRoute]]:
    out = []
    for r in record["routes"]:
        deliveries = {
            w: {int(c): float(q) for c, q in plan.items()}
            for w, plan in enumerate(r["deliveries"][:n_scenarios])
        }
        out.append((int(r["slot"]), DroneRoute(
            satellite=int(r["satellite"]), slot=int(r["slot"]),
            sequence=tuple(int(c) for c in r["sequence"]),
            duration=float(r["duration"]),
            visit_times=tuple(float(t) for t in r["visit_times"]),
            deliveries=deliveries,
        )))
    return out


@dataclass
class EvalResult:
    violations: list[str] = field(default_factory=list)
    cost: float = 0.0
    delay_cost: float = 0.0
    miss_cost: float = 0.0
    recourse_cost: float = 0.0
    unfulfilled_pct: float = 0.0
    avg_delay: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def check_solution(inst: Instance, scenarios, record) -> EvalResult:
    """Re-derive feasibility and cost of a reported solution from scratch."""
    res = EvalResult()
    bad = res.violations.append
    n_w = len(scenarios)

    arcs = {(i, j) for (i, j, _t) in inst.directed_truck_arcs()}
    tau_t = {(i, j): t for (i, j, t) in inst.directed_truck_arcs()}
    used = [tuple(a) for a in record["truck_arcs"]]
    arrivals = {int(s): float(v) for s, v in record["arrivals"].items()}
    idles = {int(s): float(v) for s, v in record["idles"].items()}
    routes = _routes_from_record(record, n_w)
    unreached = {int(c) for c in record["unreached"]}
    recourse = float(record["recourse_cost"])

    for a in used:
        if a not in arcs:
            bad(f"truck arc {a} is not in the road network")
    if sum(1 for (i, _j) in used if i == DEPOT) > inst.num_trucks:
        bad("more truck departures than trucks")
    for s in inst.satellite_ids:
        outd = sum(1 for a in used if a[0] == s)
        ind = sum(1 for a in used if a[1] == s)
        if outd != ind:
            bad(f"truck flow not preserved at satellite {s}")
    # every used arc must be reachable from the depot over used arcs
    seen = {DEPOT}
    frontier = [DEPOT]
    used_set = set(used)
    while frontier:
        node = frontier.pop()
        for (i, j) in used_set:
            if i == node and j not in seen:
                seen.add(j)
                frontier.append(j)
    for (i, j) in used:
        if i not in seen:
            bad(f"truck arc ({i},{j}) is disconnected from the depot")

    def arrival(node):
        return 0.0 if node == DEPOT else arrivals.get(node)

    for (i, j) in used:
        if j == DEPOT:
            continue
        t_i = arrival(i)
        t_j = arrival(j)
        if t_i is None or t_j is None:
            bad(f"used arc ({i},{j}) lacks an arrival time")
            continue
        wait = 0.0 if i == DEPOT else idles.get(i, 0.0)
        if abs(t_j - (t_i + wait + tau_t[(i, j)])) > TIME_TOL:
            bad(f"arrival at {j} inconsistent with arc ({i},{j}) timing")

    visited_sats = {j for (_i, j) in used if j != DEPOT}
    by_sat: dict[int, list[tuple[int, DroneRoute]]] = {}
    for slot, route in routes:
        by_sat.setdefault(route.satellite, []).append((slot, route))
    for s, items in by_sat.items():
        if s not in visited_sats:
            bad(f"routes fly from satellite {s} but no truck stops there")
            continue
        if len(items) > inst.drones_per_truck:
            bad(f"satellite {s} dispatches more routes than drones")
        slots = [slot for slot, _r in items]
        if len(slots) != len(set(slots)):
            bad(f"satellite {s} assigns one drone slot to several routes")
        for _slot, route in items:
            if route.duration > idles.get(s, 0.0) + TIME_TOL:
                bad(f"truck leaves satellite {s} before a drone returns")

    for _slot, route in routes:
        for msg in validate_route(route, inst, n_w):
            bad(msg)

    cover: dict[int, int] = {c.id: 0 for c in inst.communities}
    for _slot, route in routes:
        for c in route.sequence:
            cover[c] += 1
    for c in inst.communities:
        hits = cover[c.id] + (1 if c.id in unreached else 0)
        if hits != 1:
            bad(f"community {c.id} covered {hits} times (must be exactly once)")

    # delays recomputed from truck arrival + flight leg
    delay = 0.0
    served_times = []
    for _slot, route in routes:
        t_s = arrivals.get(route.satellite)
        if t_s is None:
            continue
        for c, tbar in zip(route.sequence, route.visit_times):
            service = t_s + tbar
            served_times.append(service)
            delay += inst.community(c).delay_cost * service
    miss = sum(inst.community(c).miss_cost for c in unreached)

    # shortages recomputed against each scenario's realized demand
    worst = 0.0
    ratios = []
    for w, scenario in enumerate(scenarios):
        demand = scenario.demand_of(inst)
        delivered = {c.id: 0.0 for c in inst.communities}
        for _slot, route in routes:
            for c, qty in route.deliveries.get(w, {}).items():
                delivered[c] += qty
        shortfall = {c: max(0.0, demand[c] - delivered[c]) for c in delivered}
        cost_w = sum(inst.community(c).shortage_cost * q for c, q in shortfall.items())
        worst = max(worst, cost_w)
        total_q = sum(demand.values())
        ratios.append(sum(shortfall.values()) / total_q if total_q > 0 else 0.0)
        reported = {int(c): float(q) for c, q in record["shortages"][w].items()}
        for c, need in shortfall.items():
            if reported.get(c, 0.0) < need - 1e-5:
                bad(f"scenario {w}: reported shortage at {c} below {need:.6f}")
    if recourse < worst - COST_TOL:
        bad(f"recourse cost {recourse:.4f} below worst scenario cost {worst:.4f}")

    res.delay_cost = delay
    res.miss_cost = miss
    res.recourse_cost = worst
    res.cost = delay + miss + worst
    res.unfulfilled_pct = 100.0 * (sum(ratios) / len(ratios)) if ratios else 0.0
    res.avg_delay = sum(served_times) / len(served_times) if served_times else 0.0

    reported_obj = float(record["objective"])
    if abs(res.cost - reported_obj) > COST_TOL:
        bad(f"recomputed cost {res.cost:.6f} differs from reported {reported_obj:.6f}")
    return res
