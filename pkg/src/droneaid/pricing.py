"""Drone-route column generation.

Each satellite/drone-slot pair gets a small MILP that searches for the
route minimizing the reduced cost implied by the latest master duals.
Routes are generated per satellite with a shrinking candidate set: after
each slot's route is found, its communities are removed from the pool so
subsequent slots produce disjoint routes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .linopt import LinearModel, solve_mip
from .model import Instance, Reachability

RC_TOL = 1e-7   # reduced cost below -RC_TOL counts as an improving column


class PricingError(Exception):
    pass


@dataclass(frozen=True)
class DroneRoute:
    """A generated column: one drone flight plus its per-scenario deliveries."""

    satellite: int
    slot: int                                  # drone slot it was priced for
    sequence: tuple[int, ...]                  # communities in visit order
    duration: float                            # minutes, closing back at the satellite
    visit_times: tuple[float, ...]             # minutes, aligned with sequence
    deliveries: dict[int, dict[int, float]]    # scenario index -> {community: units}
    reduced_cost: float | None = None

    @property
    def coverage(self) -> frozenset:
        return frozenset(self.sequence)

    def delivered(self, scenario_idx: int, community: int) -> float:
        return self.deliveries.get(scenario_idx, {}).get(community, 0.0)

    def key(self):
        """Identity of the column's coefficients, for duplicate detection."""
        plans = tuple(
            (w, tuple(sorted((c, round(q, 9)) for c, q in self.deliveries[w].items())))
            for w in sorted(self.deliveries)
        )
        return (self.satellite, self.sequence, round(self.duration, 9), plans)


@dataclass
class PricingModel:
    """Pricing MILP plus the variable bookkeeping needed to read a route back."""

    model: LinearModel
    satellite: int
    slot: int
    allowed: list[int]
    v_idx: dict[tuple[int, int], int] = field(default_factory=dict)
    t_idx: dict[int, int] = field(default_factory=dict)      # community -> arrival var
    t_return: int = -1
    q_idx: dict[tuple[int, int, int], int] = field(default_factory=dict)  # (i, j, scenario)
    p_idx: dict[tuple[int, int], int] = field(default_factory=dict)       # (community, scenario)


def _check_duals(duals, scenarios) -> None:
    if duals.n_scenarios != len(scenarios):
        raise PricingError(
            f"duals cover {duals.n_scenarios} scenarios but {len(scenarios)} were given")


def build_pricing(inst: Instance, reach: Reachability, s: int, allowed,
                  duals, scenarios, slot: int) -> PricingModel | None:
    """Route-search MILP over nodes {s} | allowed. Returns None when allowed is empty."""
    _check_duals(duals, scenarios)
    allowed = sorted(allowed)
    if not allowed:
        return None
    bad = [c for c in allowed if c not in reach.reachable[s]]
    if bad:
        raise PricingError(f"communities {bad} not reachable from satellite {s}")

    W = inst.flying_range
    L = inst.max_load
    M = inst.big_m
    m = LinearModel(name=f"pricing[s={s},slot={slot}]")
    m.obj_offset = -duals.fleet[s] - duals.slot[(s, slot)]
    rho = duals.idle[(s, slot)]

    pm = PricingModel(model=m, satellite=s, slot=slot, allowed=allowed)
    nodes = [s] + allowed
    arcs = [(i, j) for i in nodes for j in nodes if i != j]

    for (i, j) in arcs:
        if j == s:
            obj = 0.0   # the reduced cost counts only arcs into communities
        else:
            obj = -(duals.cover[j] + rho * reach.tau(i, j)) - duals.timing[(s, j)] * M
        pm.v_idx[(i, j)] = m.add_var(f"v[{i},{j}]", lb=0, ub=1, obj=obj, integer=True)
    for j in allowed:
        pm.t_idx[j] = m.add_var(f"t[{j}]", lb=0, obj=-duals.timing[(s, j)])
    pm.t_return = m.add_var("t[return]", lb=0)
    for w in range(len(scenarios)):
        for (i, j) in arcs:
            pm.q_idx[(i, j, w)] = m.add_var(f"q[{i},{j},{w}]", lb=0)
        for j in allowed:
            pm.p_idx[(j, w)] = m.add_var(f"p[{j},{w}]", lb=0, obj=-duals.demand[(w, j)])

    m.add_constr("range", [(pm.v_idx[a], reach.tau(*a)) for a in arcs], "<=", W)
    m.add_constr("depart", [(pm.v_idx[(s, j)], 1.0) for j in allowed], "<=", 1.0)
    for j in allowed:
        m.add_constr(f"enter[{j}]", [(pm.v_idx[(i, j)], 1.0) for i in nodes if i != j], "<=", 1.0)
        terms = [(pm.v_idx[(i, j)], 1.0) for i in nodes if i != j]
        terms += [(pm.v_idx[(j, k)], -1.0) for k in nodes if k != j]
        m.add_constr(f"flow[{j}]", terms, "=", 0.0)
    for (i, j) in arcs:
        tau = reach.tau(i, j)
        tj = pm.t_return if j == s else pm.t_idx[j]
        terms_lo = [(tj, 1.0), (pm.v_idx[(i, j)], -W)]
        terms_hi = [(tj, 1.0), (pm.v_idx[(i, j)], W)]
        if i != s:
            terms_lo.append((pm.t_idx[i], -1.0))
            terms_hi.append((pm.t_idx[i], -1.0))
        # departure time at the satellite is 0 by definition
        m.add_constr(f"t_lo[{i},{j}]", terms_lo, ">=", tau - W)
        m.add_constr(f"t_hi[{i},{j}]", terms_hi, "<=", tau + W)
    for w in range(len(scenarios)):
        for (i, j) in arcs:
            m.add_constr(f"qcap[{i},{j},{w}]",
                         [(pm.q_idx[(i, j, w)], 1.0), (pm.v_idx[(i, j)], -L)], "<=", 0.0)
        for j in allowed:
            terms = [(pm.q_idx[(i, j, w)], 1.0) for i in nodes if i != j]
            terms += [(pm.q_idx[(j, k, w)], -1.0) for k in nodes if k != j]
            terms.append((pm.p_idx[(j, w)], -1.0))
            m.add_constr(f"qflow[{j},{w}]", terms, "=", 0.0)
        m.add_constr(f"load[{w}]", [(pm.p_idx[(j, w)], 1.0) for j in allowed], "<=", L)
    return pm


def extract_route(pm: PricingModel, x, reach: Reachability, n_scenarios: int,
                  reduced_cost: float) -> DroneRoute:
    """Read the route out of a pricing MILP solution; empty sequence if no flight."""
    s = pm.satellite
    succ = {}
    for (i, j), idx in pm.v_idx.items():
        if x[idx] > 0.5:
            succ[i] = j
    sequence: list[int] = []
    node = s
    for _ in range(len(pm.allowed) + 1):
        if node not in succ:
            break
        node = succ[node]
        if node == s:
            break
        sequence.append(node)
    else:
        raise PricingError(f"pricing solution at satellite {s} is not a single tour")

    visit_times = []
    duration = 0.0
    prev = s
    for c in sequence:
        duration += reach.tau(prev, c)
        visit_times.append(duration)
        prev = c
    if sequence:
        duration += reach.tau(prev, s)

    deliveries: dict[int, dict[int, float]] = {}
    for w in range(n_scenarios):
        plan = {}
        for c in sequence:
            q = float(x[pm.p_idx[(c, w)]])
            if q > 1e-9:
                plan[c] = q
        deliveries[w] = plan
    return DroneRoute(
        satellite=s, slot=pm.slot, sequence=tuple(sequence), duration=duration,
        visit_times=tuple(visit_times), deliveries=deliveries, reduced_cost=reduced_cost,
    )


def generate_columns(inst: Instance, reach: Reachability, s: int, duals,
                     scenarios, num_slots: int) -> list[DroneRoute]:
    """Price routes for every drone slot at satellite s with set shrinking.

    After each slot, communities visited so far are dropped from the
    candidate set; the loop ends early once the set empties or a slot
    prices out to the empty route.
    """
    _check_duals(duals, scenarios)
    allowed = list(reach.reachable[s])
    routes: list[DroneRoute] = []
    for slot in range(num_slots):
        pm = build_pricing(inst, reach, s, allowed, duals, scenarios, slot)
        if pm is None:
            break
        mip = solve_mip(pm.model, node_limit=50_000)
        if mip.x is None:
            raise PricingError(f"pricing MILP failed at satellite {s}, slot {slot}: {mip.status}")
        route = extract_route(pm, mip.x, reach, len(scenarios), mip.objective)
        if not route.sequence:
            break
        routes.append(route)
        visited = route.coverage
        allowed = [c for c in allowed if c not in visited]
    return routes


def reduced_cost(route: DroneRoute, duals, scenarios, big_m: float,
                 reach: Reachability) -> float:
    """Evaluate the reduced-cost expression for an existing route.

    Mirrors the pricing objective on the route's own data: constants for
    the satellite and slot, arc terms for every community entered, timed
    service terms, and the per-scenario delivery prices.
    """
    _check_duals(duals, scenarios)
    s = route.satellite
    rc = -duals.fleet[s] - duals.slot[(s, route.slot)]
    rho = duals.idle[(s, route.slot)]
    prev = s
    for c, tbar in zip(route.sequence, route.visit_times):
        rc -= duals.cover[c] + rho * reach.tau(prev, c)
        rc -= duals.timing[(s, c)] * (tbar + big_m)
        prev = c
    for w in range(len(scenarios)):
        for c, qty in route.deliveries.get(w, {}).items():
            rc -= duals.demand[(w, c)] * qty
    return rc


def extend_deliveries(route: DroneRoute, scenario_idx: int, scenario, inst: Instance) -> DroneRoute:
    """Add a delivery plan for a newly generated scenario.

    Greedy by descending shortage cost (ties by community id), each visit
    capped at its realized demand: the exact minimizer of the scenario's
    added shortage cost for a fixed route.
    """
    if scenario_idx in route.deliveries:
        raise PricingError(f"route already has a plan for scenario {scenario_idx}")
    demand = scenario.demand_of(inst)
    order = sorted(route.sequence, key=lambda c: (-inst.community(c).shortage_cost, c))
    remaining = inst.max_load
    plan: dict[int, float] = {}
    for c in order:
        alloc = min(remaining, demand[c])
        if alloc > 1e-12:
            plan[c] = alloc
            remaining -= alloc
        if remaining <= 1e-12:
            break
    deliveries = dict(route.deliveries)
    deliveries[scenario_idx] = plan
    return replace(route, deliveries=deliveries)


def validate_route(route: DroneRoute, inst: Instance, n_scenarios: int) -> list[str]:
    """Model-free feasibility check of one route; empty list when valid.

    Travel times are recomputed from coordinates so the check shares
    nothing with the pricing model.
    """
    from .model import geodesic_minutes

    problems = []
    if len(set(route.sequence)) != len(route.sequence):
        problems.append(f"route at {route.satellite} revisits a community")
    spos = inst.node_latlon(route.satellite)
    elapsed = 0.0
    prev = spos
    for c, tbar in zip(route.sequence, route.visit_times):
        pos = inst.node_latlon(c)
        elapsed += geodesic_minutes(prev, pos, inst.drone_speed)
        if abs(elapsed - tbar) > 1e-6:
            problems.append(f"route at {route.satellite}: visit time of {c} is {tbar}, expected {elapsed}")
        prev = pos
    if route.sequence:
        elapsed += geodesic_minutes(prev, spos, inst.drone_speed)
    if abs(elapsed - route.duration) > 1e-6:
        problems.append(f"route at {route.satellite}: duration {route.duration}, expected {elapsed}")
    if route.duration > inst.flying_range + 1e-6:
        problems.append(f"route at {route.satellite}: duration {route.duration} exceeds range")
    for w in range(n_scenarios):
        plan = route.deliveries.get(w)
        if plan is None:
            problems.append(f"route at {route.satellite}: no delivery plan for scenario {w}")
            continue
        total = 0.0
        for c, qty in plan.items():
            if c not in route.coverage:
                problems.append(f"route at {route.satellite}: delivers to unvisited {c} in scenario {w}")
            if qty < -1e-9:
                problems.append(f"route at {route.satellite}: negative delivery in scenario {w}")
            total += qty
        if total > inst.max_load + 1e-6:
            problems.append(
                f"route at {route.satellite}: scenario {w} load {total} exceeds {inst.max_load}")
    return problems


def singleton_route(inst: Instance, reach: Reachability, s: int, c: int) -> DroneRoute:
    """Out-and-back flight to one community, with no delivery plans yet."""
    tau = reach.tau(s, c)
    return DroneRoute(satellite=s, slot=0, sequence=(c,), duration=2.0 * tau,
                      visit_times=(tau,), deliveries={})
