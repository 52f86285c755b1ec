"""Problem data model: instances, geometry, and drone reachability.

An :class:`Instance` holds the full problem datum for one planning run:
the truck network (depot + satellite stations + surviving road edges),
the affected communities with their demand data and penalty costs, the
fleet description, and the uncertainty budgets. Instances are immutable
after construction and safe to share between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

EARTH_RADIUS_MILES = 3958.8

DEPOT = 0


def haversine_miles(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in miles between two (lat, lon) points in degrees."""
    for v in (lat1, lon1, lat2, lon2):
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate: {v!r}")
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(a)))


def geodesic_minutes(p: tuple[float, float], q: tuple[float, float], speed_mph: float) -> float:
    """Travel time in minutes between points ``p`` and ``q`` at a constant speed.

    ``p`` and ``q`` are (latitude, longitude) pairs in degrees.
    """
    if not (speed_mph > 0.0) or not math.isfinite(speed_mph):
        raise ValueError(f"speed must be positive and finite, got {speed_mph!r}")
    return haversine_miles(p[0], p[1], q[0], q[1]) / speed_mph * 60.0


@dataclass(frozen=True)
class Satellite:
    id: int
    lat: float
    lon: float


@dataclass(frozen=True)
class Community:
    id: int
    lat: float
    lon: float
    region: int
    nominal_demand: float       # units requested absent any deviation
    max_deviation: float        # additional units when the community deviates
    delay_cost: float           # $ per minute until service
    miss_cost: float            # $ if never reached
    shortage_cost: float        # $ per undelivered unit


@dataclass(frozen=True)
class TruckEdge:
    i: int
    j: int
    minutes: float              # truck traversal time, either direction


@dataclass(frozen=True)
class Instance:
    """Immutable problem instance. Node id 0 is the depot."""

    depot_lat: float
    depot_lon: float
    satellites: tuple[Satellite, ...]
    communities: tuple[Community, ...]
    truck_edges: tuple[TruckEdge, ...]   # undirected, stored with i < j
    drone_speed: float                   # mph
    truck_speed: float                   # mph
    flying_range: float                  # minutes a drone may stay airborne
    max_load: float                      # units a drone can carry
    num_trucks: int
    drones_per_truck: int
    gamma_total: int                     # communities that may deviate at once
    gamma_region: dict[int, int]         # per-region deviation budgets
    epsilon: float                       # $ convergence tolerance
    big_m: float                         # minutes, bounds any truck arrival time

    def __post_init__(self):
        object.__setattr__(self, "_comm_by_id", {c.id: c for c in self.communities})
        object.__setattr__(self, "_sat_by_id", {s.id: s for s in self.satellites})

    # -- lookups ---------------------------------------------------------

    def community(self, cid: int) -> Community:
        return self._comm_by_id[cid]

    def satellite(self, sid: int) -> Satellite:
        return self._sat_by_id[sid]

    @property
    def community_ids(self) -> list[int]:
        return [c.id for c in self.communities]

    @property
    def satellite_ids(self) -> list[int]:
        return [s.id for s in self.satellites]

    @property
    def regions(self) -> list[int]:
        return sorted({c.region for c in self.communities})

    def communities_in_region(self, region: int) -> list[int]:
        return [c.id for c in self.communities if c.region == region]

    def node_latlon(self, node: int) -> tuple[float, float]:
        if node == DEPOT:
            return (self.depot_lat, self.depot_lon)
        if node in self._sat_by_id:
            s = self._sat_by_id[node]
            return (s.lat, s.lon)
        c = self._comm_by_id[node]
        return (c.lat, c.lon)

    def directed_truck_arcs(self) -> list[tuple[int, int, float]]:
        """Both orientations of every truck edge, as (i, j, minutes)."""
        arcs = []
        for e in self.truck_edges:
            arcs.append((e.i, e.j, e.minutes))
            arcs.append((e.j, e.i, e.minutes))
        return arcs


def default_big_m(truck_edges, drones_per_truck: int, flying_range: float, n_satellites: int) -> float:
    # Upper bound on any truck arrival time: traverse every road edge once
    # and sit out a full drone flight window at every satellite.
    return sum(e.minutes for e in truck_edges) + drones_per_truck * flying_range * n_satellites


@dataclass(frozen=True)
class Reachability:
    """Per-satellite reachable community sets and drone travel times.

    ``reachable[s]`` lists the communities whose out-and-back flight from
    satellite ``s`` fits within the flying range. ``minutes`` holds drone
    travel times for every node pair needed by route generation at any
    satellite (keyed with the smaller id first).
    """

    flying_range: float
    reachable: dict[int, tuple[int, ...]]
    minutes: dict[tuple[int, int], float]

    def tau(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        key = (a, b) if a < b else (b, a)
        return self.minutes[key]

    def covered_communities(self) -> set[int]:
        out: set[int] = set()
        for cs in self.reachable.values():
            out.update(cs)
        return out


def build_reachability(inst: Instance) -> Reachability:
    """Compute reachable sets: c is reachable from s iff the round trip fits.

    Multi-stop feasibility is left to route generation; this is the loosest
    superset of communities a drone from s could ever serve.
    """
    reachable: dict[int, tuple[int, ...]] = {}
    minutes: dict[tuple[int, int], float] = {}

    def record(a: int, b: int, t: float) -> None:
        key = (a, b) if a < b else (b, a)
        minutes[key] = t

    for s in inst.satellites:
        cs = []
        for c in inst.communities:
            t = geodesic_minutes((s.lat, s.lon), (c.lat, c.lon), inst.drone_speed)
            if 2.0 * t <= inst.flying_range:
                cs.append(c.id)
                record(s.id, c.id, t)
        cs.sort()
        reachable[s.id] = tuple(cs)
        # community-pair times within this satellite's neighborhood
        for a_pos, a in enumerate(cs):
            ca = inst.community(a)
            for b in cs[a_pos + 1:]:
                cb = inst.community(b)
                record(a, b, geodesic_minutes((ca.lat, ca.lon), (cb.lat, cb.lon), inst.drone_speed))
    return Reachability(flying_range=inst.flying_range, reachable=reachable, minutes=minutes)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)


def validate_instance(inst: Instance) -> ValidationReport:
    """Check instance invariants; returns a report rather than raising."""
    rep = ValidationReport()
    sat_ids = set(inst.satellite_ids)
    comm_ids = set(inst.community_ids)

    if sat_ids & comm_ids or DEPOT in sat_ids or DEPOT in comm_ids:
        rep.add("node ids must be distinct across depot, satellites, communities")
    for v, name in [(inst.depot_lat, "depot_lat"), (inst.depot_lon, "depot_lon")]:
        if not math.isfinite(v):
            rep.add(f"{name} is not finite")

    truck_nodes = sat_ids | {DEPOT}
    adj: dict[int, set[int]] = {n: set() for n in truck_nodes}
    for e in inst.truck_edges:
        if e.i not in truck_nodes or e.j not in truck_nodes:
            rep.add(f"truck edge ({e.i},{e.j}) has an endpoint that is not depot or satellite")
            continue
        if e.minutes < 0 or not math.isfinite(e.minutes):
            rep.add(f"truck edge ({e.i},{e.j}) has invalid travel time {e.minutes}")
        adj[e.i].add(e.j)
        adj[e.j].add(e.i)
    # connectivity from the depot
    seen = {DEPOT}
    stack = [DEPOT]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    for s in sorted(sat_ids - seen):
        rep.add(f"satellite {s} is unreachable from the depot on the truck network")

    if not inst.flying_range > 0:
        rep.add(f"flying_range must be positive, got {inst.flying_range}")
    if not inst.max_load > 0:
        rep.add(f"max_load must be positive, got {inst.max_load}")
    if inst.num_trucks < 1:
        rep.add(f"num_trucks must be at least 1, got {inst.num_trucks}")
    if inst.drones_per_truck < 1:
        rep.add(f"drones_per_truck must be at least 1, got {inst.drones_per_truck}")
    if not inst.drone_speed > 0:
        rep.add(f"drone_speed must be positive, got {inst.drone_speed}")
    if not inst.truck_speed > 0:
        rep.add(f"truck_speed must be positive, got {inst.truck_speed}")
    if not inst.epsilon > 0:
        rep.add(f"epsilon must be positive, got {inst.epsilon}")

    for c in inst.communities:
        if c.nominal_demand < 0:
            rep.add(f"community {c.id}: nominal_demand negative")
        if c.max_deviation < 0:
            rep.add(f"community {c.id}: max_deviation negative")
        if c.delay_cost < 0 or c.miss_cost < 0 or c.shortage_cost < 0:
            rep.add(f"community {c.id}: costs must be nonnegative")
        if not (math.isfinite(c.lat) and math.isfinite(c.lon)):
            rep.add(f"community {c.id}: non-finite coordinates")

    # region budgets
    regions_present = {c.region for c in inst.communities}
    for a in sorted(regions_present):
        size = len(inst.communities_in_region(a))
        budget = inst.gamma_region.get(a)
        if budget is None:
            rep.add(f"region {a}: missing deviation budget")
        elif not (0 <= budget <= size):
            rep.add(f"region {a}: budget {budget} outside [0, {size}]")
    for a in inst.gamma_region:
        if a not in regions_present:
            rep.add(f"region {a}: budget given but region has no communities")
    if not (0 <= inst.gamma_total <= len(inst.communities)):
        rep.add(f"gamma_total {inst.gamma_total} outside [0, {len(inst.communities)}]")

    # big_m must dominate any possible truck arrival time
    arrival_bound = sum(e.minutes for e in inst.truck_edges) + inst.flying_range * len(inst.satellites)
    if inst.big_m < arrival_bound:
        rep.add(f"big_m {inst.big_m} below the arrival-time bound {arrival_bound:.3f}")
    return rep
