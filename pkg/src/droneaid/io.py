"""File schemas and serialization.

Three JSON documents, all carrying ``schema_version``: the instance file
(full problem datum), the report file (bounds trajectory, scenario set,
final solution, metrics), and a human-oriented routes file. Geometry is
exported as GeoJSON so any mapping tool can render the plan. Writers are
deterministic: same object, same bytes.
"""

from __future__ import annotations

import json

from .model import Community, Instance, Satellite, TruckEdge
from .scenariogen import Scenario

SCHEMA_VERSION = 1


class SchemaError(Exception):
    pass


def dump_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise SchemaError(f"{where}: missing field {key!r}")
    return d[key]


# -- instance -------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "instance",
        "depot": {"lat": inst.depot_lat, "lon": inst.depot_lon},
        "satellites": [{"id": s.id, "lat": s.lat, "lon": s.lon} for s in inst.satellites],
        "communities": [
            {
                "id": c.id, "lat": c.lat, "lon": c.lon, "region": c.region,
                "nominal_demand": c.nominal_demand, "max_deviation": c.max_deviation,
                "delay_cost": c.delay_cost, "miss_cost": c.miss_cost,
                "shortage_cost": c.shortage_cost,
            }
            for c in inst.communities
        ],
        "truck_edges": [{"i": e.i, "j": e.j, "minutes": e.minutes} for e in inst.truck_edges],
        "drone_speed_mph": inst.drone_speed,
        "truck_speed_mph": inst.truck_speed,
        "flying_range_minutes": inst.flying_range,
        "max_load": inst.max_load,
        "num_trucks": inst.num_trucks,
        "drones_per_truck": inst.drones_per_truck,
        "gamma_total": inst.gamma_total,
        "gamma_region": {str(a): int(b) for a, b in sorted(inst.gamma_region.items())},
        "epsilon": inst.epsilon,
        "big_m": inst.big_m,
    }


def instance_from_dict(d: dict) -> Instance:
    where = "instance"
    if _need(d, "kind", where) != "instance":
        raise SchemaError(f"{where}: kind is {d['kind']!r}, expected 'instance'")
    if _need(d, "schema_version", where) != SCHEMA_VERSION:
        raise SchemaError(f"{where}: unsupported schema_version {d['schema_version']!r}")
    depot = _need(d, "depot", where)
    try:
        satellites = tuple(Satellite(int(s["id"]), float(s["lat"]), float(s["lon"]))
                           for s in _need(d, "satellites", where))
        communities = tuple(
            Community(int(c["id"]), float(c["lat"]), float(c["lon"]), int(c["region"]),
                      float(c["nominal_demand"]), float(c["max_deviation"]),
                      float(c["delay_cost"]), float(c["miss_cost"]), float(c["shortage_cost"]))
            for c in _need(d, "communities", where)
        )
        edges = tuple(TruckEdge(int(e["i"]), int(e["j"]), float(e["minutes"]))
                      for e in _need(d, "truck_edges", where))
        return Instance(
            depot_lat=float(depot["lat"]), depot_lon=float(depot["lon"]),
            satellites=satellites, communities=communities, truck_edges=edges,
            drone_speed=float(_need(d, "drone_speed_mph", where)),
            truck_speed=float(_need(d, "truck_speed_mph", where)),
            flying_range=float(_need(d, "flying_range_minutes", where)),
            max_load=float(_need(d, "max_load", where)),
            num_trucks=int(_need(d, "num_trucks", where)),
            drones_per_truck=int(_need(d, "drones_per_truck", where)),
            gamma_total=int(_need(d, "gamma_total", where)),
            gamma_region={int(a): int(b) for a, b in _need(d, "gamma_region", where).items()},
            epsilon=float(_need(d, "epsilon", where)),
            big_m=float(_need(d, "big_m", where)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: malformed field ({exc})") from exc


def write_instance(inst: Instance, path) -> None:
    dump_json(instance_to_dict(inst), path)


def read_instance(path) -> Instance:
    return instance_from_dict(load_json(path))


# -- report ---------------------------------------------------------------

def report_to_dict(report, record: dict) -> dict:
    """Report document; ``record`` is the solution record (see evaluate)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "report",
        "status": report.status,
        "lb": report.lb,
        "ub": report.ub,
        "wall_seconds": report.wall_seconds,
        "iterations": [
            {
                "n": it.n, "lb": it.lb, "ub": it.ub, "n_scenarios": it.n_scenarios,
                "columns_added": it.columns_added, "wall_seconds": it.wall_seconds,
                "lp_objectives": list(it.lp_objectives),
            }
            for it in report.iterations
        ],
        "scenarios": [
            {"deviated": list(sc.deviated), "demands": list(sc.demands), "tag": sc.tag}
            for sc in report.scenarios
        ],
        "solution": record,
        "metrics": {
            "cost": report.metrics.cost,
            "cpu_seconds": report.metrics.cpu_seconds,
            "wall_seconds": report.metrics.wall_seconds,
            "n_scenarios": report.metrics.n_scenarios,
            "unfulfilled_pct": report.metrics.unfulfilled_pct,
            "avg_delay": report.metrics.avg_delay,
        },
        "lb_decreases": list(report.lb_decreases),
        "crossings": list(report.crossings),
    }


def read_report(path) -> dict:
    d = load_json(path)
    if _need(d, "kind", "report") != "report":
        raise SchemaError(f"report: kind is {d['kind']!r}, expected 'report'")
    if _need(d, "schema_version", "report") != SCHEMA_VERSION:
        raise SchemaError(f"report: unsupported schema_version {d['schema_version']!r}")
    for key in ("status", "lb", "ub", "scenarios", "solution", "metrics"):
        _need(d, key, "report")
    return d


def scenarios_from_report(d: dict) -> list[Scenario]:
    return [Scenario(deviated=tuple(int(y) for y in sc["deviated"]),
                     demands=tuple(float(q) for q in sc["demands"]),
                     tag=str(sc["tag"]))
            for sc in d["scenarios"]]


# -- routes view ----------------------------------------------------------

def _truck_tours(record: dict) -> list[list[int]]:
    """Split the used arcs into per-truck tours starting at the depot."""
    remaining = [tuple(a) for a in record["truck_arcs"]]
    tours = []
    while True:
        start = next((a for a in remaining if a[0] == 0), None)
        if start is None:
            break
        tour = [0]
        node = start[1]
        remaining.remove(start)
        tour.append(node)
        while node != 0:
            nxt = next((a for a in remaining if a[0] == node), None)
            if nxt is None:
                break
            remaining.remove(nxt)
            node = nxt[1]
            tour.append(node)
        tours.append(tour)
    return tours


def routes_to_dict(record: dict, scenarios: list[Scenario]) -> dict:
    arrivals = {int(s): float(v) for s, v in record["arrivals"].items()}
    idles = {int(s): float(v) for s, v in record["idles"].items()}
    tours = []
    for k, tour in enumerate(_truck_tours(record)):
        stops = []
        for node in tour:
            arrive = 0.0 if node == 0 else arrivals.get(node, 0.0)
            depart = arrive + (0.0 if node == 0 else idles.get(node, 0.0))
            stops.append({"node": node, "arrive_minutes": arrive, "depart_minutes": depart})
        tours.append({"truck": k, "stops": stops})
    flights = []
    for r in record["routes"]:
        s = int(r["satellite"])
        launch = arrivals.get(s, 0.0)
        visits = []
        for c, tbar in zip(r["sequence"], r["visit_times"]):
            visits.append({
                "community": int(c),
                "arrive_minutes": launch + float(tbar),
                "deliveries_by_scenario": [
                    float(plan.get(str(c), 0.0)) for plan in r["deliveries"]
                ],
            })
        flights.append({
            "satellite": s,
            "slot": int(r["slot"]),
            "launch_minutes": launch,
            "return_minutes": launch + float(r["duration"]),
            "visits": visits,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "routes",
        "truck_tours": tours,
        "drone_flights": flights,
        "scenario_tags": [sc.tag for sc in scenarios],
    }


# -- geometry -------------------------------------------------------------

def geometry_to_dict(inst: Instance, record: dict) -> dict:
    """GeoJSON FeatureCollection of nodes, truck tours, and drone flights."""
    def point(lon, lat, props):
        return {"type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": props}

    features = [point(inst.depot_lon, inst.depot_lat, {"role": "depot", "id": 0})]
    for s in inst.satellites:
        features.append(point(s.lon, s.lat, {"role": "satellite", "id": s.id}))
    unreached = {int(c) for c in record["unreached"]}
    for c in inst.communities:
        features.append(point(c.lon, c.lat, {
            "role": "community", "id": c.id, "region": c.region,
            "nominal_demand": c.nominal_demand,
            "reached": c.id not in unreached,
        }))
    for k, tour in enumerate(_truck_tours(record)):
        coords = []
        for node in tour:
            lat, lon = inst.node_latlon(node)
            coords.append([lon, lat])
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"role": "truck_tour", "truck": k},
        })
    for r in record["routes"]:
        s = int(r["satellite"])
        lat, lon = inst.node_latlon(s)
        coords = [[lon, lat]]
        for c in r["sequence"]:
            clat, clon = inst.node_latlon(int(c))
            coords.append([clon, clat])
        coords.append([lon, lat])
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"role": "drone_flight", "satellite": s, "slot": int(r["slot"])},
        })
    return {"type": "FeatureCollection", "features": features}
