"""Synthetic instance generation.

Instances mimic a hurricane-struck island: communities sampled in a
Puerto-Rico-sized bounding box (optionally biased toward one quadrant or
loaded from a CSV of real coordinates), demands from normalized
populations, and a partially surviving road network linking the depot to
satellite stations. Everything is a pure function of the seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    Community,
    Instance,
    Satellite,
    TruckEdge,
    default_big_m,
    geodesic_minutes,
)

# bounding box (degrees) approximating the island
LAT_MIN, LAT_MAX = 17.95, 18.45
LON_MIN, LON_MAX = -67.25, -65.60

N_REGIONS = 10
DEMAND_LO, DEMAND_HI = 2.0, 15.0

FOCI = ("nw", "ne", "sw", "se", "uniform")


@dataclass
class GenSpec:
    seed: int = 0
    n_communities: int = 60
    n_satellites: int = 8
    focus: str = "uniform"
    disaster_level: int = 1
    gamma_pct: float = 50.0
    gamma_region_pct: float = 50.0
    num_trucks: int = 4
    drones_per_truck: int = 4
    range_miles: float = 35.0
    drone_speed: float = 60.0
    truck_speed: float = 60.0
    max_load: float = 25.0
    delay_cost: float = 1.0
    miss_cost: float = 10000.0
    shortage_cost_low: float = 10.0
    shortage_cost_high: float = 1000.0
    epsilon: float = 1.0
    coords_csv: str | None = None

    def validate(self) -> None:
        if self.n_communities < 1:
            raise ValueError("need at least one community")
        if self.n_satellites < 1:
            raise ValueError("need at least one satellite")
        if self.focus not in FOCI:
            raise ValueError(f"focus must be one of {FOCI}")
        if self.disaster_level not in (1, 2, 3):
            raise ValueError("disaster level must be 1, 2 or 3")
        for pct in (self.gamma_pct, self.gamma_region_pct):
            if not 0 <= pct <= 100:
                raise ValueError("budget percentages must be in [0, 100]")
        if self.num_trucks < 1 or self.drones_per_truck < 1:
            raise ValueError("fleet counts must be positive")
        if self.range_miles <= 0 or self.max_load <= 0:
            raise ValueError("range and load must be positive")


def load_coordinates_csv(path: str) -> list[tuple[int, float, float, float]]:
    """Read (id, latitude, longitude, population) rows; comma-separated, UTF-8."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != \
                ["id", "latitude", "longitude", "population"]:
            raise ValueError(f"{path}: expected header 'id,latitude,longitude,population'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            try:
                rows.append((int(row[0]), float(row[1]), float(row[2]), float(row[3])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: bad row {row!r}") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def assign_regions(lons) -> list[int]:
    """Ten equal-width longitude bands over the extent; band 0 is easternmost.

    Bands are half-open from the west except the last, so every point
    lands in exactly one band; a degenerate extent collapses to band 0.
    """
    lo, hi = min(lons), max(lons)
    width = (hi - lo) / N_REGIONS
    if width == 0.0:
        return [0 for _ in lons]
    out = []
    for lon in lons:
        from_west = min(N_REGIONS - 1, int((lon - lo) / width))
        out.append(N_REGIONS - 1 - from_west)
    return out


def _deviation_fraction(level: int, region: int) -> float:
    if level == 1:
        return 0.5
    if level == 2:
        # easternmost band deviates most, fading to zero in the west
        return 0.9 - 0.1 * region
    return 0.1 * region


def _sample_positions(rng, spec: GenSpec):
    lat_mid = (LAT_MIN + LAT_MAX) / 2.0
    lon_mid = (LON_MIN + LON_MAX) / 2.0
    boxes = {
        "nw": (lat_mid, LAT_MAX, LON_MIN, lon_mid),
        "ne": (lat_mid, LAT_MAX, lon_mid, LON_MAX),
        "sw": (LAT_MIN, lat_mid, LON_MIN, lon_mid),
        "se": (LAT_MIN, lat_mid, lon_mid, LON_MAX),
    }
    pts = []
    for _ in range(spec.n_communities):
        if spec.focus != "uniform" and rng.random() < 0.75:
            la0, la1, lo0, lo1 = boxes[spec.focus]
        else:
            la0, la1, lo0, lo1 = LAT_MIN, LAT_MAX, LON_MIN, LON_MAX
        pts.append((rng.uniform(la0, la1), rng.uniform(lo0, lo1)))
    return pts


def _normalize_demands(pops) -> list[float]:
    lo, hi = min(pops), max(pops)
    if hi == lo:
        mid = (DEMAND_LO + DEMAND_HI) / 2.0
        return [mid for _ in pops]
    return [DEMAND_LO + (p - lo) / (hi - lo) * (DEMAND_HI - DEMAND_LO) for p in pops]


def _satellite_grid(rng, n: int, lat_lo, lat_hi, lon_lo, lon_hi):
    """Jittered grid over the affected region; wide islands get two rows."""
    rows = 1 if n <= 3 else 2
    cols = math.ceil(n / rows)
    cell_h = (lat_hi - lat_lo) / rows
    cell_w = (lon_hi - lon_lo) / cols
    pts = []
    for k in range(n):
        r, c = divmod(k, cols)
        lat = lat_lo + (r + 0.5) * cell_h + rng.uniform(-0.15, 0.15) * cell_h
        lon = lon_lo + (c + 0.5) * cell_w + rng.uniform(-0.15, 0.15) * cell_w
        pts.append((lat, lon))
    return pts


def _road_network(depot, sat_pts, truck_speed):
    """Ring through depot and satellites plus short chords.

    Arrival times on used arcs are pinned exactly, so feasible truck tours
    are simple depot cycles; the ring guarantees every satellite lies on
    one, and chords add shorter sub-loops.
    """
    nodes = [(0, depot)] + [(k + 1, p) for k, p in enumerate(sat_pts)]
    c_lat = sum(p[0] for _i, p in nodes) / len(nodes)
    c_lon = sum(p[1] for _i, p in nodes) / len(nodes)
    ring = sorted(nodes, key=lambda ip: math.atan2(ip[1][0] - c_lat, ip[1][1] - c_lon))
    edges = set()
    for a, b in zip(ring, ring[1:] + ring[:1]):
        if a[0] != b[0]:
            edges.add((min(a[0], b[0]), max(a[0], b[0])))
    dists = {}
    for i, (ia, pa) in enumerate(nodes):
        for ib, pb in nodes[i + 1:]:
            dists[(ia, ib)] = geodesic_minutes(pa, pb, truck_speed)
    ring_lengths = sorted(dists[e] for e in edges)
    chord_limit = 1.25 * ring_lengths[len(ring_lengths) // 2]   # median ring hop
    for pair, t in dists.items():
        if t <= chord_limit:
            edges.add(pair)
    return [TruckEdge(i, j, dists[(i, j)]) for (i, j) in sorted(edges)]


def generate(spec: GenSpec) -> Instance:
    """Build one instance deterministically from the spec's seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    if spec.coords_csv:
        rows = load_coordinates_csv(spec.coords_csv)
        if len(rows) < spec.n_communities:
            raise ValueError(
                f"{spec.coords_csv}: {len(rows)} rows but {spec.n_communities} communities requested")
        picked = rng.choice(len(rows), size=spec.n_communities, replace=False)
        chosen = [rows[int(k)] for k in sorted(picked)]
        positions = [(lat, lon) for (_i, lat, lon, _p) in chosen]
        pops = [p for (_i, _la, _lo, p) in chosen]
    else:
        positions = _sample_positions(rng, spec)
        pops = rng.lognormal(mean=9.0, sigma=1.0, size=spec.n_communities).tolist()

    demands = _normalize_demands(pops)
    regions = assign_regions([lon for (_la, lon) in positions])
    shortage = rng.uniform(spec.shortage_cost_low, spec.shortage_cost_high,
                           size=spec.n_communities).tolist()

    lat_lo = min(p[0] for p in positions)
    lat_hi = max(p[0] for p in positions)
    lon_lo = min(p[1] for p in positions)
    lon_hi = max(p[1] for p in positions)
    pad_lat = max(0.02, 0.05 * (lat_hi - lat_lo))
    pad_lon = max(0.02, 0.05 * (lon_hi - lon_lo))
    sat_pts = _satellite_grid(rng, spec.n_satellites,
                              lat_lo - pad_lat, lat_hi + pad_lat,
                              lon_lo - pad_lon, lon_hi + pad_lon)
    depot = ((lat_lo + lat_hi) / 2.0, (lon_lo + lon_hi) / 2.0)
    edges = _road_network(depot, sat_pts, spec.truck_speed)

    n_s = spec.n_satellites
    satellites = tuple(Satellite(1 + k, lat, lon) for k, (lat, lon) in enumerate(sat_pts))
    communities = tuple(
        Community(
            id=1 + n_s + k,
            lat=positions[k][0],
            lon=positions[k][1],
            region=regions[k],
            nominal_demand=demands[k],
            max_deviation=_deviation_fraction(spec.disaster_level, regions[k]) * demands[k],
            delay_cost=spec.delay_cost,
            miss_cost=spec.miss_cost,
            shortage_cost=float(shortage[k]),
        )
        for k in range(spec.n_communities)
    )
    gamma_total = int(spec.gamma_pct / 100.0 * spec.n_communities)
    gamma_region = {}
    for a in sorted(set(regions)):
        size = regions.count(a)
        gamma_region[a] = int(spec.gamma_region_pct / 100.0 * size)

    flying_range = spec.range_miles / spec.drone_speed * 60.0
    return Instance(
        depot_lat=depot[0], depot_lon=depot[1],
        satellites=satellites, communities=communities, truck_edges=tuple(edges),
        drone_speed=spec.drone_speed, truck_speed=spec.truck_speed,
        flying_range=flying_range, max_load=spec.max_load,
        num_trucks=spec.num_trucks, drones_per_truck=spec.drones_per_truck,
        gamma_total=gamma_total, gamma_region=gamma_region, epsilon=spec.epsilon,
        big_m=default_big_m(edges, spec.drones_per_truck, flying_range, n_s),
    )
