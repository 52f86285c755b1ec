import math

from droneaid.model import Community, Instance, Satellite, TruckEdge, default_big_m

BASE_LAT = 18.0
BASE_LON = -66.0
DEG_PER_MILE = 180.0 / (math.pi * 3958.8)


def place(x_miles: float, y_miles: float) -> tuple[float, float]:
    """Plane-like coordinates: x east, y north, in miles from a base point."""
    lat = BASE_LAT + y_miles * DEG_PER_MILE
    lon = BASE_LON + x_miles * DEG_PER_MILE / math.cos(math.radians(BASE_LAT))
    return lat, lon


def build_instance(sat_pos, comm_pos, edges, *, demands=None, deviations=None,
                   shortage=None, regions=None, delay=1.0, miss=10000.0,
                   trucks=2, drones=2, flying_range=35.0, max_load=25.0,
                   gamma_total=None, gamma_region=None, epsilon=1.0, speed=60.0):
    """Instance from mile-grid positions; node ids: satellites first, then communities.

    ``edges`` are (i, j, minutes) with node 0 the depot at the origin.
    """
    n_s, n_c = len(sat_pos), len(comm_pos)
    demands = demands or [5.0] * n_c
    deviations = deviations if deviations is not None else [2.5] * n_c
    shortage = shortage or [100.0] * n_c
    regions = regions or [0] * n_c
    sats = tuple(Satellite(1 + k, *place(*pos)) for k, pos in enumerate(sat_pos))
    comms = tuple(
        Community(1 + n_s + k, *place(*pos), regions[k], demands[k], deviations[k],
                  delay, miss, shortage[k])
        for k, pos in enumerate(comm_pos)
    )
    truck_edges = tuple(TruckEdge(min(i, j), max(i, j), float(t)) for i, j, t in edges)
    if gamma_total is None:
        gamma_total = n_c
    if gamma_region is None:
        gamma_region = {a: sum(1 for r in regions if r == a) for a in set(regions)}
    depot_lat, depot_lon = place(0.0, 0.0)
    return Instance(
        depot_lat=depot_lat, depot_lon=depot_lon, satellites=sats, communities=comms,
        truck_edges=truck_edges, drone_speed=speed, truck_speed=speed,
        flying_range=flying_range, max_load=max_load, num_trucks=trucks,
        drones_per_truck=drones, gamma_total=gamma_total, gamma_region=gamma_region,
        epsilon=epsilon,
        big_m=default_big_m(truck_edges, drones, flying_range, n_s),
    )
