import numpy as np
import pytest

from droneaid.linopt import dual_objective
from droneaid.master import (
    MasterError,
    build_master,
    delivered_quantities,
    lower_bound,
    solve_relax_and_fix,
    solve_relaxed,
)
from droneaid.model import build_reachability
from droneaid.pricing import DroneRoute, extend_deliveries, singleton_route
from droneaid.scenariogen import make_scenario, nominal_scenario

from conftest import build_instance


def one_sat_instance(**kw):
    # satellite 10 miles north of the depot, one community 5 miles past it
    return build_instance([(0.0, 10.0)], [(0.0, 15.0)], [(0, 1, 10.0)], **kw)


def pools_with_singleton(inst, reach, scenarios):
    pools = {s: [] for s in inst.satellite_ids}
    for s in inst.satellite_ids:
        for c in reach.reachable[s]:
            r = singleton_route(inst, reach, s, c)
            for w, sc in enumerate(scenarios):
                r = extend_deliveries(r, w, sc, inst)
            pools[s].append(r)
    return pools


def test_no_routes_forces_all_miss():
    inst = one_sat_instance(demands=[6.0], shortage=[50.0])
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    mm = build_master(inst, reach, {1: []}, scenarios)
    sol = solve_relax_and_fix(mm)
    assert sol.unreached == [inst.communities[0].id]
    assert sol.objective == pytest.approx(10000.0 + 50.0 * 6.0, abs=1e-6)


def test_single_route_covers_and_beats_miss():
    inst = one_sat_instance(demands=[6.0], shortage=[50.0])
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)
    sol = solve_relax_and_fix(mm)
    assert sol.unreached == []
    assert len(sol.selected) == 1
    assert sol.recourse_cost == pytest.approx(0.0, abs=1e-6)
    # truck arrives at 10 min, flies 5 min out: service at 15, delay $15
    assert sol.objective == pytest.approx(15.0, abs=1e-5)
    assert lower_bound(sol, inst) == pytest.approx(sol.objective, abs=1e-6)


def test_build_rejects_missing_scenario_plans():
    inst = one_sat_instance()
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst), make_scenario(inst, [1])]
    r = singleton_route(inst, reach, 1, inst.communities[0].id)
    r = extend_deliveries(r, 0, scenarios[0], inst)   # plan for scenario 1 missing
    with pytest.raises(MasterError):
        build_master(inst, reach, {1: [r]}, scenarios)


def test_build_rejects_out_of_range_route():
    inst = one_sat_instance()
    reach = build_reachability(inst)
    bad = DroneRoute(satellite=1, slot=0, sequence=(999,), duration=1.0,
                     visit_times=(0.5,), deliveries={0: {}})
    with pytest.raises(MasterError):
        build_master(inst, reach, {1: [bad]}, [nominal_scenario(inst)])


def test_model_size_matches_closed_form():
    inst = build_instance(
        [(0.0, 10.0), (6.0, 10.0)],
        [(0.0, 14.0), (6.0, 14.0), (3.0, 12.0)],
        [(0, 1, 10.0), (0, 2, 12.0), (1, 2, 7.0)],
        drones=2,
    )
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst), make_scenario(inst, [1, 0, 0])]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)

    S = len(inst.satellites)
    C = len(inst.communities)
    W = len(scenarios)
    arcs = 2 * len(inst.truck_edges)
    arcs_into_sat = sum(1 for (i, j, _t) in mm.arcs if j != 0)
    md = inst.drones_per_truck
    Z = sum(md * len(p) for p in pools.values())
    pairs = sum(len(reach.reachable[s]) for s in inst.satellite_ids)

    assert mm.model.num_vars == arcs + Z + C + 2 * S + pairs + W * C + 1
    expected_rows = (
        1                      # truck count
        + S                    # flow preservation
        + 2 * arcs_into_sat    # timing, both directions
        + S                    # fleet caps
        + S * md               # slot caps
        + S * md               # idle links
        + C                    # cover-or-miss
        + pairs                # service-time rows
        + W                    # recourse rows
        + W * C                # demand rows
    )
    assert mm.model.num_constrs == expected_rows


def test_relaxed_duals_and_strong_duality():
    inst = build_instance(
        [(0.0, 10.0), (6.0, 10.0)],
        [(0.0, 14.0), (6.0, 14.0), (3.0, 12.0)],
        [(0, 1, 10.0), (0, 2, 12.0), (1, 2, 7.0)],
        drones=2, demands=[6.0, 7.0, 8.0], shortage=[40.0, 60.0, 80.0],
    )
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)
    lp, duals = solve_relaxed(mm)
    assert lp.optimal
    assert abs(lp.objective - dual_objective(mm.model, lp)) <= 1e-6 * (1 + abs(lp.objective))
    # sign conventions
    assert all(v <= 1e-9 for v in duals.fleet.values())
    assert all(v <= 1e-9 for v in duals.slot.values())
    assert all(v <= 1e-9 for v in duals.idle.values())
    assert all(v <= 1e-9 for v in duals.timing.values())
    assert all(v >= -1e-9 for v in duals.demand.values())
    # inactive rows carry zero duals
    for s, row in mm.row_fleet.items():
        con = mm.model.constraints[row]
        activity = sum(coef * lp.x[j] for j, coef in con.terms.items())
        if activity < -1e-5:
            assert abs(lp.duals[row]) <= 1e-7


def test_relax_and_fix_not_below_lp():
    inst = build_instance(
        [(0.0, 10.0), (8.0, 10.0)],
        [(0.0, 14.0), (8.0, 14.0)],
        [(0, 1, 10.0), (0, 2, 12.0), (1, 2, 8.0)],
    )
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)
    lp, _ = solve_relaxed(mm)
    sol = solve_relax_and_fix(mm)
    assert sol.objective >= lp.objective - 1e-6


def test_truck_routes_to_far_satellite():
    # triangle network; only the far satellite has a reachable community.
    # candidate tours: stay home, 0<->1, 0<->2, 0->1->2->0, 0->2->1->0;
    # the cheapest serving tour is the direct loop to satellite 2.
    inst = build_instance(
        [(0.0, 10.0), (0.0, 30.0)],
        [(0.0, 34.0)],
        [(0, 1, 10.0), (1, 2, 20.0), (0, 2, 20.0)],
        trucks=1,
    )
    reach = build_reachability(inst)
    assert reach.reachable[1] == ()
    scenarios = [nominal_scenario(inst)]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)
    sol = solve_relax_and_fix(mm)
    assert sol.unreached == []
    used = set(sol.truck_arcs)
    assert (0, 2) in used and (2, 0) in used
    assert sol.arrivals[2] == pytest.approx(20.0, abs=1e-5)
    assert sol.objective == pytest.approx(24.0, abs=1e-4)


def test_line_network_far_satellite_is_unusable():
    # used truck arcs pin arrival times as equalities, so a tour cannot
    # revisit a node: on a pure line the far satellite cannot be toured
    inst = build_instance(
        [(0.0, 10.0), (0.0, 30.0)],
        [(0.0, 34.0)],
        [(0, 1, 10.0), (1, 2, 20.0)],
        trucks=1,
    )
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)
    sol = solve_relax_and_fix(mm)
    assert sol.unreached == [3]


def test_delivered_quantities_matches_loops():
    inst = build_instance([(0.0, 10.0)], [(0.0, 13.0), (2.0, 12.0)],
                          [(0, 1, 10.0)], drones=2, demands=[5.0, 3.0])
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst), make_scenario(inst, [1, 1])]
    pools = pools_with_singleton(inst, reach, scenarios)
    mm = build_master(inst, reach, pools, scenarios)
    sol = solve_relax_and_fix(mm)
    table = delivered_quantities(sol, pools, scenarios)
    # direct triple-loop evaluation over (slot, community, scenario)
    for s in inst.satellite_ids:
        for ell in range(inst.drones_per_truck):
            for c in inst.community_ids:
                best = 0.0
                for w in range(len(scenarios)):
                    tot = sum(sol.z_values.get((s, ell, p), 0.0) * r.delivered(w, c)
                              for p, r in enumerate(pools[s]))
                    best = max(best, tot)
                assert table.get((s, ell, c), 0.0) == pytest.approx(best, abs=1e-9)


def test_delivered_quantities_zero_when_nothing_selected():
    inst = one_sat_instance()
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    mm = build_master(inst, reach, {1: []}, scenarios)
    sol = solve_relax_and_fix(mm)
    assert delivered_quantities(sol, {1: []}, scenarios) == {}


def test_column_addition_never_raises_lp_objective():
    inst = build_instance([(0.0, 10.0)], [(0.0, 13.0), (2.0, 12.0)],
                          [(0, 1, 10.0)], drones=2)
    reach = build_reachability(inst)
    scenarios = [nominal_scenario(inst)]
    pools = {1: []}
    prev = None
    full = pools_with_singleton(inst, reach, scenarios)[1]
    for k in range(len(full) + 1):
        mm = build_master(inst, reach, {1: full[:k]}, scenarios)
        lp, _ = solve_relaxed(mm)
        if prev is not None:
            assert lp.objective <= prev + 1e-6
        prev = lp.objective


def test_scenario_addition_never_lowers_lp_objective():
    inst = build_instance([(0.0, 10.0)], [(0.0, 13.0), (2.0, 12.0)],
                          [(0, 1, 10.0)], drones=1, demands=[20.0, 20.0],
                          max_load=25.0, shortage=[100.0, 100.0])
    reach = build_reachability(inst)
    pools_base = pools_with_singleton(inst, reach, [nominal_scenario(inst)])
    scenario_sets = [
        [nominal_scenario(inst)],
        [nominal_scenario(inst), make_scenario(inst, [1, 0])],
        [nominal_scenario(inst), make_scenario(inst, [1, 0]), make_scenario(inst, [1, 1])],
    ]
    prev = None
    for scen in scenario_sets:
        pools = {1: []}
        for r in pools_base[1]:
            rr = DroneRoute(satellite=r.satellite, slot=r.slot, sequence=r.sequence,
                            duration=r.duration, visit_times=r.visit_times, deliveries={})
            for w, sc in enumerate(scen):
                rr = extend_deliveries(rr, w, sc, inst)
            pools[1].append(rr)
        mm = build_master(inst, reach, pools, scen)
        lp, _ = solve_relaxed(mm)
        if prev is not None:
            assert lp.objective >= prev - 1e-6
        prev = lp.objective
