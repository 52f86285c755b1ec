import math

import pytest

from droneaid.driver import RunConfig, check_termination, initial_routes, run
from droneaid.model import build_reachability
from droneaid.pricing import validate_route
from droneaid.scenariogen import in_uncertainty_set, nominal_scenario

from conftest import build_instance


def test_check_termination_rules():
    assert check_termination(10.0, 10.0, 1.0)           # equal bounds
    assert check_termination(10.0, 11.0, 1.0)           # gap == epsilon, inclusive
    assert not check_termination(10.0, 11.0 + 1e-3, 1.0)


def test_initial_routes_empty_when_unreachable():
    inst = build_instance([(0.0, 10.0)], [(0.0, 40.0)], [(0, 1, 10.0)])
    reach = build_reachability(inst)
    pools = initial_routes(inst, reach, [nominal_scenario(inst)])
    assert pools[1] == []


def test_initial_routes_out_and_back():
    inst = build_instance([(0.0, 10.0)], [(0.0, 20.0)], [(0, 1, 10.0)])
    reach = build_reachability(inst)
    pools = initial_routes(inst, reach, [nominal_scenario(inst)])
    (route,) = pools[1]
    assert route.duration == pytest.approx(20.0, abs=1e-9)
    assert route.visit_times == (pytest.approx(10.0, abs=1e-9),)
    assert route.deliveries[0] == {2: 5.0}


def test_initial_routes_nearest_k_and_valid():
    inst = build_instance(
        [(0.0, 10.0)],
        [(0.0, 14.0), (1.0, 12.0), (4.0, 10.0), (0.0, 22.0), (3.0, 13.0)],
        [(0, 1, 10.0)],
        drones=3,
    )
    reach = build_reachability(inst)
    scen = [nominal_scenario(inst)]
    pools = initial_routes(inst, reach, scen)
    assert len(pools[1]) == 3
    taus = [reach.tau(1, r.sequence[0]) for r in pools[1]]
    others = [reach.tau(1, c) for c in reach.reachable[1]
              if c not in {r.sequence[0] for r in pools[1]}]
    assert max(taus) <= min(others) + 1e-9
    for r in pools[1]:
        assert validate_route(r, inst, 1) == []


def test_zero_demand_zero_miss_converges_first_iteration():
    # no demand means the adversary adds nothing; free misses make cost 0
    inst = build_instance([(0.0, 10.0)], [(0.0, 14.0), (2.0, 12.0)],
                          [(0, 1, 10.0)], demands=[0.0, 0.0], deviations=[0.0, 0.0],
                          miss=0.0)
    rep = run(inst, RunConfig(epsilon=1.0))
    assert rep.status == "converged"
    assert len(rep.iterations) == 1
    assert rep.metrics.cost == pytest.approx(0.0, abs=1e-9)
    assert rep.metrics.n_scenarios == 1


def test_single_community_two_iterations_hand_trace():
    # iteration 1: nominal plan leaves the deviation uncovered, so the
    # adversary deviates the community; iteration 2: the extended plan
    # absorbs it and the bounds meet
    inst = build_instance([(0.0, 10.0)], [(0.0, 14.0)], [(0, 1, 10.0)],
                          demands=[10.0], deviations=[5.0], shortage=[100.0],
                          max_load=25.0, trucks=1, drones=1,
                          gamma_total=1, gamma_region={0: 1})
    rep = run(inst, RunConfig(epsilon=1.0))
    assert rep.status == "converged"
    assert len(rep.iterations) == 2
    assert rep.metrics.n_scenarios == 2
    assert rep.scenarios[1].deviated == (1,)
    # both scenarios fully served at the end
    assert rep.metrics.unfulfilled_pct == pytest.approx(0.0, abs=1e-9)
    # cost is the pure delay of the out-and-back service: T_s + flight leg
    assert rep.metrics.cost == pytest.approx(14.0, abs=1e-4)
    assert rep.iterations[0].ub - rep.iterations[0].lb > 1.0


def test_run_report_invariants_seeded():
    from droneaid.instgen import GenSpec, generate

    inst = generate(GenSpec(seed=2, n_communities=12, n_satellites=5, drones_per_truck=3))
    rep = run(inst, RunConfig(epsilon=1.0, max_outer=15))
    assert rep.status == "converged"
    assert rep.ub - rep.lb <= 1.0 + 1e-9
    # upper bound never increases
    ubs = [it.ub for it in rep.iterations]
    assert all(b <= a + 1e-9 for a, b in zip(ubs, ubs[1:]))
    # scenario set grows by one per non-terminal iteration, all members distinct
    assert rep.metrics.n_scenarios == len(rep.scenarios)
    assert len(rep.scenarios) == len(rep.iterations)   # one added before each new pass
    seen = {sc.deviated for sc in rep.scenarios}
    assert len(seen) == len(rep.scenarios)
    for sc in rep.scenarios:
        assert in_uncertainty_set(inst, sc.deviated)
    # relaxed master objective is non-increasing within each iteration
    for it in rep.iterations:
        for a, b in zip(it.lp_objectives, it.lp_objectives[1:]):
            assert b <= a + 1e-6
    # final cost equals the model-free re-evaluation
    assert rep.metrics.cost == pytest.approx(rep.evaluation.cost, abs=1e-9)
    assert abs(rep.evaluation.cost - rep.solution.objective) <= 1e-4


def test_time_limit_status():
    from droneaid.instgen import GenSpec, generate

    inst = generate(GenSpec(seed=3, n_communities=15, n_satellites=6))
    rep = run(inst, RunConfig(epsilon=1e-12, max_outer=50, time_limit=1e-6))
    assert rep.status in ("limit", "converged", "stalled")
    assert rep.iterations   # at least one full iteration always completes
