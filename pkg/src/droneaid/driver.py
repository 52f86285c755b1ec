"""Full solve loop: column-and-constraint generation over demand scenarios.

Each outer iteration prices new drone routes against the relaxed master
until no improving column remains, solves the master integrally with
relax-and-fix to refresh the lower bound, asks the adversary for the
worst-case demand scenario of that plan to refresh the upper bound, and
stops once the bounds meet within the configured tolerance.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

from .evaluate import EvalResult, check_solution, solution_record
from .master import (
    MasterSolution,
    build_master,
    delivered_quantities,
    lower_bound,
    solve_relax_and_fix,
    solve_relaxed,
)
from .model import Instance, Reachability, build_reachability
from .pricing import RC_TOL, DroneRoute, extend_deliveries, generate_columns, singleton_route
from .scenariogen import Scenario, build_worst_case, nominal_scenario, solve_worst_case

logger = logging.getLogger("droneaid.driver")


class DriverError(Exception):
    pass


@dataclass
class RunConfig:
    epsilon: float | None = None      # $ tolerance; defaults to the instance value
    max_outer: int = 25
    max_cg_rounds: int = 50
    time_limit: float | None = None   # wall-clock seconds
    seed: int = 0

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer < 1 or self.max_cg_rounds < 1:
            raise ValueError("iteration limits must be positive")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time limit must be positive")


@dataclass
class IterationRecord:
    n: int
    lb: float
    ub: float
    n_scenarios: int
    columns_added: int
    wall_seconds: float
    lp_objectives: list[float] = field(default_factory=list)   # relaxed obj per CG round


@dataclass
class Metrics:
    cost: float
    cpu_seconds: float
    wall_seconds: float
    n_scenarios: int
    unfulfilled_pct: float
    avg_delay: float


@dataclass
class RunReport:
    status: str                       # converged | limit | stalled
    iterations: list[IterationRecord]
    scenarios: list[Scenario]
    solution: MasterSolution
    lb: float
    ub: float
    wall_seconds: float
    metrics: Metrics
    evaluation: EvalResult
    lb_decreases: list[int] = field(default_factory=list)   # outer iterations where LB fell
    crossings: list[int] = field(default_factory=list)      # outer iterations with LB > UB
    pools: dict[int, list[DroneRoute]] = field(default_factory=dict)


def check_termination(lb: float, ub: float, epsilon: float) -> bool:
    """Stop once the bound gap closes to the tolerance (inclusive)."""
    return ub - lb <= epsilon


def initial_routes(inst: Instance, reach: Reachability,
                   scenarios) -> dict[int, list[DroneRoute]]:
    """Seed pools: out-and-back flights to each satellite's nearest communities."""
    pools: dict[int, list[DroneRoute]] = {}
    for s in inst.satellite_ids:
        nearest = sorted(reach.reachable[s], key=lambda c: (reach.tau(s, c), c))
        pool = []
        for c in nearest[:inst.drones_per_truck]:
            route = singleton_route(inst, reach, s, c)
            for w, sc in enumerate(scenarios):
                route = extend_deliveries(route, w, sc, inst)
            pool.append(route)
        pools[s] = pool
    return pools


def run(inst: Instance, cfg: RunConfig | None = None) -> RunReport:
    """Solve one instance end to end; see the module docstring for the loop."""
    cfg = cfg or RunConfig()
    epsilon = cfg.epsilon if cfg.epsilon is not None else inst.epsilon
    t_start = time.monotonic()
    cpu_start = time.process_time()

    def out_of_time() -> bool:
        return cfg.time_limit is not None and time.monotonic() - t_start > cfg.time_limit

    reach = build_reachability(inst)
    scenarios: list[Scenario] = [nominal_scenario(inst)]
    pools = initial_routes(inst, reach, scenarios)
    seen_scenarios = {scenarios[0].deviated}

    lb, ub = 0.0, math.inf
    status = "limit"
    iterations: list[IterationRecord] = []
    lb_decreases: list[int] = []
    crossings: list[int] = []
    sol: MasterSolution | None = None

    for n in range(1, cfg.max_outer + 1):
        t_iter = time.monotonic()
        lp_objectives: list[float] = []
        columns_added = 0
        known = {r.key() for pool in pools.values() for r in pool}

        for _round in range(cfg.max_cg_rounds):
            mm = build_master(inst, reach, pools, scenarios)
            lp, duals = solve_relaxed(mm)
            lp_objectives.append(lp.objective)
            added = 0
            for s in inst.satellite_ids:
                for route in generate_columns(inst, reach, s, duals, scenarios,
                                              inst.drones_per_truck):
                    if route.reduced_cost is None or route.reduced_cost >= -RC_TOL:
                        continue
                    key = route.key()
                    if key in known:
                        continue
                    known.add(key)
                    pools[s].append(route)
                    added += 1
            columns_added += added
            if added == 0 or out_of_time():
                break

        mm = build_master(inst, reach, pools, scenarios)
        sol = solve_relax_and_fix(mm, warm=sol)
        new_lb = lower_bound(sol, inst)
        if iterations and new_lb < iterations[-1].lb - 1e-6:
            lb_decreases.append(n)
            logger.warning("outer=%d lower bound fell from %.4f to %.4f",
                           n, iterations[-1].lb, new_lb)
        lb = new_lb

        table = delivered_quantities(sol, pools, scenarios)
        worst = solve_worst_case(build_worst_case(inst, table))
        delay, miss = sol.stage_cost(inst)
        ub = min(ub, delay + miss + worst.objective)
        if lb > ub + 1e-6:
            crossings.append(n)
            logger.warning("outer=%d bounds crossed: lb=%.4f ub=%.4f", n, lb, ub)

        iterations.append(IterationRecord(
            n=n, lb=lb, ub=ub, n_scenarios=len(scenarios),
            columns_added=columns_added,
            wall_seconds=time.monotonic() - t_iter,
            lp_objectives=lp_objectives,
        ))
        logger.info("outer=%d lb=%.2f ub=%.2f scenarios=%d columns=%d wall=%.2fs",
                    n, lb, ub, len(scenarios), columns_added,
                    time.monotonic() - t_iter)

        if check_termination(lb, ub, epsilon):
            status = "converged"
            break
        if out_of_time():
            status = "limit"
            break
        if worst.scenario.deviated in seen_scenarios:
            # cannot happen with exact bounds: the master already prices
            # this scenario, so ub <= lb; kept as a numerical guard
            status = "stalled"
            logger.warning("outer=%d worst-case scenario already present; stopping", n)
            break
        seen_scenarios.add(worst.scenario.deviated)
        scenarios.append(worst.scenario)
        w_new = len(scenarios) - 1
        pools = {
            s: [extend_deliveries(r, w_new, worst.scenario, inst) for r in pool]
            for s, pool in pools.items()
        }

    if sol is None:
        raise DriverError("no iteration completed; raise the limits")

    evaluation = check_solution(inst, scenarios, solution_record(sol, len(scenarios)))
    if not evaluation.ok:
        raise DriverError("final solution failed re-evaluation: "
                          + "; ".join(evaluation.violations[:5]))
    wall = time.monotonic() - t_start
    metrics = Metrics(
        cost=evaluation.cost,
        cpu_seconds=time.process_time() - cpu_start,
        wall_seconds=wall,
        n_scenarios=len(scenarios),
        unfulfilled_pct=evaluation.unfulfilled_pct,
        avg_delay=evaluation.avg_delay,
    )
    return RunReport(
        status=status, iterations=iterations, scenarios=scenarios, solution=sol,
        lb=lb, ub=ub, wall_seconds=wall, metrics=metrics, evaluation=evaluation,
        lb_decreases=lb_decreases, crossings=crossings, pools=pools,
    )
