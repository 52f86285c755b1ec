"""Independent brute-force oracles used by the test suite.

These share nothing with the production model builders: route search is
an explicit enumeration over ordered community subsets, with the timing
subsystem checked by a direct scipy LP over the fixed arc choices.
"""

import itertools

import numpy as np
from scipy.optimize import linprog

from droneaid.master import DualPrices


def zero_duals(inst, reach, n_scenarios, num_slots):
    return DualPrices(
        fleet={s: 0.0 for s in inst.satellite_ids},
        slot={(s, ell): 0.0 for s in inst.satellite_ids for ell in range(num_slots)},
        idle={(s, ell): 0.0 for s in inst.satellite_ids for ell in range(num_slots)},
        cover={c.id: 0.0 for c in inst.communities},
        timing={(s, c): 0.0 for s in inst.satellite_ids for c in reach.reachable[s]},
        demand={(w, c.id): 0.0 for w in range(n_scenarios) for c in inst.communities},
        n_scenarios=n_scenarios,
    )


def random_duals(rng, inst, reach, n_scenarios, num_slots, scale=1.0):
    """Random dual values with the sign pattern an optimal LP would produce."""
    return DualPrices(
        fleet={s: -scale * rng.uniform(0, 5) for s in inst.satellite_ids},
        slot={(s, ell): -scale * rng.uniform(0, 5)
              for s in inst.satellite_ids for ell in range(num_slots)},
        idle={(s, ell): -scale * rng.uniform(0, 0.5)
              for s in inst.satellite_ids for ell in range(num_slots)},
        cover={c.id: scale * rng.uniform(-200, 200) for c in inst.communities},
        timing={(s, c): -scale * rng.uniform(0, 0.5)
                for s in inst.satellite_ids for c in reach.reachable[s]},
        demand={(w, c.id): scale * rng.uniform(0, 50)
                for w in range(n_scenarios) for c in inst.communities},
        n_scenarios=n_scenarios,
    )


def _sequence_value(inst, reach, s, allowed, seq, duals, n_scenarios, slot):
    """Reduced cost of one visit order, or None if the timing system is infeasible."""
    W = inst.flying_range
    M = inst.big_m
    rho = duals.idle[(s, slot)]
    duration = 0.0
    prev = s
    for c in seq:
        duration += reach.tau(prev, c)
        prev = c
    if seq:
        duration += reach.tau(prev, s)
    if duration > W + 1e-9:
        return None

    used = set()
    prev = s
    for c in seq:
        used.add((prev, c))
        prev = c
    if seq:
        used.add((prev, s))

    # timing subsystem: variables are arrival times per community plus the
    # return time; departure from the satellite is time 0
    nodes = [s] + list(allowed)
    var_of = {c: k for k, c in enumerate(allowed)}
    ret = len(allowed)
    n_vars = len(allowed) + 1
    cost = np.zeros(n_vars)
    for c in allowed:
        cost[var_of[c]] = -duals.timing[(s, c)]
    A, b = [], []
    for i in nodes:
        for j in nodes:
            if i == j:
                continue
            tau = reach.tau(i, j)
            v = 1.0 if (i, j) in used else 0.0
            jv = ret if j == s else var_of[j]
            lo = np.zeros(n_vars)
            lo[jv] = -1.0
            hi = np.zeros(n_vars)
            hi[jv] = 1.0
            if i != s:
                lo[var_of[i]] = 1.0
                hi[var_of[i]] = -1.0
            A.append(lo)
            b.append(W * (1 - v) - tau)   # t_j >= t_i + tau - W(1-v)
            A.append(hi)
            b.append(tau + W * (1 - v))   # t_j <= t_i + tau + W(1-v)
    res = linprog(cost, A_ub=np.array(A), b_ub=np.array(b),
                  bounds=[(0, None)] * n_vars, method="highs")
    if res.status != 0:
        return None
    value = duals.fleet[s] + duals.slot[(s, slot)]
    value = -value + res.fun
    prev = s
    for c in seq:
        value -= duals.cover[c] + rho * reach.tau(prev, c)
        value -= duals.timing[(s, c)] * M
        prev = c
    # optimal delivery: the whole load to the best-priced visited community
    for w in range(n_scenarios):
        best_beta = max((duals.demand[(w, c)] for c in seq), default=0.0)
        value -= inst.max_load * max(0.0, best_beta)
    return value


def brute_force_pricing(inst, reach, s, allowed, duals, n_scenarios, slot):
    """Minimum reduced cost over every ordered subset of allowed communities."""
    allowed = sorted(allowed)
    best = _sequence_value(inst, reach, s, allowed, (), duals, n_scenarios, slot)
    for k in range(1, len(allowed) + 1):
        for seq in itertools.permutations(allowed, k):
            val = _sequence_value(inst, reach, s, allowed, seq, duals, n_scenarios, slot)
            if val is not None and val < best:
                best = val
    return best
