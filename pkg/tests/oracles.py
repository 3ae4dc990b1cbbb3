"""Brute-force reference implementations used only by the tests.

Nothing here imports the solver; these are the independent side of every
dual-route check.
"""

from __future__ import annotations

import math
import random


def integral_flows(vertices, edges, supplies, cap_bound=None):
    """Yield every integral flow vector satisfying capacities and conservation.

    ``edges`` is a list of (tail, head, capacity).  Infinite capacities are
    replaced by ``cap_bound``.  A vertex's balance is checked as soon as its
    last incident edge has been assigned, which keeps enumeration cheap on
    the small instances the tests use.
    """
    caps = []
    for _, _, c in edges:
        if math.isinf(c):
            if cap_bound is None:
                raise ValueError("infinite capacity needs cap_bound")
            c = cap_bound
        caps.append(int(c))
    last = {v: -1 for v in vertices}
    for i, (u, w, _) in enumerate(edges):
        last[u] = i
        last[w] = i
    closes = [[] for _ in edges]
    for v, i in last.items():
        if i >= 0:
            closes[i].append(v)
    if any(supplies.get(v, 0) != 0 for v, i in last.items() if i < 0):
        return
    bal = {v: supplies.get(v, 0) for v in vertices}
    x = [0] * len(edges)

    def rec(i):
        if i == len(edges):
            yield tuple(x)
            return
        u, w, _ = edges[i]
        for q in range(caps[i] + 1):
            x[i] = q
            bal[u] -= q
            bal[w] += q
            if all(bal[v] == 0 for v in closes[i]):
                yield from rec(i + 1)
            bal[u] += q
            bal[w] -= q
        x[i] = 0

    yield from rec(0)


def brute_min_cost(vertices, edges, supplies):
    """edges: (tail, head, cost, capacity). Returns (cost, flow) or (None, None)."""
    best, arg = None, None
    for f in integral_flows(vertices, [(u, v, c) for u, v, _, c in edges], supplies):
        cost = sum(e[2] * q for e, q in zip(edges, f))
        if best is None or cost < best:
            best, arg = cost, f
    return best, arg


def random_flow_instance(rng: random.Random, n_vertices=6, n_edges=10, total_cap=12, cost_range=(-3, 6)):
    """Random graph with integral capacities summing to at most ``total_cap``."""
    vertices = list(range(n_vertices))
    edges = []
    budget = total_cap
    for _ in range(n_edges):
        u = rng.randrange(n_vertices)
        v = rng.randrange(n_vertices - 1)
        if v >= u:
            v += 1
        cap = rng.randint(0, min(3, budget)) if budget > 0 else 0
        budget -= cap
        edges.append((u, v, rng.randint(*cost_range), cap))
    # supplies: mostly feasible single-pair transfers, occasionally infeasible ones
    triples = [(u, v, c) for u, v, _, c in edges]
    supplies = {}
    for _ in range(12):
        s, t = rng.sample(vertices, 2)
        amount = rng.randint(1, 4)
        cand = {s: amount, t: -amount}
        if next(integral_flows(vertices, triples, cand), None) is not None or rng.random() < 0.1:
            supplies = cand
            break
    return vertices, edges, supplies


def max_ratio_plan(vertices, edges, supplies, profit_of, time_of, admissible, cap_bound):
    """Max of profit/time over admissible integral flows with time > 0.

    ``edges`` is a list of (tail, head, capacity).  Returns (ratio, flow).
    """
    best, arg = None, None
    for f in integral_flows(vertices, edges, supplies, cap_bound):
        if not admissible(f):
            continue
        t = time_of(f)
        if t <= 0:
            continue
        r = profit_of(f) / t
        if best is None or r > best:
            best, arg = r, f
    return best, arg


def problem_graph(problem):
    """Independent single-commodity encoding of a forward-only problem.

    Returns (vertices, edges, cost, time, supplies, demand_edges, shortfall_edge)
    where ``edges`` holds (tail, head, capacity) triples clamped to the total
    demand, listed in topological order so enumeration prunes early.
    Demand edges carry cost -unit_profit.
    """
    net = problem.network
    order = ["Supplier", "Factory", "DistributionCenter", "Customer"]
    nodes = sorted(net.nodes, key=lambda n: (order.index(n.kind.value), n.id))
    total = int(round(sum(problem.demand.values())))
    profit = {p.id: p.unit_profit for p in problem.products}
    vertices = ["src", "snk"]
    edges, cost, time = [], [], []

    def add(u, v, cap, c, t):
        edges.append((u, v, min(cap, total)))
        cost.append(c)
        time.append(t)

    demand_edges = []
    for t in range(problem.horizon):
        for n in nodes:
            vi, vo = (n.id, t, "i"), (n.id, t, "o")
            vertices += [vi, vo]
            cap = n.capacity
            if n.kind.value == "Supplier":
                add("src", vi, math.inf, 0.0, 0.0)
            add(vi, vo, cap.nominal_upper_bound, n.unit_process_cost, n.unit_process_time)
            spare = cap.maximal - cap.nominal_upper_bound
            if spare > 0:
                add(vi, vo, spare, n.unit_process_cost + cap.expansion_cost, n.unit_process_time)
            for a in net.arcs:
                if a.source == n.id and a.direction.value == "Forward":
                    add(vo, (a.target, t, "i"), a.capacity, a.unit_transport_cost, a.unit_transport_time)
            for (c, p, tt), q in sorted(problem.demand.items()):
                if c == n.id and tt == t and q > 0:
                    demand_edges.append(len(edges))
                    add(vo, "snk", q, -profit[p], 0.0)
    # unserved demand always has an exit; callers filter on served volume
    shortfall_edge = len(edges)
    add("src", "snk", math.inf, 0.0, 0.0)
    supplies = {"src": total, "snk": -total}
    return vertices, edges, cost, time, supplies, demand_edges, shortfall_edge


def brute_plans(problem):
    """Enumerate every integral plan of ``problem`` as (flow, profit, lead_time, served)."""
    vertices, edges, cost, time, supplies, dem, short = problem_graph(problem)
    out = []
    for f in integral_flows(vertices, edges, supplies):
        profit = -sum(c * q for c, q in zip(cost, f))
        lead = sum(t * q for t, q in zip(time, f))
        served = sum(f[i] for i in dem)
        out.append((f, profit, lead, served))
    return out


def admissible_plans(problem, plans):
    """Plans meeting the service requirement: all demand, or the most servable."""
    total = int(round(sum(problem.demand.values())))
    need = total if not problem.allow_shortfall else max(p[3] for p in plans)
    return [p for p in plans if p[3] == need]


def envelope_profit(plans, cap):
    """Best profit at lead time <= cap over the convex hull of the given plans."""
    best = max((p for _, p, l, _ in plans if l <= cap), default=None)
    for _, p1, l1, _ in plans:
        if l1 > cap:
            continue
        for _, p2, l2, _ in plans:
            if l2 > cap:
                a = (l2 - cap) / (l2 - l1)
                v = a * p1 + (1 - a) * p2
                if best is None or v > best:
                    best = v
    return best
